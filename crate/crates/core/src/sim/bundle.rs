//! Per-frame ground-truth dumps.
//!
//! A bundle file (`<camera>/<index:06>.dsfb`) is little-endian:
//!
//! ```text
//! "DSFB" u8 version=1
//! u32 width, u32 height, u64 frame index, u64 stamp_ns
//! 7 × f64 camera optical pose (px py pz qx qy qz qw)
//! width·height × f32 z-depth (m, 0 = no hit), row-major
//! width·height × u32 instance id (0 = background)
//! u32 box count, then per box:
//!   u32 asset id
//!   u8 has_tight, 4 × u32 tight (x_min y_min x_max y_max)
//!   u8 has_loose, 4 × u32 loose
//!   6 × f64 world AABB (min xyz, max xyz)
//! ```
//!
//! Each camera directory also holds `index.csv` with `index,stamp_ns,file`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Point3;

use super::payload::{pose_from_values, pose_values};
use super::{BoxRecord, PixelBox, SimError};
use crate::geometry::{Aabb, AssetId, Pose};

const MAGIC: &[u8; 4] = b"DSFB";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub camera: String,
    pub index: u64,
    pub stamp_ns: u64,
    pub width: u32,
    pub height: u32,
    pub camera_pose: Pose,
    pub depth: Vec<f32>,
    pub instance: Vec<u32>,
    pub boxes: Vec<BoxRecord>,
}

impl FrameBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width as usize * self.height as usize;
        let mut v = Vec::with_capacity(96 + 8 * n + 80 * self.boxes.len());
        v.extend_from_slice(MAGIC);
        v.push(VERSION);
        v.extend_from_slice(&self.width.to_le_bytes());
        v.extend_from_slice(&self.height.to_le_bytes());
        v.extend_from_slice(&self.index.to_le_bytes());
        v.extend_from_slice(&self.stamp_ns.to_le_bytes());
        for x in pose_values(&self.camera_pose) {
            v.extend_from_slice(&x.to_le_bytes());
        }
        for d in &self.depth {
            v.extend_from_slice(&d.to_le_bytes());
        }
        for id in &self.instance {
            v.extend_from_slice(&id.to_le_bytes());
        }
        v.extend_from_slice(&(self.boxes.len() as u32).to_le_bytes());
        for b in &self.boxes {
            v.extend_from_slice(&b.asset_id.0.to_le_bytes());
            for pb in [b.tight, b.loose] {
                v.push(pb.is_some() as u8);
                let pb = pb.unwrap_or(PixelBox {
                    x_min: 0,
                    y_min: 0,
                    x_max: 0,
                    y_max: 0,
                });
                for x in [pb.x_min, pb.y_min, pb.x_max, pb.y_max] {
                    v.extend_from_slice(&x.to_le_bytes());
                }
            }
            for x in b.aabb.min.iter().chain(b.aabb.max.iter()) {
                v.extend_from_slice(&x.to_le_bytes());
            }
        }
        v
    }

    /// Parses a bundle; the camera name is not stored in the file.
    pub fn from_bytes(camera: &str, bytes: &[u8]) -> Result<Self, SimError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.fail("bad magic"));
        }
        if r.take(1)?[0] != VERSION {
            return Err(r.fail("unsupported version"));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let index = r.u64()?;
        let stamp_ns = r.u64()?;
        let pv: Vec<f64> = (0..7).map(|_| r.f64()).collect::<Result<_, _>>()?;
        let camera_pose = pose_from_values("bundle", &pv).map_err(|e| r.fail(&e.to_string()))?;
        let n = width as usize * height as usize;
        if bytes.len() < r.pos + 8 * n {
            return Err(r.fail("image data truncated"));
        }
        let depth = (0..n).map(|_| r.u32().map(f32::from_bits)).collect::<Result<_, _>>()?;
        let instance = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let count = r.u32()?;
        let mut boxes = Vec::new();
        for _ in 0..count {
            let asset_id = AssetId(r.u32()?);
            let mut pix = [None, None];
            for slot in &mut pix {
                let present = r.take(1)?[0];
                let c = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
                if present == 1 {
                    *slot = Some(PixelBox {
                        x_min: c[0],
                        y_min: c[1],
                        x_max: c[2],
                        y_max: c[3],
                    });
                }
            }
            let a: Vec<f64> = (0..6).map(|_| r.f64()).collect::<Result<_, _>>()?;
            boxes.push(BoxRecord {
                asset_id,
                tight: pix[0],
                loose: pix[1],
                aabb: Aabb::new(Point3::new(a[0], a[1], a[2]), Point3::new(a[3], a[4], a[5])),
            });
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        Ok(Self {
            camera: camera.to_string(),
            index,
            stamp_ns,
            width,
            height,
            camera_pose,
            depth,
            instance,
            boxes,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> SimError {
        SimError::InvalidConfig(format!("frame bundle at byte {}: {msg}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SimError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Receives frame bundles as the simulation produces them.
pub trait FrameSink {
    fn accept(&mut self, bundle: FrameBundle) -> Result<(), SimError>;
}

/// Keeps bundles in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub bundles: Vec<FrameBundle>,
}

impl FrameSink for MemorySink {
    fn accept(&mut self, bundle: FrameBundle) -> Result<(), SimError> {
        self.bundles.push(bundle);
        Ok(())
    }
}

/// Writes one directory per camera under `root`.
pub struct DirSink {
    root: PathBuf,
    indices: BTreeMap<String, BufWriter<File>>,
}

impl DirSink {
    pub fn new(root: impl AsRef<Path>) -> Result<Self, SimError> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
            indices: BTreeMap::new(),
        })
    }

    pub fn flush(&mut self) -> Result<(), SimError> {
        for w in self.indices.values_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl FrameSink for DirSink {
    fn accept(&mut self, bundle: FrameBundle) -> Result<(), SimError> {
        let dir = self.root.join(bundle.camera.replace('/', "_"));
        if !self.indices.contains_key(&bundle.camera) {
            fs::create_dir_all(&dir)?;
            let mut w = BufWriter::new(File::create(dir.join("index.csv"))?);
            writeln!(w, "index,stamp_ns,file")?;
            self.indices.insert(bundle.camera.clone(), w);
        }
        let file = format!("{:06}.dsfb", bundle.index);
        fs::write(dir.join(&file), bundle.to_bytes())?;
        let w = self.indices.get_mut(&bundle.camera).expect("index writer exists");
        writeln!(w, "{},{},{file}", bundle.index, bundle.stamp_ns)?;
        Ok(())
    }
}

impl Drop for DirSink {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("flushing frame bundle index failed: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FrameBundle {
        FrameBundle {
            camera: "low".into(),
            index: 3,
            stamp_ns: 1_000_000_000,
            width: 2,
            height: 2,
            camera_pose: Pose::from_xyz_yaw(1.0, 2.0, 1.5, 0.3),
            depth: vec![0.0, 1.5, 2.0, 0.0],
            instance: vec![0, 1000, 1, 0],
            boxes: vec![BoxRecord {
                asset_id: AssetId(1000),
                tight: Some(PixelBox {
                    x_min: 1,
                    y_min: 0,
                    x_max: 1,
                    y_max: 0,
                }),
                loose: None,
                aabb: Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 2.0)),
            }],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let b = sample();
        assert_eq!(FrameBundle::from_bytes("low", &b.to_bytes()).unwrap(), b);
        let mut bytes = b.to_bytes();
        bytes.push(0);
        assert!(FrameBundle::from_bytes("low", &bytes).is_err());
    }

    #[test]
    fn dir_sink_writes_index() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut sink = DirSink::new(dir.path()).unwrap();
            sink.accept(sample()).unwrap();
        }
        let index = fs::read_to_string(dir.path().join("low/index.csv")).unwrap();
        assert_eq!(index, "index,stamp_ns,file\n3,1000000000,000003.dsfb\n");
        let bytes = fs::read(dir.path().join("low/000003.dsfb")).unwrap();
        assert_eq!(FrameBundle::from_bytes("low", &bytes).unwrap(), sample());
    }
}
