//! Binary clip container, little-endian throughout.
//!
//! ```text
//! magic          8 bytes  "DSCLIP\0\x01" (last byte is the version)
//! asset_id       u32
//! kind           u8       0 human, 1 flyer
//! playback       u8       0 ping-pong, 1 loop
//! payload        u8       0 vertex frames, 1 pose frames
//! reserved       u8       0
//! frame_rate     f64      Hz
//! vertex_count   u32
//! triangle_count u32
//! vertices       vertex_count × 3 f64
//! triangles      triangle_count × 3 u32
//! frame_count    u32
//! frames         vertex payload: frame_count × vertex_count × 3 f64
//!                pose payload:   frame_count × 7 f64 (px py pz qx qy qz qw)
//! ```

use std::io::Write;

use nalgebra::Point3;

use super::clip::{AnimatedAsset, AnimationClip, AssetKind, ClipFrames, Playback};
use super::AssetError;
use crate::geometry::{AssetId, Pose, TriMesh};

pub const CLIP_MAGIC: &[u8; 7] = b"DSCLIP\0";
pub const CLIP_VERSION: u8 = 1;

pub fn write_clip<W: Write>(asset: &AnimatedAsset, mut w: W) -> Result<(), AssetError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CLIP_MAGIC);
    buf.push(CLIP_VERSION);
    buf.extend_from_slice(&asset.id().0.to_le_bytes());
    buf.push(match asset.kind() {
        AssetKind::Human => 0,
        AssetKind::Flyer => 1,
    });
    buf.push(match asset.playback() {
        Playback::PingPong => 0,
        Playback::Loop => 1,
    });
    let clip = asset.clip();
    buf.push(match clip.frames() {
        ClipFrames::Vertices(_) => 0,
        ClipFrames::Poses(_) => 1,
    });
    buf.push(0);
    buf.extend_from_slice(&clip.frame_rate().to_le_bytes());
    let base = asset.base();
    buf.extend_from_slice(&(base.vertices().len() as u32).to_le_bytes());
    buf.extend_from_slice(&(base.triangle_count() as u32).to_le_bytes());
    for p in base.vertices() {
        put_point(&mut buf, p);
    }
    for t in base.triangles() {
        for i in t {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    buf.extend_from_slice(&(clip.frame_count() as u32).to_le_bytes());
    match clip.frames() {
        ClipFrames::Vertices(frames) => {
            for f in frames {
                for p in f {
                    put_point(&mut buf, p);
                }
            }
        }
        ClipFrames::Poses(poses) => {
            for pose in poses {
                put_point(&mut buf, &pose.position);
                for v in pose.quaternion_xyzw() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn put_point(buf: &mut Vec<u8>, p: &Point3<f64>) {
    for v in [p.x, p.y, p.z] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AssetError> {
        if self.bytes.len() - self.pos < n {
            return Err(AssetError::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, AssetError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, AssetError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, AssetError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn point(&mut self, what: &str) -> Result<Point3<f64>, AssetError> {
        Ok(Point3::new(self.f64(what)?, self.f64(what)?, self.f64(what)?))
    }

    /// Guards allocations against absurd counts in corrupt headers.
    fn expect_remaining(&self, n: u64, what: &str) -> Result<(), AssetError> {
        if ((self.bytes.len() - self.pos) as u64) < n {
            return Err(AssetError::Format {
                offset: self.pos,
                message: format!("{what} needs {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }

    fn err(&self, at: usize, message: impl Into<String>) -> AssetError {
        AssetError::Format {
            offset: at,
            message: message.into(),
        }
    }
}

pub fn read_clip(bytes: &[u8]) -> Result<AnimatedAsset, AssetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(7, "magic")? != CLIP_MAGIC {
        return Err(r.err(0, "bad magic"));
    }
    let version = r.u8("version")?;
    if version != CLIP_VERSION {
        return Err(r.err(7, format!("unsupported version {version}")));
    }
    let id = AssetId(r.u32("asset id")?);
    let kind = match r.u8("kind")? {
        0 => AssetKind::Human,
        1 => AssetKind::Flyer,
        k => return Err(r.err(12, format!("unknown kind {k}"))),
    };
    let playback = match r.u8("playback")? {
        0 => Playback::PingPong,
        1 => Playback::Loop,
        k => return Err(r.err(13, format!("unknown playback {k}"))),
    };
    let payload = r.u8("payload")?;
    if payload > 1 {
        return Err(r.err(14, format!("unknown payload {payload}")));
    }
    r.u8("reserved")?;
    let frame_rate = r.f64("frame rate")?;
    let nv = r.u32("vertex count")? as usize;
    let nt = r.u32("triangle count")? as usize;
    r.expect_remaining(nv as u64 * 24 + nt as u64 * 12, "mesh")?;
    let vertices = (0..nv).map(|_| r.point("vertex")).collect::<Result<Vec<_>, _>>()?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        triangles.push([r.u32("triangle")?, r.u32("triangle")?, r.u32("triangle")?]);
    }
    let nf = r.u32("frame count")? as usize;
    let frames = if payload == 0 {
        r.expect_remaining(nf as u64 * nv as u64 * 24, "vertex frames")?;
        let mut frames = Vec::with_capacity(nf);
        for _ in 0..nf {
            frames.push((0..nv).map(|_| r.point("frame vertex")).collect::<Result<Vec<_>, _>>()?);
        }
        ClipFrames::Vertices(frames)
    } else {
        r.expect_remaining(nf as u64 * 56, "pose frames")?;
        let mut poses = Vec::with_capacity(nf);
        for _ in 0..nf {
            let at = r.pos;
            let p = r.point("pose")?;
            let q = [r.f64("pose")?, r.f64("pose")?, r.f64("pose")?, r.f64("pose")?];
            poses.push(Pose::from_parts(p, q).map_err(|e| r.err(at, e.to_string()))?);
        }
        ClipFrames::Poses(poses)
    };
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    // Topology is stored post-filtering, so construction keeps it unchanged.
    let base = TriMesh::new(vertices, triangles, id)?;
    if base.triangle_count() != nt {
        return Err(AssetError::InvalidClip("stored base mesh has degenerate triangles".into()));
    }
    AnimatedAsset::new(base, AnimationClip::new(frame_rate, frames)?, kind, playback)
}
