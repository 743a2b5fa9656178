use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::AssetError;
use crate::geometry::{Aabb, AssetId, Pose, TriMesh};

/// Per-frame payload of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClipFrames {
    /// Deformed vertex positions; topology comes from the base mesh.
    Vertices(Vec<Vec<Point3<f64>>>),
    /// Rigid transforms applied to the base mesh.
    Poses(Vec<Pose>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationClip {
    frame_rate: f64,
    frames: ClipFrames,
}

impl AnimationClip {
    pub fn new(frame_rate: f64, frames: ClipFrames) -> Result<Self, AssetError> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(AssetError::InvalidClip(format!("frame rate must be positive, got {frame_rate}")));
        }
        let n = match &frames {
            ClipFrames::Vertices(v) => {
                if let Some(first) = v.first() {
                    if v.iter().any(|f| f.len() != first.len()) {
                        return Err(AssetError::InvalidClip("vertex frames differ in length".into()));
                    }
                }
                v.len()
            }
            ClipFrames::Poses(p) => p.len(),
        };
        if n == 0 {
            return Err(AssetError::InvalidClip("clip has no frames".into()));
        }
        Ok(Self { frame_rate, frames })
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frames(&self) -> &ClipFrames {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        match &self.frames {
            ClipFrames::Vertices(v) => v.len(),
            ClipFrames::Poses(p) => p.len(),
        }
    }

    /// Time from the first to the last frame.
    pub fn duration(&self) -> f64 {
        (self.frame_count() - 1) as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssetKind {
    Human,
    Flyer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Playback {
    /// Forward to the last frame, then backward to the first, repeating.
    PingPong,
    /// Wraps from the last frame to the first.
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimatedAsset {
    base: TriMesh,
    clip: AnimationClip,
    kind: AssetKind,
    playback: Playback,
}

impl AnimatedAsset {
    pub fn new(base: TriMesh, clip: AnimationClip, kind: AssetKind, playback: Playback) -> Result<Self, AssetError> {
        if let ClipFrames::Vertices(frames) = clip.frames() {
            if frames[0].len() != base.vertices().len() {
                return Err(AssetError::InvalidClip(format!(
                    "clip frames have {} vertices, base mesh has {}",
                    frames[0].len(),
                    base.vertices().len()
                )));
            }
        }
        Ok(Self {
            base,
            clip,
            kind,
            playback,
        })
    }

    pub fn id(&self) -> AssetId {
        self.base.asset_id()
    }

    pub fn base(&self) -> &TriMesh {
        &self.base
    }

    pub fn clip(&self) -> &AnimationClip {
        &self.clip
    }

    pub fn kind(&self) -> AssetKind {
        self.kind
    }

    pub fn playback(&self) -> Playback {
        self.playback
    }

    pub fn with_id(mut self, id: AssetId) -> Self {
        self.base = self.base.with_asset_id(id);
        self
    }

    /// Maps wall-clock animation time onto clip time in `[0, duration]`.
    pub fn clip_time(&self, t: f64) -> f64 {
        let d = self.clip.duration();
        if d <= 0.0 || t <= 0.0 {
            return 0.0;
        }
        match self.playback {
            Playback::Loop => t.rem_euclid(d),
            Playback::PingPong => {
                let tau = t.rem_euclid(2.0 * d);
                if tau > d {
                    2.0 * d - tau
                } else {
                    tau
                }
            }
        }
    }

    /// Bracketing frame index and blend weight for animation time `t`.
    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.clip.frame_count();
        if n == 1 {
            return (0, 0.0);
        }
        let mut f = self.clip_time(t) * self.clip.frame_rate;
        let r = f.round();
        if (f - r).abs() < 1e-9 {
            f = r;
        }
        let i = (f.floor() as usize).min(n - 2);
        (i, (f - i as f64).clamp(0.0, 1.0))
    }

    /// Geometry of frame `k` exactly, in the asset's local frame.
    pub fn frame_mesh(&self, k: usize) -> TriMesh {
        match self.clip.frames() {
            ClipFrames::Vertices(v) => self
                .base
                .with_vertices(v[k].clone())
                .expect("frame length checked at construction"),
            ClipFrames::Poses(p) => self.base.transformed(&p[k]),
        }
    }

    /// Interpolated geometry at animation time `t ≥ 0`.
    pub fn sample_frame(&self, t: f64) -> TriMesh {
        let (i, w) = self.bracket(t);
        if w == 0.0 {
            return self.frame_mesh(i);
        }
        if w == 1.0 {
            return self.frame_mesh(i + 1);
        }
        match self.clip.frames() {
            ClipFrames::Vertices(v) => {
                let verts = v[i]
                    .iter()
                    .zip(&v[i + 1])
                    .map(|(a, b)| a + (b - a) * w)
                    .collect();
                self.base.with_vertices(verts).expect("frame length checked")
            }
            ClipFrames::Poses(p) => self.base.transformed(&p[i].interpolate(&p[i + 1], w)),
        }
    }

    /// Rigid pose at time `t` for pose-track clips.
    pub fn sample_pose(&self, t: f64) -> Option<Pose> {
        let (i, w) = self.bracket(t);
        match self.clip.frames() {
            ClipFrames::Poses(p) if p.len() == 1 => Some(p[0]),
            ClipFrames::Poses(p) => Some(p[i].interpolate(&p[i + 1], w)),
            ClipFrames::Vertices(_) => None,
        }
    }

    pub fn aabb_at(&self, t: f64) -> Aabb {
        self.sample_frame(t).aabb()
    }

    /// Largest displacement of any vertex between consecutive frames.
    pub fn max_frame_displacement(&self) -> f64 {
        let n = self.clip.frame_count();
        let mut best = 0.0_f64;
        let mut prev = self.frame_mesh(0);
        for k in 1..n {
            let cur = self.frame_mesh(k);
            for (a, b) in prev.vertices().iter().zip(cur.vertices()) {
                best = best.max((b - a).norm());
            }
            prev = cur;
        }
        best
    }
}

/// Static mesh aggregating the sampled frames of an animation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweptTrace {
    pub mesh: TriMesh,
    pub stride: usize,
    /// Frame indices that contributed triangles.
    pub frames: Vec<usize>,
}

impl SweptTrace {
    pub fn asset_id(&self) -> AssetId {
        self.mesh.asset_id()
    }
}

/// Frames `0, stride, 2·stride, …` plus the last frame.
pub fn trace_frames(frame_count: usize, stride: usize) -> Vec<usize> {
    let mut frames: Vec<usize> = (0..frame_count).step_by(stride).collect();
    if frames.last() != Some(&(frame_count - 1)) {
        frames.push(frame_count - 1);
    }
    frames
}

/// Concatenates the triangles of every `stride`-th frame (no boolean union).
pub fn swept_trace(asset: &AnimatedAsset, stride: usize) -> Result<SweptTrace, AssetError> {
    if stride == 0 {
        return Err(AssetError::InvalidParams("trace stride must be at least 1".into()));
    }
    let frames = trace_frames(asset.clip().frame_count(), stride);
    let meshes: Vec<TriMesh> = frames.iter().map(|&k| asset.frame_mesh(k)).collect();
    let mesh = TriMesh::concat(meshes.iter(), asset.id())?;
    Ok(SweptTrace { mesh, stride, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::centered_box;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn sliding_box(frames: usize, total: f64, playback: Playback) -> AnimatedAsset {
        let base = centered_box(Point3::origin(), Vector3::repeat(0.5), AssetId(7));
        let poses = (0..frames)
            .map(|k| Pose::from_translation(total * k as f64 / (frames - 1).max(1) as f64, 0.0, 0.0))
            .collect();
        AnimatedAsset::new(
            base,
            AnimationClip::new(10.0, ClipFrames::Poses(poses)).unwrap(),
            AssetKind::Flyer,
            playback,
        )
        .unwrap()
    }

    fn two_frame_deformer(playback: Playback) -> AnimatedAsset {
        let base = centered_box(Point3::origin(), Vector3::repeat(1.0), AssetId(3));
        let f0 = base.vertices().to_vec();
        let f1 = f0.iter().map(|p| p + Vector3::new(0.0, 0.0, 1.0)).collect();
        AnimatedAsset::new(
            base,
            AnimationClip::new(4.0, ClipFrames::Vertices(vec![f0, f1])).unwrap(),
            AssetKind::Human,
            playback,
        )
        .unwrap()
    }

    #[test]
    fn time_zero_is_frame_zero_exactly() {
        let a = sliding_box(5, 1.0, Playback::PingPong);
        assert_eq!(a.sample_frame(0.0), a.frame_mesh(0));
        let b = two_frame_deformer(Playback::Loop);
        assert_eq!(b.sample_frame(0.0), b.frame_mesh(0));
    }

    #[test]
    fn ping_pong_triangle_wave() {
        let a = sliding_box(11, 1.0, Playback::PingPong);
        let d = a.clip().duration();
        assert_eq!(a.sample_frame(d), a.frame_mesh(10));
        let x = a.sample_frame(1.5 * d);
        let y = a.sample_frame(0.5 * d);
        for (p, q) in x.vertices().iter().zip(y.vertices()) {
            assert_relative_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn loop_blends_quarter_way() {
        let a = two_frame_deformer(Playback::Loop);
        let d = a.clip().duration();
        let m = a.sample_frame(d + 0.25 / 4.0);
        for (p, q) in m.vertices().iter().zip(a.frame_mesh(0).vertices()) {
            assert_relative_eq!(p.z - q.z, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_vertex_frames_rejected() {
        let base = centered_box(Point3::origin(), Vector3::repeat(1.0), AssetId(3));
        let clip = AnimationClip::new(1.0, ClipFrames::Vertices(vec![vec![Point3::origin(); 3]])).unwrap();
        assert!(AnimatedAsset::new(base, clip, AssetKind::Human, Playback::Loop).is_err());
        assert!(AnimationClip::new(0.0, ClipFrames::Poses(vec![Pose::identity()])).is_err());
        assert!(AnimationClip::new(1.0, ClipFrames::Poses(vec![])).is_err());
    }

    #[test]
    fn static_trace_is_base() {
        let a = sliding_box(1, 0.0, Playback::Loop);
        let t = swept_trace(&a, 4).unwrap();
        assert_eq!(t.mesh, *a.base());
        assert_eq!(t.frames, vec![0]);
    }

    #[test]
    fn translating_trace_extends_aabb() {
        let a = sliding_box(10, 1.0, Playback::Loop);
        let t = swept_trace(&a, 1).unwrap();
        assert_relative_eq!(t.mesh.aabb().extent().x, 0.5 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stride_keeps_last_frame() {
        let a = sliding_box(10, 1.0, Playback::Loop);
        let t = swept_trace(&a, 5).unwrap();
        assert_eq!(t.frames, vec![0, 5, 9]);
        assert_eq!(t.mesh.triangle_count(), 3 * 12);
        assert!(swept_trace(&a, 0).is_err());
    }
}
