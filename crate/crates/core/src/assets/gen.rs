//! Procedural stand-ins for scanned humans and household objects.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::clip::{AnimatedAsset, AnimationClip, AssetKind, ClipFrames, Playback};
use super::AssetError;
use crate::geometry::{centered_box, uv_sphere, Aabb, AssetId, Pose, TriMesh};

const CAPSULE_SEGMENTS: usize = 8;
const CAP_RINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathShape {
    Straight,
    Arc,
    /// Straight or arc with equal probability.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    /// m/s
    pub speed: f64,
    /// m
    pub path_length: f64,
    /// m
    pub body_height: f64,
    pub path: PathShape,
    pub frame_rate: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            speed: 1.0,
            path_length: 4.0,
            body_height: 1.75,
            path: PathShape::Random,
            frame_rate: 30.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), AssetError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(AssetError::InvalidParams(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Surface of revolution around +z from a (radius, z) profile running bottom to top.
/// The first and last profile entries are the poles.
fn lathe(profile: &[(f64, f64)], segments: usize, id: AssetId) -> Result<TriMesh, AssetError> {
    let rings = &profile[1..profile.len() - 1];
    let mut verts = vec![Point3::new(0.0, 0.0, profile[0].1)];
    for &(r, z) in rings {
        for i in 0..segments {
            let phi = TAU * i as f64 / segments as f64;
            verts.push(Point3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    let top = verts.len() as u32;
    verts.push(Point3::new(0.0, 0.0, profile[profile.len() - 1].1));

    let s = segments as u32;
    let at = |ring: usize, i: u32| 1 + ring as u32 * s + (i % s);
    let mut tris = Vec::new();
    for i in 0..s {
        tris.push([0, at(0, i + 1), at(0, i)]);
    }
    for j in 0..rings.len() - 1 {
        for i in 0..s {
            tris.push([at(j, i), at(j, i + 1), at(j + 1, i + 1)]);
            tris.push([at(j, i), at(j + 1, i + 1), at(j + 1, i)]);
        }
    }
    let last = rings.len() - 1;
    for i in 0..s {
        tris.push([at(last, i), at(last, i + 1), top]);
    }
    Ok(TriMesh::new(verts, tris, id)?)
}

/// Capsule of total height `h` standing on z = 0.
pub fn capsule(height: f64, radius: f64, id: AssetId) -> Result<TriMesh, AssetError> {
    let r = radius.min(height / 2.0);
    let mut profile = vec![(0.0, 0.0)];
    for k in 1..=CAP_RINGS {
        let a = -PI / 2.0 + PI / 2.0 * k as f64 / CAP_RINGS as f64;
        profile.push((r * a.cos(), r + r * a.sin()));
    }
    for k in 0..CAP_RINGS {
        let a = PI / 2.0 * k as f64 / CAP_RINGS as f64;
        profile.push((r * a.cos(), height - r + r * a.sin()));
    }
    profile.push((0.0, height));
    lathe(&profile, CAPSULE_SEGMENTS, id)
}

/// Walking figure: a capsule that bobs and sways along a straight or arc path
/// centered on the origin. Played back ping-pong.
pub fn gen_walker<R: Rng + ?Sized>(rng: &mut R, params: &WalkerParams, id: AssetId) -> Result<AnimatedAsset, AssetError> {
    positive("speed", params.speed)?;
    positive("path_length", params.path_length)?;
    positive("body_height", params.body_height)?;
    positive("frame_rate", params.frame_rate)?;

    let h = params.body_height;
    let heading: f64 = rng.random_range(0.0..TAU);
    let arc = match params.path {
        PathShape::Straight => false,
        PathShape::Arc => true,
        PathShape::Random => rng.random_bool(0.5),
    };
    let turn: f64 = rng.random_range(PI / 6.0..PI / 2.0);
    let turn_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let phase0: f64 = rng.random_range(0.0..TAU);
    let bob = rng.random_range(0.015..0.03);
    let sway = rng.random_range(0.01..0.03) * h;
    let radius = rng.random_range(0.12..0.16) * h;

    let base = capsule(h, radius, id)?;
    let kappa = if arc { turn_sign * turn / params.path_length } else { 0.0 };
    let step_length = 0.4 * h;

    let duration = params.path_length / params.speed;
    let n = ((duration * params.frame_rate).round() as usize).max(1) + 1;
    let l = params.path_length;

    let frames = (0..n)
        .map(|k| {
            let s = -l / 2.0 + l * k as f64 / (n - 1) as f64;
            let (pos, psi) = if kappa == 0.0 {
                ((s * heading.cos(), s * heading.sin()), heading)
            } else {
                let psi = heading + kappa * s;
                (
                    ((psi.sin() - heading.sin()) / kappa, (heading.cos() - psi.cos()) / kappa),
                    psi,
                )
            };
            let phase = phase0 + TAU * (s + l / 2.0) / step_length;
            let vscale = 1.0 + bob * (2.0 * phase).sin();
            let lateral = sway * phase.sin();
            let (sn, cs) = psi.sin_cos();
            base.vertices()
                .iter()
                .map(|v| {
                    let z = v.z * vscale;
                    let y = v.y + lateral * v.z / h;
                    Point3::new(pos.0 + cs * v.x - sn * y, pos.1 + sn * v.x + cs * y, z)
                })
                .collect()
        })
        .collect();

    let clip = AnimationClip::new(params.frame_rate, ClipFrames::Vertices(frames))?;
    AnimatedAsset::new(base, clip, AssetKind::Human, Playback::PingPong)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlyerShape {
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlyerParams {
    /// Volume the object's center stays in.
    pub bounds: Aabb,
    /// m/s
    pub speed_min: f64,
    /// m/s
    pub speed_max: f64,
    pub shape: FlyerShape,
    /// Half-extent range, m.
    pub size_min: f64,
    pub size_max: f64,
    pub frame_rate: f64,
}

impl FlyerParams {
    pub fn new(bounds: Aabb, shape: FlyerShape) -> Self {
        Self {
            bounds,
            speed_min: 0.2,
            speed_max: 1.0,
            shape,
            size_min: 0.05,
            size_max: 0.25,
            frame_rate: 30.0,
        }
    }
}

/// Rigid box or ellipsoid following a closed two-harmonic path inside
/// `params.bounds` while tumbling a whole number of turns per period.
/// Played back as a loop; no collision constraints.
pub fn gen_flyer<R: Rng + ?Sized>(rng: &mut R, params: &FlyerParams, id: AssetId) -> Result<AnimatedAsset, AssetError> {
    let b = &params.bounds;
    if b.is_empty() || !(b.min.coords.iter().chain(b.max.coords.iter()).all(|v| v.is_finite())) {
        return Err(AssetError::InvalidParams("flyer bounds are empty".into()));
    }
    positive("speed_max", params.speed_max)?;
    positive("size_max", params.size_max)?;
    positive("frame_rate", params.frame_rate)?;
    if !(params.speed_min > 0.0 && params.speed_min <= params.speed_max) {
        return Err(AssetError::InvalidParams("speed range must satisfy 0 < min <= max".into()));
    }
    if !(params.size_min > 0.0 && params.size_min <= params.size_max) {
        return Err(AssetError::InvalidParams("size range must satisfy 0 < min <= max".into()));
    }

    let half = Vector3::from_fn(|_, _| rng.random_range(params.size_min..=params.size_max));
    let base = match params.shape {
        FlyerShape::Box => centered_box(Point3::origin(), half * 2.0, id),
        FlyerShape::Ellipsoid => uv_sphere(Point3::origin(), half, 12, 8, id),
    };

    // Keep the whole object inside when the volume allows it, else only its center.
    let center = b.center();
    let room = b.extent() / 2.0 - Vector3::repeat(half.max());
    let room = room.map(|v| v.max(0.0));
    let mut amp1 = Vector3::zeros();
    let mut amp2 = Vector3::zeros();
    let mut ph1 = Vector3::zeros();
    let mut ph2 = Vector3::zeros();
    let mut offset = Vector3::zeros();
    for a in 0..3 {
        let total = room[a] * rng.random_range(0.3..1.0);
        let split: f64 = rng.random_range(0.5..1.0);
        amp1[a] = total * split;
        amp2[a] = total * (1.0 - split);
        offset[a] = (room[a] - total) * rng.random_range(-1.0..=1.0);
        ph1[a] = rng.random_range(0.0..TAU);
        ph2[a] = rng.random_range(0.0..TAU);
    }
    let speed = rng.random_range(params.speed_min..=params.speed_max);
    let q0 = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0) + 1e-3,
    ));
    let axis = Unit::new_normalize(Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0) + 1e-3,
    ));
    let turns = rng.random_range(1..=2) as f64;

    // |v_a| <= (2π/T)(A1 + 2·A2); pick the period so the speed bound equals `speed`.
    let bound = (amp1 + amp2 * 2.0).norm();
    let period = TAU * bound / speed;
    let n = if period > 0.0 {
        (period * params.frame_rate).ceil().max(1.0) as usize + 1
    } else {
        2
    };
    let period = (n - 1) as f64 / params.frame_rate;

    let frames = (0..n)
        .map(|k| {
            let u = TAU * k as f64 / (n - 1) as f64;
            let p = Vector3::from_fn(|a, _| amp1[a] * (u + ph1[a]).sin() + amp2[a] * (2.0 * u + ph2[a]).sin());
            let rot = UnitQuaternion::from_axis_angle(&axis, turns * u);
            Pose::new(center + offset + p, q0 * rot)
        })
        .collect();
    log::trace!("flyer {id}: {n} frames, period {period:.2} s");
    let clip = AnimationClip::new(params.frame_rate, ClipFrames::Poses(frames))?;
    AnimatedAsset::new(base, clip, AssetKind::Flyer, Playback::Loop)
}
