//! Raycast camera: z-depth, instance ids, shaded grayscale, and boxes.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Resolution;
use crate::geometry::{Aabb, AssetId, CollisionObject, Hit, Pose};

/// Pinhole intrinsics; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn from_fov(res: Resolution, hfov: f64, vfov: f64) -> Self {
        let (w, h) = (res.width as f64, res.height as f64);
        Self {
            width: res.width,
            height: res.height,
            fx: w / 2.0 / (hfov / 2.0).tan(),
            fy: h / 2.0 / (vfov / 2.0).tan(),
            cx: w / 2.0,
            cy: h / 2.0,
        }
    }

    /// Optical-frame ray through the pixel center, with unit z.
    pub fn ray(&self, i: u32, j: u32) -> Vector3<f64> {
        Vector3::new(
            (i as f64 + 0.5 - self.cx) / self.fx,
            (j as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Continuous pixel coordinates of an optical-frame point with z > 0.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Rotation from the optical frame (x right, y down, z forward) to a body
/// frame with x forward and z up.
pub fn body_to_optical() -> UnitQuaternion<f64> {
    let m = Matrix3::from_columns(&[
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(1.0, 0.0, 0.0),
    ]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// World pose of a camera's optical frame.
pub fn camera_world_pose(body: &Pose, mount: &Pose) -> Pose {
    body.compose(mount).compose(&Pose::new(Point3::origin(), body_to_optical()))
}

/// Static environment plus the dynamic assets posed at one instant.
pub struct Scene<'a> {
    env: Option<&'a CollisionObject>,
    dynamic: Vec<CollisionObject>,
}

impl<'a> Scene<'a> {
    pub fn new(env: Option<&'a CollisionObject>, dynamic: Vec<CollisionObject>) -> Self {
        Self { env, dynamic }
    }

    pub fn dynamic(&self) -> &[CollisionObject] {
        &self.dynamic
    }

    fn objects(&self) -> impl Iterator<Item = &CollisionObject> {
        self.env.into_iter().chain(self.dynamic.iter())
    }

    /// Nearest hit over all objects; ties go to the earlier object.
    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<Hit> {
        let unit = dir.normalize();
        let inv = unit.map(|v| 1.0 / v);
        let mut best: Option<Hit> = None;
        for obj in self.objects() {
            let Some(bvh) = obj.bvh() else { continue };
            let limit = best.as_ref().map_or(t_max, |h| h.t);
            if bvh.root_bounds().ray_interval(origin, &inv, limit).is_none() {
                continue;
            }
            if let Some(h) = bvh.raycast_within(obj.mesh(), origin, &unit, limit) {
                if best.as_ref().is_none_or(|b| h.t < b.t) {
                    best = Some(h);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedFrame {
    pub width: u32,
    pub height: u32,
    /// z-depth in meters, 0 where nothing was hit. Row-major.
    pub depth: Vec<f32>,
    /// Asset id of the visible surface, 0 for background.
    pub instance: Vec<u32>,
    /// Normal-shaded intensity.
    pub gray: Vec<u8>,
}

impl RenderedFrame {
    pub fn at(&self, i: u32, j: u32) -> usize {
        j as usize * self.width as usize + i as usize
    }
}

/// Renders one pixel: (depth, instance, gray).
pub fn shade(scene: &Scene, cam: &Pose, model: &CameraModel, i: u32, j: u32) -> (f32, u32, u8) {
    let d_opt = model.ray(i, j);
    let dir = cam.orientation * d_opt;
    match scene.raycast(&cam.position, &dir, f64::INFINITY) {
        Some(h) => {
            let norm = d_opt.norm();
            let depth = (h.t / norm) as f32;
            let cos = h.normal.dot(&(dir / norm)).abs();
            let gray = (255.0 * (0.2 + 0.8 * cos)).round().clamp(0.0, 255.0) as u8;
            (depth, h.asset_id.0, gray)
        }
        None => (0.0, 0, 0),
    }
}

/// Renders rows in parallel; the output does not depend on thread scheduling.
pub fn render(scene: &Scene, cam: &Pose, model: &CameraModel) -> RenderedFrame {
    let (w, h) = (model.width, model.height);
    let rows: Vec<Vec<(f32, u32, u8)>> = (0..h)
        .into_par_iter()
        .map(|j| (0..w).map(|i| shade(scene, cam, model, i, j)).collect())
        .collect();
    let n = w as usize * h as usize;
    let mut frame = RenderedFrame {
        width: w,
        height: h,
        depth: Vec::with_capacity(n),
        instance: Vec::with_capacity(n),
        gray: Vec::with_capacity(n),
    };
    for (d, id, g) in rows.into_iter().flatten() {
        frame.depth.push(d);
        frame.instance.push(id);
        frame.gray.push(g);
    }
    frame
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub fn contains(&self, other: &PixelBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }

    pub fn area(&self) -> u64 {
        (self.x_max - self.x_min + 1) as u64 * (self.y_max - self.y_min + 1) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub asset_id: AssetId,
    /// Extent of the visible instance pixels.
    pub tight: Option<PixelBox>,
    /// Projection of the 3D box, occluded parts included, clipped to the viewport.
    pub loose: Option<PixelBox>,
    /// World-frame axis-aligned box.
    pub aabb: Aabb,
}

const NEAR: f64 = 1e-6;

/// Projects a world box, clipped at the near plane, to a viewport-clipped pixel rectangle.
pub fn loose_box(aabb: &Aabb, cam: &Pose, model: &CameraModel) -> Option<PixelBox> {
    if aabb.is_empty() {
        return None;
    }
    let corners = aabb.corners().map(|c| cam.inverse_transform_point(&c));
    let mut pts = Vec::with_capacity(20);
    for c in &corners {
        if c.z >= NEAR {
            pts.push(*c);
        }
    }
    for a in 0..8usize {
        for bit in [1usize, 2, 4] {
            let b = a | bit;
            if b == a {
                continue;
            }
            let (p, q) = (corners[a], corners[b]);
            if (p.z - NEAR) * (q.z - NEAR) < 0.0 {
                let s = (NEAR - p.z) / (q.z - p.z);
                let mut x = p + (q - p) * s;
                x.z = NEAR;
                pts.push(x);
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        let (u, v) = model.project(p);
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    let clip = |lo: f64, hi: f64, n: u32| -> Option<(u32, u32)> {
        let a = lo.floor().max(0.0);
        let b = (hi.ceil() - 1.0).max(lo.floor()).min(n as f64 - 1.0);
        if a > n as f64 - 1.0 || b < 0.0 || a > b {
            None
        } else {
            Some((a as u32, b as u32))
        }
    };
    let (x_min, x_max) = clip(u0, u1, model.width)?;
    let (y_min, y_max) = clip(v0, v1, model.height)?;
    Some(PixelBox {
        x_min,
        y_min,
        x_max,
        y_max,
    })
}

/// Tight, loose and 3D boxes for every dynamic asset in the scene.
pub fn extract_boxes(frame: &RenderedFrame, scene: &Scene, cam: &Pose, model: &CameraModel) -> Vec<BoxRecord> {
    let mut tight: BTreeMap<u32, PixelBox> = BTreeMap::new();
    for j in 0..frame.height {
        for i in 0..frame.width {
            let id = frame.instance[frame.at(i, j)];
            if id == 0 {
                continue;
            }
            tight
                .entry(id)
                .and_modify(|b| {
                    b.x_min = b.x_min.min(i);
                    b.x_max = b.x_max.max(i);
                    b.y_min = b.y_min.min(j);
                    b.y_max = b.y_max.max(j);
                })
                .or_insert(PixelBox {
                    x_min: i,
                    y_min: j,
                    x_max: i,
                    y_max: j,
                });
        }
    }
    scene
        .dynamic()
        .iter()
        .map(|obj| {
            let id = obj.mesh().asset_id();
            let aabb = obj.mesh().aabb();
            BoxRecord {
                asset_id: id,
                tight: tight.get(&id.0).copied(),
                loose: loose_box(&aabb, cam, model),
                aabb,
            }
        })
        .collect()
}
