//! Procedural indoor environments assembled from box primitives.

use nalgebra::{Point2, Point3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{box_mesh, AssetId, GeometryError, TriMesh};

/// Asset id carried by every environment triangle.
pub const ENV_ASSET_ID: AssetId = AssetId(1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RoomShape {
    /// Interior `[0, width] × [0, depth]`.
    Box { width: f64, depth: f64 },
    /// Box room with the `[width − cut_x, width] × [depth − cut_y, depth]` corner removed.
    L { width: f64, depth: f64, cut_x: f64, cut_y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub shape: RoomShape,
    /// m
    pub height: f64,
    /// m
    pub wall_thickness: f64,
    pub ceiling: bool,
    /// Index into the interior boundary edges (counter-clockwise from the
    /// origin) of a wall to leave out.
    pub open_wall: Option<usize>,
    pub furniture: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            shape: RoomShape::Box {
                width: 10.0,
                depth: 8.0,
            },
            height: 3.0,
            wall_thickness: 0.1,
            ceiling: true,
            open_wall: None,
            furniture: 4,
        }
    }
}

impl RoomShape {
    /// Interior boundary, counter-clockwise.
    pub fn outline(&self) -> Vec<Point2<f64>> {
        match *self {
            RoomShape::Box { width, depth } => vec![
                Point2::new(0.0, 0.0),
                Point2::new(width, 0.0),
                Point2::new(width, depth),
                Point2::new(0.0, depth),
            ],
            RoomShape::L {
                width,
                depth,
                cut_x,
                cut_y,
            } => vec![
                Point2::new(0.0, 0.0),
                Point2::new(width, 0.0),
                Point2::new(width, depth - cut_y),
                Point2::new(width - cut_x, depth - cut_y),
                Point2::new(width - cut_x, depth),
                Point2::new(0.0, depth),
            ],
        }
    }

    /// Disjoint rectangles covering the interior.
    pub fn rects(&self) -> Vec<(Point2<f64>, Point2<f64>)> {
        match *self {
            RoomShape::Box { width, depth } => vec![(Point2::origin(), Point2::new(width, depth))],
            RoomShape::L {
                width,
                depth,
                cut_x,
                cut_y,
            } => vec![
                (Point2::origin(), Point2::new(width, depth - cut_y)),
                (Point2::new(0.0, depth - cut_y), Point2::new(width - cut_x, depth)),
            ],
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let ok = match *self {
            RoomShape::Box { width, depth } => width > 0.0 && depth > 0.0,
            RoomShape::L {
                width,
                depth,
                cut_x,
                cut_y,
            } => width > 0.0 && depth > 0.0 && cut_x > 0.0 && cut_y > 0.0 && cut_x < width && cut_y < depth,
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidInput(format!("invalid room shape {self:?}")))
        }
    }
}

/// Builds the room mesh. Floor top is at z = 0; walls stand outside the interior.
pub fn gen_environment<R: Rng + ?Sized>(rng: &mut R, params: &EnvParams) -> Result<TriMesh, GeometryError> {
    params.shape.validate()?;
    if !(params.height > 0.0 && params.wall_thickness > 0.0) {
        return Err(GeometryError::InvalidInput("height and wall thickness must be positive".into()));
    }
    let t = params.wall_thickness;
    let h = params.height;
    let mut parts = Vec::new();
    let rects = params.shape.rects();
    for (lo, hi) in &rects {
        parts.push(box_mesh(Point3::new(lo.x, lo.y, -t), Point3::new(hi.x, hi.y, 0.0), ENV_ASSET_ID));
        if params.ceiling {
            parts.push(box_mesh(Point3::new(lo.x, lo.y, h), Point3::new(hi.x, hi.y, h + t), ENV_ASSET_ID));
        }
    }

    let outline = params.shape.outline();
    for i in 0..outline.len() {
        if params.open_wall == Some(i) {
            continue;
        }
        let a = outline[i];
        let b = outline[(i + 1) % outline.len()];
        // Outward normal of a CCW edge is the edge direction rotated clockwise.
        let d = (b - a).normalize();
        let n = nalgebra::Vector2::new(d.y, -d.x);
        let p0 = a - d * t;
        let p1 = b + d * t + n * t;
        let (lo, hi) = (p0.inf(&p1), p0.sup(&p1));
        let z_lo = -t;
        let z_hi = if params.ceiling { h + t } else { h };
        parts.push(box_mesh(Point3::new(lo.x, lo.y, z_lo), Point3::new(hi.x, hi.y, z_hi), ENV_ASSET_ID));
    }

    for _ in 0..params.furniture {
        let (lo, hi) = rects[rng.random_range(0..rects.len())];
        let w = hi - lo;
        let sx = rng.random_range(0.3..1.2_f64).min(w.x * 0.5);
        let sy = rng.random_range(0.3..1.2_f64).min(w.y * 0.5);
        let sz = rng.random_range(0.4..1.0_f64).min(h * 0.5);
        let x = rng.random_range(lo.x..hi.x - sx);
        let y = rng.random_range(lo.y..hi.y - sy);
        parts.push(box_mesh(Point3::new(x, y, 0.0), Point3::new(x + sx, y + sy, sz), ENV_ASSET_ID));
    }
    TriMesh::concat(parts.iter(), ENV_ASSET_ID)
}
