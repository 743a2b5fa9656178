//! 2D occupancy grid from a height band of the mesh, and PGM export.
//!
//! PGM layout (`P5`, binary greyscale):
//!
//! ```text
//! P5\n<width> <height>\n255\n<width*height bytes>
//! ```
//!
//! Rows are written top-down, so the first image row is the grid row with
//! the largest `y`. Cell values: occupied = 0, free = 254, unknown = 205.
//! The sidecar metadata is plain `key: value` text, see [`write_metadata`].

use std::io::{self, Write};

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::footprint::{enclosing_rectangle, FootprintPolygon};
use super::{GeometryError, TriMesh};

pub const PGM_OCCUPIED: u8 = 0;
pub const PGM_FREE: u8 = 254;
pub const PGM_UNKNOWN: u8 = 205;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid2D {
    resolution: f64,
    origin: Point2<f64>,
    width: usize,
    height: usize,
    cells: Vec<CellState>,
}

impl OccupancyGrid2D {
    pub fn new(resolution: f64, origin: Point2<f64>, width: usize, height: usize) -> Result<Self, GeometryError> {
        if !(resolution > 0.0) || width == 0 || height == 0 {
            return Err(GeometryError::InvalidInput(format!(
                "invalid grid: resolution {resolution}, {width}x{height}"
            )));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![CellState::Free; width * height],
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point2<f64> {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, i: usize, j: usize) -> CellState {
        self.cells[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, s: CellState) {
        self.cells[j * self.width + i] = s;
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2<f64> {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// `(i, j)` of every free cell in row-major order.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|j| (0..self.width).map(move |i| (i, j)))
            .filter(|&(i, j)| self.get(i, j) == CellState::Free)
            .collect()
    }

    /// Marks free cells whose centers fall outside `polygon` as unknown.
    pub fn mask_outside(&mut self, polygon: &FootprintPolygon) {
        for j in 0..self.height {
            for i in 0..self.width {
                if self.get(i, j) == CellState::Free && !polygon.contains(&self.cell_center(i, j)) {
                    self.set(i, j, CellState::Unknown);
                }
            }
        }
    }
}

/// Marks a cell occupied iff some triangle intersects the closed box
/// `cell × [low, high]`. The grid covers the mesh's enclosing rectangle.
pub fn rasterize_occupancy(
    mesh: &TriMesh,
    z_band: (f64, f64),
    resolution: f64,
) -> Result<OccupancyGrid2D, GeometryError> {
    let (low, high) = z_band;
    if !(low < high) {
        return Err(GeometryError::InvalidInput(format!("empty z band ({low}, {high})")));
    }
    if !(resolution > 0.0) {
        return Err(GeometryError::InvalidInput(format!("resolution must be positive, got {resolution}")));
    }
    let rect = enclosing_rectangle(mesh);
    let width = ((rect.width() / resolution) - 1e-9).ceil().max(1.0) as usize;
    let height = ((rect.height() / resolution) - 1e-9).ceil().max(1.0) as usize;
    let mut grid = OccupancyGrid2D::new(resolution, rect.min, width, height)?;
    let half_z = 0.5 * (high - low);
    let center_z = 0.5 * (high + low);
    let half = Vector3::new(0.5 * resolution, 0.5 * resolution, half_z);
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        let zmin = tri.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let zmax = tri.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        if zmax < low || zmin > high {
            continue;
        }
        let xmin = tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let xmax = tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let ymin = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let ymax = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let cell_range = |lo: f64, hi: f64, o: f64, n: usize| {
            let a = (((lo - o) / resolution).floor() - 1.0).max(0.0) as usize;
            let b = ((((hi - o) / resolution).floor() + 1.0).max(0.0) as usize).min(n - 1);
            (a, b)
        };
        let (i0, i1) = cell_range(xmin, xmax, rect.min.x, width);
        let (j0, j1) = cell_range(ymin, ymax, rect.min.y, height);
        for j in j0..=j1 {
            for i in i0..=i1 {
                if grid.get(i, j) == CellState::Occupied {
                    continue;
                }
                let c = grid.cell_center(i, j);
                if triangle_box_overlap(&Point3::new(c.x, c.y, center_z), &half, &tri) {
                    grid.set(i, j, CellState::Occupied);
                }
            }
        }
    }
    Ok(grid)
}

/// Akenine-Möller separating-axis triangle/box test on a closed box.
pub fn triangle_box_overlap(center: &Point3<f64>, half: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    // 9 edge cross-product axes
    for edge in &e {
        for axis_i in 0..3 {
            let mut a = Vector3::zeros();
            a[axis_i] = 1.0;
            let axis = a.cross(edge);
            if axis.norm_squared() == 0.0 {
                continue;
            }
            let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
            let (mn, mx) = (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]));
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            if mn > r || mx < -r {
                return false;
            }
        }
    }
    // box face normals
    for k in 0..3 {
        let mn = v[0][k].min(v[1][k]).min(v[2][k]);
        let mx = v[0][k].max(v[1][k]).max(v[2][k]);
        if mn > half[k] || mx < -half[k] {
            return false;
        }
    }
    // triangle plane
    let n = e[0].cross(&e[1]);
    if n.norm_squared() > 0.0 {
        let d = n.dot(&v[0]);
        let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
        if d.abs() > r {
            return false;
        }
    }
    true
}

fn pgm_value(s: CellState) -> u8 {
    match s {
        CellState::Occupied => PGM_OCCUPIED,
        CellState::Free => PGM_FREE,
        CellState::Unknown => PGM_UNKNOWN,
    }
}

pub fn write_pgm<W: Write>(grid: &OccupancyGrid2D, mut w: W) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", grid.width, grid.height)?;
    let mut row = vec![0u8; grid.width];
    for j in (0..grid.height).rev() {
        for (i, px) in row.iter_mut().enumerate() {
            *px = pgm_value(grid.get(i, j));
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Sidecar text: `image`, `resolution` (m/cell), `origin` (x, y, yaw of the
/// lower-left cell corner), `width`, `height`, and the three pixel values.
pub fn write_metadata<W: Write>(grid: &OccupancyGrid2D, image_name: &str, mut w: W) -> io::Result<()> {
    writeln!(w, "image: {image_name}")?;
    writeln!(w, "resolution: {:.6}", grid.resolution)?;
    writeln!(w, "origin: [{:.6}, {:.6}, 0.000000]", grid.origin.x, grid.origin.y)?;
    writeln!(w, "width: {}", grid.width)?;
    writeln!(w, "height: {}", grid.height)?;
    writeln!(w, "occupied_value: {PGM_OCCUPIED}")?;
    writeln!(w, "free_value: {PGM_FREE}")?;
    writeln!(w, "unknown_value: {PGM_UNKNOWN}")?;
    Ok(())
}
