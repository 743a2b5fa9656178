//! Ground-plane footprint of an environment: circumscribed rectangle and an
//! enclosing polygon that is the convex hull when the hull is a rectangle,
//! and otherwise a rectilinear polygon traced from a footprint raster.

use std::collections::HashMap;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{GeometryError, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2D {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl Rect2D {
    pub fn new(min: Point2<f64>, max: Point2<f64>) -> Result<Self, GeometryError> {
        if !(min.x <= max.x && min.y <= max.y) {
            return Err(GeometryError::InvalidInput(format!("rect min {min} exceeds max {max}")));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point2<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        self.min.x <= p.x && p.x <= self.max.x && self.min.y <= p.y && p.y <= self.max.y
    }
}

/// Simple polygon, vertices counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintPolygon {
    pub vertices: Vec<Point2<f64>>,
    /// True when the polygon is the convex hull of the footprint.
    pub is_convex: bool,
}

impl FootprintPolygon {
    /// Signed shoelace area (positive for counter-clockwise order).
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Even-odd point containment. Points exactly on an edge may go either way.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounding_rect(&self) -> Rect2D {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        Rect2D { min, max }
    }

    /// Number of vertices whose interior angle exceeds 180°.
    pub fn reflex_vertex_count(&self) -> usize {
        let n = self.vertices.len();
        (0..n)
            .filter(|&i| {
                let (a, b, c) = (self.vertices[(i + n - 1) % n], self.vertices[i], self.vertices[(i + 1) % n]);
                cross(a, b, c) < 0.0
            })
            .count()
    }

    /// At least three vertices, positive area, no two non-adjacent edges
    /// touching.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.vertices.len();
        if n < 3 || !(self.area() > 0.0) {
            return Err(GeometryError::InvalidInput(format!(
                "degenerate polygon ({n} vertices, area {})",
                self.area()
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % n]);
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_touch(a1, a2, b1, b2) {
                    return Err(GeometryError::InvalidInput(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }
}

fn cross(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_touch(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    let on = |a: Point2<f64>, b: Point2<f64>, p: Point2<f64>| {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    if (d1 * d2 < 0.0) && (d3 * d4 < 0.0) {
        return true;
    }
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// Axis-aligned rectangle of all vertices projected onto z = 0.
pub fn enclosing_rectangle(mesh: &TriMesh) -> Rect2D {
    let b = mesh.aabb();
    Rect2D {
        min: Point2::new(b.min.x, b.min.y),
        max: Point2::new(b.max.x, b.max.y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintParams {
    /// Raster cell size used for the non-convex refinement, meters.
    pub cell_size: f64,
    /// Tolerance on the 90° corner test, degrees.
    pub angle_tolerance_deg: f64,
}

impl Default for FootprintParams {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            angle_tolerance_deg: 1.0,
        }
    }
}

pub fn enclosing_polygon(mesh: &TriMesh) -> Result<FootprintPolygon, GeometryError> {
    enclosing_polygon_with(mesh, &FootprintParams::default())
}

pub fn enclosing_polygon_with(
    mesh: &TriMesh,
    params: &FootprintParams,
) -> Result<FootprintPolygon, GeometryError> {
    if mesh.is_empty() {
        return Err(GeometryError::InvalidInput("empty mesh has no footprint".into()));
    }
    if !(params.cell_size > 0.0) {
        return Err(GeometryError::InvalidInput("cell size must be positive".into()));
    }
    let pts: Vec<Point2<f64>> = mesh.vertices().iter().map(|p| Point2::new(p.x, p.y)).collect();
    let hull = convex_hull(&pts);
    let hull_poly = FootprintPolygon {
        vertices: hull,
        is_convex: true,
    };
    if hull_poly.vertices.len() >= 3 && all_right_angles(&hull_poly.vertices, params.angle_tolerance_deg) {
        return Ok(hull_poly);
    }
    match raster_outline(mesh, params.cell_size) {
        Some(poly) => Ok(poly),
        None => {
            log::warn!("footprint raster is not a single region; falling back to the convex hull");
            if hull_poly.vertices.len() < 3 {
                return Err(GeometryError::InvalidInput("footprint has zero area".into()));
            }
            Ok(hull_poly)
        }
    }
}

/// Andrew's monotone chain; collinear points dropped; counter-clockwise.
pub fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn all_right_angles(poly: &[Point2<f64>], tol_deg: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b, c) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
        let u = a - b;
        let v = c - b;
        let angle = u.dot(&v).atan2(u.perp(&v).abs()).to_degrees();
        // atan2(dot, |cross|) is 90° - interior angle
        angle.abs() <= tol_deg
    })
}

/// Occupancy raster of the projected footprint. Cell `(i, j)` covers
/// `[origin + i·cell, origin + (i+1)·cell]`.
struct FootprintRaster {
    origin: Point2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    occ: Vec<bool>,
}

impl FootprintRaster {
    fn get(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny && self.occ[j as usize * self.nx + i as usize]
    }

    fn set(&mut self, i: usize, j: usize, v: bool) {
        self.occ[j * self.nx + i] = v;
    }
}

fn rasterize_footprint(mesh: &TriMesh, cell: f64) -> FootprintRaster {
    let rect = enclosing_rectangle(mesh);
    // one empty cell of padding on every side
    let origin = Point2::new(rect.min.x - cell, rect.min.y - cell);
    let nx = ((rect.width() / cell) - 1e-9).ceil().max(1.0) as usize + 2;
    let ny = ((rect.height() / cell) - 1e-9).ceil().max(1.0) as usize + 2;
    let mut r = FootprintRaster {
        origin,
        cell,
        nx,
        ny,
        occ: vec![false; nx * ny],
    };
    // cells are shrunk slightly so geometry lying on a cell boundary does not
    // spill into the neighbour
    let shrink = cell * 1e-6;
    for t in 0..mesh.triangle_count() {
        let tri3 = mesh.triangle(t);
        let tri = [
            Point2::new(tri3[0].x, tri3[0].y),
            Point2::new(tri3[1].x, tri3[1].y),
            Point2::new(tri3[2].x, tri3[2].y),
        ];
        let lo = tri.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |a, p| a.inf(p));
        let hi = tri.iter().fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| a.sup(p));
        let i0 = (((lo.x - origin.x) / cell).floor() as isize).max(0) as usize;
        let j0 = (((lo.y - origin.y) / cell).floor() as isize).max(0) as usize;
        let i1 = (((hi.x - origin.x) / cell).floor() as usize).min(nx - 1);
        let j1 = (((hi.y - origin.y) / cell).floor() as usize).min(ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                if r.occ[j * nx + i] {
                    continue;
                }
                let bmin = Point2::new(origin.x + i as f64 * cell + shrink, origin.y + j as f64 * cell + shrink);
                let bmax = Point2::new(
                    origin.x + (i + 1) as f64 * cell - shrink,
                    origin.y + (j + 1) as f64 * cell - shrink,
                );
                if triangle_overlaps_box_2d(&tri, bmin, bmax) {
                    r.set(i, j, true);
                }
            }
        }
    }
    r
}

/// Separating-axis test between a (possibly degenerate) 2D triangle and an
/// axis-aligned box. Touching counts as separated.
pub(crate) fn triangle_overlaps_box_2d(tri: &[Point2<f64>; 3], bmin: Point2<f64>, bmax: Point2<f64>) -> bool {
    let lo = tri.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |a, p| a.inf(p));
    let hi = tri.iter().fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| a.sup(p));
    if hi.x <= bmin.x || lo.x >= bmax.x || hi.y <= bmin.y || lo.y >= bmax.y {
        return false;
    }
    let corners = [bmin, Point2::new(bmax.x, bmin.y), bmax, Point2::new(bmin.x, bmax.y)];
    for k in 0..3 {
        let e = tri[(k + 1) % 3] - tri[k];
        if e.norm_squared() == 0.0 {
            continue;
        }
        let axis = nalgebra::Vector2::new(-e.y, e.x);
        let proj = |p: &Point2<f64>| axis.dot(&p.coords);
        let (tmin, tmax) = tri.iter().map(proj).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (cmin, cmax) = corners.iter().map(proj).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if tmax <= cmin || cmax <= tmin {
            return false;
        }
    }
    true
}

/// Traces the outer boundary of the raster footprint. Returns `None` when the
/// filled footprint is not a single 4-connected region.
fn raster_outline(mesh: &TriMesh, cell: f64) -> Option<FootprintPolygon> {
    let mut r = rasterize_footprint(mesh, cell);
    loop {
        fill_holes(&mut r);
        if !close_pinches(&mut r) {
            break;
        }
    }
    if count_components(&r) != 1 {
        return None;
    }
    let loop_pts = trace_boundary(&r)?;
    let vertices: Vec<Point2<f64>> = loop_pts
        .into_iter()
        .map(|(i, j)| Point2::new(r.origin.x + i as f64 * r.cell, r.origin.y + j as f64 * r.cell))
        .collect();
    Some(FootprintPolygon {
        vertices,
        is_convex: false,
    })
}

/// Marks every cell not reachable from the padded border as occupied.
fn fill_holes(r: &mut FootprintRaster) {
    let (nx, ny) = (r.nx, r.ny);
    let mut outside = vec![false; nx * ny];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for i in 0..nx {
        stack.push((i, 0));
        stack.push((i, ny - 1));
    }
    for j in 0..ny {
        stack.push((0, j));
        stack.push((nx - 1, j));
    }
    while let Some((i, j)) = stack.pop() {
        let k = j * nx + i;
        if outside[k] || r.occ[k] {
            continue;
        }
        outside[k] = true;
        if i > 0 {
            stack.push((i - 1, j));
        }
        if i + 1 < nx {
            stack.push((i + 1, j));
        }
        if j > 0 {
            stack.push((i, j - 1));
        }
        if j + 1 < ny {
            stack.push((i, j + 1));
        }
    }
    for k in 0..nx * ny {
        if !outside[k] {
            r.occ[k] = true;
        }
    }
}

/// Fills 2×2 windows whose occupied cells touch only diagonally. Returns
/// whether anything changed.
fn close_pinches(r: &mut FootprintRaster) -> bool {
    let mut changed = false;
    for j in 0..r.ny - 1 {
        for i in 0..r.nx - 1 {
            let (ii, jj) = (i as isize, j as isize);
            let a = r.get(ii, jj);
            let b = r.get(ii + 1, jj);
            let c = r.get(ii, jj + 1);
            let d = r.get(ii + 1, jj + 1);
            if (a && d && !b && !c) || (b && c && !a && !d) {
                r.set(i, j, true);
                r.set(i + 1, j, true);
                r.set(i, j + 1, true);
                r.set(i + 1, j + 1, true);
                changed = true;
            }
        }
    }
    changed
}

fn count_components(r: &FootprintRaster) -> usize {
    let mut seen = vec![false; r.nx * r.ny];
    let mut comps = 0;
    for start in 0..r.nx * r.ny {
        if !r.occ[start] || seen[start] {
            continue;
        }
        comps += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (i, j) = ((k % r.nx) as isize, (k / r.nx) as isize);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if r.get(i + di, j + dj) {
                    let nk = (j + dj) as usize * r.nx + (i + di) as usize;
                    if !seen[nk] {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
    }
    comps
}

/// Walks directed boundary edges (interior on the left) and drops collinear
/// vertices. Vertex coordinates are in cell-corner units.
fn trace_boundary(r: &FootprintRaster) -> Option<Vec<(i64, i64)>> {
    let mut next: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    for j in 0..r.ny as isize {
        for i in 0..r.nx as isize {
            if !r.get(i, j) {
                continue;
            }
            let (x, y) = (i as i64, j as i64);
            if !r.get(i, j - 1) {
                next.insert((x, y), (x + 1, y));
            }
            if !r.get(i + 1, j) {
                next.insert((x + 1, y), (x + 1, y + 1));
            }
            if !r.get(i, j + 1) {
                next.insert((x + 1, y + 1), (x, y + 1));
            }
            if !r.get(i - 1, j) {
                next.insert((x, y + 1), (x, y));
            }
        }
    }
    let start = *next.keys().min_by_key(|(x, y)| (*y, *x))?;
    let mut ring = vec![start];
    let mut cur = next[&start];
    while cur != start {
        ring.push(cur);
        cur = *next.get(&cur)?;
        if ring.len() > next.len() {
            return None;
        }
    }
    if ring.len() != next.len() {
        return None;
    }
    let n = ring.len();
    let simplified: Vec<(i64, i64)> = (0..n)
        .filter(|&k| {
            let (a, b, c) = (ring[(k + n - 1) % n], ring[k], ring[(k + 1) % n]);
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|k| ring[k])
        .collect();
    Some(simplified)
}
