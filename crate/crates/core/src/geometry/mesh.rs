use std::collections::HashMap;
use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose};

/// Vertices closer than this (per axis) are merged on ingestion.
pub const WELD_TOLERANCE: f64 = 1e-6;
/// Triangles with area at or below this are dropped on ingestion.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Opaque identifier of a scene object. `0` is reserved for background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct AssetId(pub u32);

impl AssetId {
    pub const BACKGROUND: AssetId = AssetId(0);
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned bounding box. An empty box has `min > max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Closed-interval overlap: touching boxes overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
            && self.min.z <= other.max.z
            && other.min.z <= self.max.z
    }

    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        other.is_empty() || (self.contains_point(&other.min) && self.contains_point(&other.max))
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }

    /// Slab test. Returns the parametric entry/exit interval clipped to
    /// `[0, t_max]`, or `None` on a miss.
    pub fn ray_interval(
        &self,
        origin: &Point3<f64>,
        inv_dir: &Vector3<f64>,
        t_max: f64,
    ) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if inv_dir[i].is_infinite() {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let mut near = (self.min[i] - origin[i]) * inv_dir[i];
            let mut far = (self.max[i] - origin[i]) * inv_dir[i];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Indexed triangle mesh in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    asset_id: AssetId,
}

impl TriMesh {
    /// Validates indices and drops degenerate triangles. Vertices are kept
    /// as given; use [`TriMesh::welded`] for raw soup input.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        asset_id: AssetId,
    ) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidInput(format!(
                "mesh needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices
            .iter()
            .find(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(GeometryError::InvalidInput(format!("non-finite vertex {p:?}")));
        }
        let n = vertices.len() as u32;
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v >= n))
        {
            return Err(GeometryError::InvalidInput(format!(
                "triangle {i} references vertex out of range: {t:?} (vertex count {n})"
            )));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| !is_degenerate(&vertices, t))
            .collect();
        Ok(Self {
            vertices,
            triangles,
            asset_id,
        })
    }

    /// Builds a mesh from a triangle soup, welding vertices within
    /// `tolerance` (per axis) and dropping degenerate triangles.
    pub fn welded(
        soup: &[[Point3<f64>; 3]],
        tolerance: f64,
        asset_id: AssetId,
    ) -> Result<Self, GeometryError> {
        let mut welder = Welder::new(tolerance);
        let triangles: Vec<[u32; 3]> = soup
            .iter()
            .map(|tri| [welder.insert(tri[0]), welder.insert(tri[1]), welder.insert(tri[2])])
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        Self::new(welder.into_vertices(), triangles, asset_id)
    }

    /// Concatenates meshes without welding. The result carries `asset_id`.
    pub fn concat<'a>(
        meshes: impl IntoIterator<Item = &'a TriMesh>,
        asset_id: AssetId,
    ) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in meshes {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        Self::new(vertices, triangles, asset_id)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn asset_id(&self) -> AssetId {
        self.asset_id
    }

    pub fn with_asset_id(mut self, id: AssetId) -> Self {
        self.asset_id = id;
        self
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn triangle_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn transformed(&self, pose: &Pose) -> TriMesh {
        if pose.is_identity() {
            return self.clone();
        }
        TriMesh {
            vertices: self.vertices.iter().map(|p| pose.transform_point(p)).collect(),
            triangles: self.triangles.clone(),
            asset_id: self.asset_id,
        }
    }

    /// Same topology, new vertex positions. Degenerate triangles are kept so
    /// that per-frame meshes share indexing with the base mesh.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<TriMesh, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::InvalidInput(format!(
                "vertex count {} does not match topology ({})",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(TriMesh {
            vertices,
            triangles: self.triangles.clone(),
            asset_id: self.asset_id,
        })
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }
}

fn is_degenerate(vertices: &[Point3<f64>], t: &[u32; 3]) -> bool {
    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
        return true;
    }
    let a = vertices[t[0] as usize];
    let b = vertices[t[1] as usize];
    let c = vertices[t[2] as usize];
    0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA
}

/// Spatial-hash vertex welder. The first vertex inserted in a cluster keeps
/// its position.
struct Welder {
    tolerance: f64,
    vertices: Vec<Point3<f64>>,
    grid: HashMap<[i64; 3], Vec<u32>>,
}

impl Welder {
    fn new(tolerance: f64) -> Self {
        Self {
            tolerance: tolerance.max(f64::MIN_POSITIVE),
            vertices: Vec::new(),
            grid: HashMap::new(),
        }
    }

    fn key(&self, p: &Point3<f64>) -> [i64; 3] {
        [
            (p.x / self.tolerance).floor() as i64,
            (p.y / self.tolerance).floor() as i64,
            (p.z / self.tolerance).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point3<f64>) -> u32 {
        let k = self.key(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let nk = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if let Some(ids) = self.grid.get(&nk) {
                        for &id in ids {
                            let q = self.vertices[id as usize];
                            if (q - p).amax() <= self.tolerance {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        let id = self.vertices.len() as u32;
        self.vertices.push(p);
        self.grid.entry(k).or_default().push(id);
        id
    }

    fn into_vertices(self) -> Vec<Point3<f64>> {
        self.vertices
    }
}

/// Closed axis-aligned box mesh (12 outward-facing triangles).
pub fn box_mesh(min: Point3<f64>, max: Point3<f64>, asset_id: AssetId) -> TriMesh {
    let v = Aabb::new(min, max).corners().to_vec();
    // corner index bits: x=1, y=2, z=4
    let triangles = vec![
        [0, 2, 3],
        [0, 3, 1], // -z
        [4, 5, 7],
        [4, 7, 6], // +z
        [0, 1, 5],
        [0, 5, 4], // -y
        [2, 6, 7],
        [2, 7, 3], // +y
        [0, 4, 6],
        [0, 6, 2], // -x
        [1, 3, 7],
        [1, 7, 5], // +x
    ];
    TriMesh::new(v, triangles, asset_id).expect("box corners form a valid mesh")
}

/// Box centered at `center` with full edge lengths `size`.
pub fn centered_box(center: Point3<f64>, size: Vector3<f64>, asset_id: AssetId) -> TriMesh {
    let h = size * 0.5;
    box_mesh(center - h, center + h, asset_id)
}

/// UV sphere, mainly for tests and procedural assets.
pub fn uv_sphere(
    center: Point3<f64>,
    radii: Vector3<f64>,
    segments: u32,
    rings: u32,
    asset_id: AssetId,
) -> TriMesh {
    let segments = segments.max(3);
    let rings = rings.max(2);
    let mut vertices = vec![center + Vector3::new(0.0, 0.0, -radii.z)];
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64 - std::f64::consts::FRAC_PI_2;
        for s in 0..segments {
            let theta = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(
                center
                    + Vector3::new(
                        radii.x * phi.cos() * theta.cos(),
                        radii.y * phi.cos() * theta.sin(),
                        radii.z * phi.sin(),
                    ),
            );
        }
    }
    vertices.push(center + Vector3::new(0.0, 0.0, radii.z));
    let top = vertices.len() as u32 - 1;
    let ring = |r: u32, s: u32| 1 + (r - 1) * segments + (s % segments);
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s + 1), ring(1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    for s in 0..segments {
        triangles.push([top, ring(rings - 1, s), ring(rings - 1, s + 1)]);
    }
    TriMesh::new(vertices, triangles, asset_id).expect("sphere topology is valid")
}
