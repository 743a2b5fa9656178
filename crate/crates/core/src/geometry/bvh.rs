use nalgebra::{Point3, Vector3};

use super::{Aabb, AssetId, GeometryError, TriMesh};

/// Maximum number of triangles stored in one leaf.
pub const MAX_LEAF_SIZE: usize = 8;

/// Hits closer than this along the ray are ignored.
const RAY_T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BvhNodeKind {
    /// Range into [`Bvh::triangle_order`].
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub kind: BvhNodeKind,
}

/// Median-split bounding volume hierarchy over the triangles of one mesh.
///
/// The BVH does not own the mesh; every query takes the mesh it was built
/// from. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the normalized ray direction, in meters.
    pub t: f64,
    pub triangle: u32,
    /// Unit geometric normal following the triangle winding.
    pub normal: Vector3<f64>,
    pub asset_id: AssetId,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Result<Bvh, GeometryError> {
        let n = mesh.triangle_count();
        if n == 0 {
            return Err(GeometryError::InvalidInput("cannot build a BVH over an empty mesh".into()));
        }
        let bounds: Vec<Aabb> = (0..n).map(|i| Aabb::from_points(mesh.triangle(i).iter())).collect();
        let centroids: Vec<Point3<f64>> = bounds.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / MAX_LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, n, &bounds, &centroids);
        Ok(Bvh { nodes, order })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Triangle indices permuted so that every leaf covers a contiguous range.
    pub fn triangle_order(&self) -> &[u32] {
        &self.order
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Triangle indices of every leaf, in traversal order.
    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            BvhNodeKind::Leaf { start, count } => {
                Some(&self.order[start as usize..(start + count) as usize])
            }
            BvhNodeKind::Inner { .. } => None,
        })
    }

    /// Nearest hit along the ray, ties broken by lowest triangle index.
    pub fn raycast(&self, mesh: &TriMesh, origin: &Point3<f64>, direction: &Vector3<f64>) -> Option<Hit> {
        self.raycast_within(mesh, origin, direction, f64::INFINITY)
    }

    /// As [`Bvh::raycast`] but ignores hits farther than `t_max`.
    pub fn raycast_within(
        &self,
        mesh: &TriMesh,
        origin: &Point3<f64>,
        direction: &Vector3<f64>,
        t_max: f64,
    ) -> Option<Hit> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let dir = direction / norm;
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, u32)> = None;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            let limit = best.map_or(t_max, |(t, _)| t * (1.0 + 1e-9) + 1e-12);
            let Some((entry, _)) = node.bounds.ray_interval(origin, &inv, limit) else {
                continue;
            };
            if entry > limit {
                continue;
            }
            match node.kind {
                BvhNodeKind::Leaf { start, count } => {
                    for &tri in &self.order[start as usize..(start + count) as usize] {
                        if let Some(t) = ray_triangle(origin, &dir, &mesh.triangle(tri as usize)) {
                            if t <= t_max && closer(t, tri, best) {
                                best = Some((t, tri));
                            }
                        }
                    }
                }
                BvhNodeKind::Inner { left, right } => {
                    let dl = self.nodes[left as usize]
                        .bounds
                        .ray_interval(origin, &inv, limit)
                        .map(|r| r.0);
                    let dr = self.nodes[right as usize]
                        .bounds
                        .ray_interval(origin, &inv, limit)
                        .map(|r| r.0);
                    match (dl, dr) {
                        (Some(a), Some(b)) if a <= b => {
                            stack.push(right);
                            stack.push(left);
                        }
                        (Some(_), Some(_)) => {
                            stack.push(left);
                            stack.push(right);
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, tri)| make_hit(mesh, t, tri))
    }

    /// Checks structural invariants: each triangle in exactly one leaf, every
    /// node box containing its children and leaf triangles, leaf sizes.
    pub fn validate(&self, mesh: &TriMesh) -> Result<(), GeometryError> {
        let mut seen = vec![0u32; mesh.triangle_count()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                BvhNodeKind::Leaf { start, count } => {
                    if count as usize > MAX_LEAF_SIZE || count == 0 {
                        return Err(GeometryError::Invariant(format!("leaf {i} holds {count} triangles")));
                    }
                    for &t in &self.order[start as usize..(start + count) as usize] {
                        seen[t as usize] += 1;
                        let tb = Aabb::from_points(mesh.triangle(t as usize).iter());
                        if !node.bounds.contains(&tb) {
                            return Err(GeometryError::Invariant(format!("leaf {i} does not contain triangle {t}")));
                        }
                    }
                }
                BvhNodeKind::Inner { left, right } => {
                    for c in [left, right] {
                        if !node.bounds.contains(&self.nodes[c as usize].bounds) {
                            return Err(GeometryError::Invariant(format!("node {i} does not contain child {c}")));
                        }
                    }
                }
            }
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(GeometryError::Invariant(format!(
                "triangle {t} appears in {} leaves",
                seen[t]
            )));
        }
        Ok(())
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    order: &mut [u32],
    start: usize,
    end: usize,
    bounds: &[Aabb],
    centroids: &[Point3<f64>],
) -> u32 {
    let slice = &mut order[start..end];
    let node_bounds = slice
        .iter()
        .fold(Aabb::empty(), |acc, &t| acc.union(&bounds[t as usize]));
    let idx = nodes.len() as u32;
    let count = end - start;
    if count <= MAX_LEAF_SIZE {
        nodes.push(BvhNode {
            bounds: node_bounds,
            kind: BvhNodeKind::Leaf {
                start: start as u32,
                count: count as u32,
            },
        });
        return idx;
    }
    let cbounds = Aabb::from_points(slice.iter().map(|&t| &centroids[t as usize]));
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(BvhNode {
        bounds: node_bounds,
        kind: BvhNodeKind::Leaf { start: 0, count: 0 },
    });
    let left = build_node(nodes, order, start, start + mid, bounds, centroids);
    let right = build_node(nodes, order, start + mid, end, bounds, centroids);
    nodes[idx as usize].kind = BvhNodeKind::Inner { left, right };
    idx
}

#[inline]
fn closer(t: f64, tri: u32, best: Option<(f64, u32)>) -> bool {
    match best {
        None => true,
        Some((bt, btri)) => t < bt || (t == bt && tri < btri),
    }
}

fn make_hit(mesh: &TriMesh, t: f64, tri: u32) -> Hit {
    let [a, b, c] = mesh.triangle(tri as usize);
    let n = (b - a).cross(&(c - a));
    let normal = if n.norm() > 0.0 { n.normalize() } else { Vector3::z() };
    Hit {
        t,
        triangle: tri,
        normal,
        asset_id: mesh.asset_id(),
    }
}

/// Möller–Trumbore ray/triangle intersection for a unit `dir`. Returns the
/// hit distance when it exceeds the minimum ray offset.
#[inline]
pub fn ray_triangle(origin: &Point3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t > RAY_T_MIN).then_some(t)
}

/// Reference raycast by scanning every triangle.
pub fn raycast_linear(mesh: &TriMesh, origin: &Point3<f64>, direction: &Vector3<f64>) -> Option<Hit> {
    let norm = direction.norm();
    if !(norm > 0.0) {
        return None;
    }
    let dir = direction / norm;
    let mut best = None;
    for i in 0..mesh.triangle_count() {
        if let Some(t) = ray_triangle(origin, &dir, &mesh.triangle(i)) {
            if closer(t, i as u32, best) {
                best = Some((t, i as u32));
            }
        }
    }
    best.map(|(t, tri)| make_hit(mesh, t, tri))
}
