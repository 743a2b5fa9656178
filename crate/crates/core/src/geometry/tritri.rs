//! Triangle/triangle intersection (Möller's interval test with a coplanar
//! fallback). Touching counts as intersecting.

use std::cmp::Ordering;

use nalgebra::{Point3, Vector3};

use super::Aabb;

pub type Triangle = [Point3<f64>; 3];

/// Symmetric intersection predicate: `intersects(a, b) == intersects(b, a)`
/// bit-for-bit. Triangles whose bounding boxes are disjoint never intersect.
pub fn triangles_intersect(a: &Triangle, b: &Triangle) -> bool {
    if !Aabb::from_points(a.iter()).overlaps(&Aabb::from_points(b.iter())) {
        return false;
    }
    match canonical_order(a, b) {
        Ordering::Greater => moller(b, a),
        _ => moller(a, b),
    }
}

fn canonical_order(a: &Triangle, b: &Triangle) -> Ordering {
    a.iter()
        .flat_map(|p| p.coords.iter())
        .zip(b.iter().flat_map(|p| p.coords.iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn moller(v: &Triangle, u: &Triangle) -> bool {
    // plane of v
    let n1 = (v[1] - v[0]).cross(&(v[2] - v[0]));
    let d1 = -n1.dot(&v[0].coords);
    let du = [
        n1.dot(&u[0].coords) + d1,
        n1.dot(&u[1].coords) + d1,
        n1.dot(&u[2].coords) + d1,
    ];
    let du0du1 = du[0] * du[1];
    let du0du2 = du[0] * du[2];
    if du0du1 > 0.0 && du0du2 > 0.0 {
        return false;
    }

    // plane of u
    let n2 = (u[1] - u[0]).cross(&(u[2] - u[0]));
    let d2 = -n2.dot(&u[0].coords);
    let dv = [
        n2.dot(&v[0].coords) + d2,
        n2.dot(&v[1].coords) + d2,
        n2.dot(&v[2].coords) + d2,
    ];
    let dv0dv1 = dv[0] * dv[1];
    let dv0dv2 = dv[0] * dv[2];
    if dv0dv1 > 0.0 && dv0dv2 > 0.0 {
        return false;
    }

    // project onto the dominant axis of the intersection line
    let dir = n1.cross(&n2);
    let index = dominant_axis(&dir);
    let vp = [v[0][index], v[1][index], v[2][index]];
    let up = [u[0][index], u[1][index], u[2][index]];

    let Some((a, b, c, x0, x1)) = interval_terms(vp, dv, dv0dv1, dv0dv2) else {
        return coplanar(&n1, v, u);
    };
    let Some((d, e, f, y0, y1)) = interval_terms(up, du, du0du1, du0du2) else {
        return coplanar(&n1, v, u);
    };

    let xx = x0 * x1;
    let yy = y0 * y1;
    let xxyy = xx * yy;

    let tmp = a * xxyy;
    let mut i1 = [tmp + b * x1 * yy, tmp + c * x0 * yy];
    let tmp = d * xxyy;
    let mut i2 = [tmp + e * xx * y1, tmp + f * xx * y0];
    if i1[0] > i1[1] {
        i1.swap(0, 1);
    }
    if i2[0] > i2[1] {
        i2.swap(0, 1);
    }
    !(i1[1] < i2[0] || i2[1] < i1[0])
}

fn dominant_axis(d: &Vector3<f64>) -> usize {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    if ax >= ay && ax >= az {
        0
    } else if ay >= az {
        1
    } else {
        2
    }
}

/// Returns `(A, B, C, X0, X1)` of the division-free interval form, or
/// `None` when the triangles are coplanar.
fn interval_terms(
    vv: [f64; 3],
    d: [f64; 3],
    d0d1: f64,
    d0d2: f64,
) -> Option<(f64, f64, f64, f64, f64)> {
    if d0d1 > 0.0 {
        Some((vv[2], (vv[0] - vv[2]) * d[2], (vv[1] - vv[2]) * d[2], d[2] - d[0], d[2] - d[1]))
    } else if d0d2 > 0.0 {
        Some((vv[1], (vv[0] - vv[1]) * d[1], (vv[2] - vv[1]) * d[1], d[1] - d[0], d[1] - d[2]))
    } else if d[1] * d[2] > 0.0 || d[0] != 0.0 {
        Some((vv[0], (vv[1] - vv[0]) * d[0], (vv[2] - vv[0]) * d[0], d[0] - d[1], d[0] - d[2]))
    } else if d[1] != 0.0 {
        Some((vv[1], (vv[0] - vv[1]) * d[1], (vv[2] - vv[1]) * d[1], d[1] - d[0], d[1] - d[2]))
    } else if d[2] != 0.0 {
        Some((vv[2], (vv[0] - vv[2]) * d[2], (vv[1] - vv[2]) * d[2], d[2] - d[0], d[2] - d[1]))
    } else {
        None
    }
}

fn coplanar(n: &Vector3<f64>, v: &Triangle, u: &Triangle) -> bool {
    // drop the axis along which the triangles' plane has the largest extent
    let (i0, i1) = match dominant_axis(n) {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let p = |t: &Triangle| [[t[0][i0], t[0][i1]], [t[1][i0], t[1][i1]], [t[2][i0], t[2][i1]]];
    let (a, b) = (p(v), p(u));
    for i in 0..3 {
        for j in 0..3 {
            if segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]) {
                return true;
            }
        }
    }
    point_in_triangle_2d(a[0], &b) || point_in_triangle_2d(b[0], &a)
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect_2d(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn point_in_triangle_2d(p: [f64; 2], t: &[[f64; 2]; 3]) -> bool {
    let d0 = orient2d(t[0], t[1], p);
    let d1 = orient2d(t[1], t[2], p);
    let d2 = orient2d(t[2], t[0], p);
    let has_neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let has_pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(has_neg && has_pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bvh::ray_triangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    /// Segment/triangle crossing via the ray test restricted to the segment.
    fn segment_hits(a: &Point3<f64>, b: &Point3<f64>, tri: &Triangle) -> bool {
        let d = b - a;
        let len = d.norm();
        ray_triangle(a, &(d / len), tri).is_some_and(|t| t <= len)
    }

    #[test]
    fn piercing_triangles_intersect() {
        let a = [p(0.0, 0.0, 0.0), p(2.0, 0.0, 0.0), p(0.0, 2.0, 0.0)];
        let b = [p(0.5, 0.5, -1.0), p(0.5, 0.5, 1.0), p(1.5, 0.5, 1.0)];
        assert!(triangles_intersect(&a, &b));
        assert!(triangles_intersect(&b, &a));
    }

    #[test]
    fn separated_triangles_do_not_intersect() {
        let a = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)];
        let b = [p(0.0, 0.0, 0.5), p(1.0, 0.0, 0.5), p(0.0, 1.0, 0.5)];
        assert!(!triangles_intersect(&a, &b));
    }

    #[test]
    fn coplanar_overlap_and_disjoint() {
        let a = [p(0.0, 0.0, 0.0), p(2.0, 0.0, 0.0), p(0.0, 2.0, 0.0)];
        let b = [p(0.5, 0.5, 0.0), p(1.0, 0.5, 0.0), p(0.5, 1.0, 0.0)];
        assert!(triangles_intersect(&a, &b), "contained coplanar");
        let c = [p(3.0, 3.0, 0.0), p(4.0, 3.0, 0.0), p(3.0, 4.0, 0.0)];
        assert!(!triangles_intersect(&a, &c));
        let d = [p(1.0, -1.0, 0.0), p(1.0, 3.0, 0.0), p(3.0, 1.0, 0.0)];
        assert!(triangles_intersect(&a, &d), "crossing edges");
    }

    #[test]
    fn agrees_with_edge_crossing_oracle_on_random_pairs() {
        // For generic (non-coplanar, non-touching) pairs, two triangles
        // intersect iff an edge of one crosses the other.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..20_000 {
            let mut tri = || -> Triangle {
                let c = p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let mut r = || c + nalgebra::Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                [r(), r(), r()]
            };
            let a = tri();
            let b = tri();
            let oracle = (0..3).any(|i| segment_hits(&a[i], &a[(i + 1) % 3], &b))
                || (0..3).any(|i| segment_hits(&b[i], &b[(i + 1) % 3], &a));
            assert_eq!(triangles_intersect(&a, &b), oracle, "a={a:?} b={b:?}");
            hits += oracle as usize;
        }
        assert!(hits > 1000, "sample should contain intersecting pairs ({hits})");
    }
}
