use super::bvh::BvhNodeKind;
use super::tritri::triangles_intersect;
use super::{Bvh, GeometryError, Pose, TriMesh};

/// A mesh transformed into world coordinates together with its BVH.
///
/// Contact counting is defined on world-space coordinates: both meshes are
/// posed with [`Pose::transform_point`] and every pair of world triangles is
/// tested with [`triangles_intersect`].
#[derive(Debug, Clone)]
pub struct CollisionObject {
    mesh: TriMesh,
    bvh: Option<Bvh>,
}

impl CollisionObject {
    pub fn new(mesh: &TriMesh, pose: &Pose) -> Result<Self, GeometryError> {
        Ok(Self::from_world(mesh.transformed(pose)))
    }

    /// Wraps a mesh whose vertices are already in world coordinates.
    pub fn from_world(mesh: TriMesh) -> Self {
        let bvh = if mesh.is_empty() {
            None
        } else {
            Some(Bvh::build(&mesh).expect("non-empty mesh"))
        };
        Self { mesh, bvh }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> Option<&Bvh> {
        self.bvh.as_ref()
    }
}

/// Number of intersecting triangle pairs between the posed meshes, stopping
/// once `cap` is reached (the result is then exactly `cap`).
pub fn contact_count(a: &TriMesh, pose_a: &Pose, b: &TriMesh, pose_b: &Pose, cap: usize) -> usize {
    let oa = CollisionObject::from_world(a.transformed(pose_a));
    let ob = CollisionObject::from_world(b.transformed(pose_b));
    contact_count_objects(&oa, &ob, cap)
}

/// Dual-tree traversal over two prebuilt objects.
pub fn contact_count_objects(a: &CollisionObject, b: &CollisionObject, cap: usize) -> usize {
    let (Some(ba), Some(bb)) = (&a.bvh, &b.bvh) else {
        return 0;
    };
    if cap == 0 {
        return 0;
    }
    let na = ba.nodes();
    let nb = bb.nodes();
    let mut count = 0usize;
    let mut stack: Vec<(u32, u32)> = vec![(0, 0)];
    while let Some((ia, ib)) = stack.pop() {
        let (x, y) = (&na[ia as usize], &nb[ib as usize]);
        if !x.bounds.overlaps(&y.bounds) {
            continue;
        }
        match (x.kind, y.kind) {
            (BvhNodeKind::Leaf { start: sa, count: ca }, BvhNodeKind::Leaf { start: sb, count: cb }) => {
                let ta = &ba.triangle_order()[sa as usize..(sa + ca) as usize];
                let tb = &bb.triangle_order()[sb as usize..(sb + cb) as usize];
                for &i in ta {
                    let tri_a = a.mesh.triangle(i as usize);
                    for &j in tb {
                        if triangles_intersect(&tri_a, &b.mesh.triangle(j as usize)) {
                            count += 1;
                            if count >= cap {
                                return cap;
                            }
                        }
                    }
                }
            }
            (BvhNodeKind::Inner { left, right }, BvhNodeKind::Leaf { .. }) => {
                stack.push((right, ib));
                stack.push((left, ib));
            }
            (BvhNodeKind::Leaf { .. }, BvhNodeKind::Inner { left, right }) => {
                stack.push((ia, right));
                stack.push((ia, left));
            }
            (BvhNodeKind::Inner { left: la, right: ra }, BvhNodeKind::Inner { left: lb, right: rb }) => {
                // descend the larger box
                if x.bounds.extent().norm_squared() >= y.bounds.extent().norm_squared() {
                    stack.push((ra, ib));
                    stack.push((la, ib));
                } else {
                    stack.push((ia, rb));
                    stack.push((ia, lb));
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{centered_box, AssetId};
    use nalgebra::{Point3, Vector3};

    fn cube(id: u32) -> TriMesh {
        centered_box(Point3::origin(), Vector3::repeat(1.0), AssetId(id))
    }

    fn brute(a: &TriMesh, pa: &Pose, b: &TriMesh, pb: &Pose) -> usize {
        let wa = a.transformed(pa);
        let wb = b.transformed(pb);
        let mut n = 0;
        for i in 0..wa.triangle_count() {
            for j in 0..wb.triangle_count() {
                n += triangles_intersect(&wa.triangle(i), &wb.triangle(j)) as usize;
            }
        }
        n
    }

    #[test]
    fn disjoint_cubes_have_no_contacts() {
        let n = contact_count(
            &cube(1),
            &Pose::identity(),
            &cube(2),
            &Pose::from_translation(2.0, 0.0, 0.0),
            usize::MAX,
        );
        assert_eq!(n, 0);
    }

    #[test]
    fn overlapping_cubes_match_brute_force() {
        let pb = Pose::from_translation(0.5, 0.0, 0.0);
        let n = contact_count(&cube(1), &Pose::identity(), &cube(2), &pb, usize::MAX);
        assert!(n > 0);
        assert_eq!(n, brute(&cube(1), &Pose::identity(), &cube(2), &pb));
    }

    #[test]
    fn cap_stops_early() {
        let pb = Pose::from_translation(0.5, 0.0, 0.0);
        assert_eq!(contact_count(&cube(1), &Pose::identity(), &cube(2), &pb, 3), 3);
    }

    #[test]
    fn empty_objects_have_no_contacts() {
        let empty = TriMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![],
            AssetId(9),
        )
        .unwrap();
        assert_eq!(contact_count(&empty, &Pose::identity(), &cube(1), &Pose::identity(), 10), 0);
    }
}
