use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Rigid transform from a local frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub const NORM_TOLERANCE: f64 = 1e-9;

    /// Builds a pose from raw quaternion components `(x, y, z, w)`.
    ///
    /// The quaternion must already be unit length within
    /// [`Pose::NORM_TOLERANCE`]; it is not silently renormalized beyond that.
    pub fn from_parts(position: Point3<f64>, xyzw: [f64; 4]) -> Result<Self, GeometryError> {
        let q = nalgebra::Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(GeometryError::InvalidInput(format!(
                "quaternion norm {norm} is not within {} of 1",
                Self::NORM_TOLERANCE
            )));
        }
        if !(position.x.is_finite() && position.y.is_finite() && position.z.is_finite()) {
            return Err(GeometryError::InvalidInput("non-finite position".into()));
        }
        Ok(Self {
            position,
            orientation: UnitQuaternion::new_unchecked(q),
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Point3::origin(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Point3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Point3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Translation plus a rotation about +z.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            Point3::new(x, y, z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        )
    }

    pub fn is_identity(&self) -> bool {
        self.position == Point3::origin() && self.orientation == UnitQuaternion::identity()
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        if self.orientation == UnitQuaternion::identity() {
            return p + self.position.coords;
        }
        self.orientation * p + self.position.coords
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.orientation.inverse() * (p - self.position.coords)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.transform_point(&other.position),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: Point3::from(-(inv * self.position.coords)),
            orientation: inv,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position.coords), self.orientation)
    }

    /// Quaternion components in `(x, y, z, w)` order.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// Linear interpolation of position and slerp of orientation.
    pub fn interpolate(&self, other: &Pose, w: f64) -> Pose {
        if w == 0.0 {
            return *self;
        }
        if w == 1.0 {
            return *other;
        }
        let position = self.position + (other.position - self.position) * w;
        let orientation = self
            .orientation
            .try_slerp(&other.orientation, w, 1e-12)
            .unwrap_or(self.orientation);
        Pose {
            position,
            orientation,
        }
    }
}
