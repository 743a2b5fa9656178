use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Pose;

/// Noise-free IMU reading in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub stamp_ns: u64,
    /// rad/s
    pub angular_velocity: Vector3<f64>,
    /// Specific force (acceleration minus gravity), m/s².
    pub specific_force: Vector3<f64>,
}

/// IMU reading at the middle of three consecutive poses spaced `dt` apart.
///
/// Angular velocity is the rotation vector of `q₀⁻¹·q₂` over `2·dt`; the
/// specific force is `Rᵀ(a − g)` with `a` from central second differences.
pub fn synth_imu(window: &[Pose], dt: f64, gravity: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>), SimError> {
    if window.len() < 3 {
        return Err(SimError::ImuWindow(window.len()));
    }
    let (p0, p1, p2) = (&window[0], &window[1], &window[2]);
    let accel = ((p2.position - p1.position) - (p1.position - p0.position)) / (dt * dt);
    let specific_force = p1.orientation.inverse_transform_vector(&(accel - gravity));
    let rel = p0.orientation.inverse() * p2.orientation;
    let angular_velocity = rel.scaled_axis() / (2.0 * dt);
    Ok((angular_velocity, specific_force))
}
