//! Fixed-step multi-rate simulation loop and sensor synthesis.

pub mod bundle;
mod imu;
pub mod payload;
mod render;
mod run;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose};
use crate::logstore::LogError;
use crate::robot::RobotError;

pub use imu::{synth_imu, ImuSample};
pub use render::{
    body_to_optical, camera_world_pose, extract_boxes, loose_box, render, shade, BoxRecord, CameraModel, PixelBox,
    RenderedFrame, Scene,
};
pub use run::{
    channel_names, run_experiment, ChannelSet, RobotChannels, RobotDriver, RobotSpec, RobotTrajectory, RunOutput,
    World, WorldAsset, WorldRowRenderer,
};
pub use schedule::{schedule_channels, ChannelGroup};

pub const START_CHANNEL: &str = "start";
pub const CLOCK_CHANNEL: &str = "clock";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("render failed at step {step}: {message}")]
    Render { step: u64, message: String },
    #[error("too few poses for IMU synthesis: need 3, got {0}")]
    ImuWindow(usize),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Publish rates in Hz; each must divide the physics rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    pub clock: u32,
    pub imu: u32,
    pub tf: u32,
    pub joints: u32,
    pub cam_pose: u32,
    pub odom: u32,
    pub rgb: u32,
    pub depth: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            clock: 240,
            imu: 240,
            tf: 120,
            joints: 120,
            cam_pose: 60,
            odom: 60,
            rgb: 30,
            depth: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl std::str::FromStr for Resolution {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidConfig(format!("resolution {s:?} is not WIDTHxHEIGHT"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let r = Resolution::new(w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
        if r.width == 0 || r.height == 0 || r.width > u16::MAX as u32 || r.height > u16::MAX as u32 {
            return Err(bad());
        }
        Ok(r)
    }
}

/// Additional camera rigidly attached to a robot body, e.g. added at replay time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraCamera {
    pub name: String,
    pub resolution: Resolution,
    /// rad
    pub hfov: f64,
    /// rad
    pub vfov: f64,
    /// Camera body frame relative to the robot body (x forward, z up).
    pub mount: Pose,
    pub rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub physics_hz: u32,
    pub bootstrap_steps: u64,
    pub duration_steps: u64,
    pub rates: Rates,
    /// Shared by both cameras, rad.
    pub hfov: f64,
    pub vfov: f64,
    pub low: Resolution,
    pub high: Resolution,
    /// Render the high-resolution camera into frame bundles.
    pub render_high: bool,
    /// m/s², acting along −z.
    pub gravity: f64,
    pub extra_cameras: Vec<ExtraCamera>,
}

impl Default for SimConfig {
    /// Desk-scale resolutions; see [`SimConfig::full_scale`].
    fn default() -> Self {
        let hfov = 90f64.to_radians();
        Self {
            physics_hz: 240,
            bootstrap_steps: 240,
            duration_steps: 240 * 60,
            rates: Rates::default(),
            hfov,
            vfov: 2.0 * ((hfov / 2.0).tan() * 0.75).atan(),
            low: Resolution::new(64, 48),
            high: Resolution::new(192, 108),
            render_high: false,
            gravity: 9.81,
            extra_cameras: Vec::new(),
        }
    }
}

impl SimConfig {
    /// 640×480 and 1920×1080 cameras.
    pub fn full_scale() -> Self {
        Self {
            low: Resolution::new(640, 480),
            high: Resolution::new(1920, 1080),
            ..Self::default()
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    pub fn total_steps(&self) -> u64 {
        self.bootstrap_steps + self.duration_steps
    }

    /// Sets the recorded duration in seconds; must be a whole number of steps.
    pub fn with_duration_s(mut self, seconds: f64) -> Result<Self, SimError> {
        let steps = seconds * self.physics_hz as f64;
        if !(steps >= 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(format!(
                "duration {seconds} s is not a whole number of steps"
            )));
        }
        self.duration_steps = steps.round() as u64;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let r = &self.rates;
        let all = [
            ("clock", r.clock),
            ("imu", r.imu),
            ("tf", r.tf),
            ("joints", r.joints),
            ("cam_pose", r.cam_pose),
            ("odom", r.odom),
            ("rgb", r.rgb),
            ("depth", r.depth),
        ];
        if self.physics_hz == 0 {
            return Err(SimError::InvalidConfig("physics rate must be positive".into()));
        }
        let extra = self.extra_cameras.iter().map(|c| (c.name.as_str(), c.rate));
        for (name, rate) in all.into_iter().chain(extra) {
            if rate == 0 || self.physics_hz % rate != 0 {
                return Err(SimError::InvalidConfig(format!(
                    "rate {rate} Hz of {name} does not divide {} Hz",
                    self.physics_hz
                )));
            }
        }
        for cam in &self.extra_cameras {
            check_fov(cam.hfov, cam.vfov)?;
            if cam.resolution.pixels() == 0 {
                return Err(SimError::InvalidConfig(format!("camera {} has no pixels", cam.name)));
            }
        }
        check_fov(self.hfov, self.vfov)?;
        if self.low.pixels() == 0 || self.high.pixels() == 0 {
            return Err(SimError::InvalidConfig("camera resolution must be non-zero".into()));
        }
        if !(self.gravity.is_finite()) {
            return Err(SimError::InvalidConfig("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn gravity_vector(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(0.0, 0.0, -self.gravity)
    }
}

fn check_fov(h: f64, v: f64) -> Result<(), SimError> {
    let ok = |a: f64| a > 0.0 && a < std::f64::consts::PI;
    if ok(h) && ok(v) {
        Ok(())
    } else {
        Err(SimError::InvalidConfig(format!("field of view ({h}, {v}) rad out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_sixty_seconds() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.total_steps(), 14_640);
        assert_eq!(SimConfig::full_scale().low, Resolution::new(640, 480));
    }

    #[test]
    fn rate_must_divide() {
        let mut c = SimConfig::default();
        c.rates.odom = 50;
        assert!(c.validate().is_err());
    }

    #[test]
    fn duration_in_steps() {
        let c = SimConfig::default().with_duration_s(2.5).unwrap();
        assert_eq!(c.duration_steps, 600);
        assert!(SimConfig::default().with_duration_s(1.0 / 1000.0).is_err());
    }

    #[test]
    fn resolution_parse() {
        assert_eq!("64x48".parse::<Resolution>().unwrap(), Resolution::new(64, 48));
        assert!("64".parse::<Resolution>().is_err());
        assert!("0x4".parse::<Resolution>().is_err());
    }
}
