//! Post-hoc sensor corruption: IMU white noise and bias random walk, depth
//! clipping with range-dependent noise, and rolling-shutter row timing.
//!
//! Noisy outputs are written next to the clean channels with a `.noisy` suffix.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::logstore::{ChannelId, Log, LogError};
use crate::sim::payload::{self, DepthImage, GrayImage, PayloadError};
use crate::sim::ImuSample;

pub const NOISY_SUFFIX: &str = ".noisy";

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise parameters: {0}")]
    InvalidParams(String),
    #[error("pose track covers [{start}, {end}] ns but [{need_start}, {need_end}] ns is needed")]
    TrackTooShort {
        start: u64,
        end: u64,
        need_start: u64,
        need_end: u64,
    },
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Continuous-time densities; per-sample sigmas follow from the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseParams {
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s²/√Hz
    pub gyro_bias_walk: f64,
    /// m/s³/√Hz
    pub accel_bias_walk: f64,
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        Self {
            gyro_noise_density: 1.7e-4,
            accel_noise_density: 2.0e-3,
            gyro_bias_walk: 1.0e-5,
            accel_bias_walk: 3.0e-3,
        }
    }
}

impl ImuNoiseParams {
    pub fn zero() -> Self {
        Self {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_bias_walk: 0.0,
            accel_bias_walk: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let all = [
            self.gyro_noise_density,
            self.accel_noise_density,
            self.gyro_bias_walk,
            self.accel_bias_walk,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(NoiseError::InvalidParams(format!("IMU densities must be non-negative: {all:?}")))
        }
    }
}

/// Axial noise `σ(z) = a + b·z²`; depths outside `(0, max_depth]` become 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoiseParams {
    /// m
    pub max_depth: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for DepthNoiseParams {
    fn default() -> Self {
        Self {
            max_depth: 3.5,
            a: 0.001,
            b: 0.0019,
        }
    }
}

impl DepthNoiseParams {
    pub fn sigma(&self, z: f64) -> f64 {
        self.a + self.b * z * z
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.max_depth > 0.0 && self.a >= 0.0 && self.b >= 0.0 && self.max_depth.is_finite() {
            Ok(())
        } else {
            Err(NoiseError::InvalidParams(format!("depth noise {self:?}")))
        }
    }
}

/// Full-frame readout time in seconds, drawn per frame from a normal
/// distribution restricted to non-negative values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingShutterParams {
    pub mean: f64,
    pub std: f64,
}

impl Default for RollingShutterParams {
    fn default() -> Self {
        Self { mean: 0.015, std: 0.006 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub seed: u64,
    pub imu: ImuNoiseParams,
    pub depth: DepthNoiseParams,
    pub rolling_shutter: Option<RollingShutterParams>,
    pub motion_blur: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            imu: ImuNoiseParams::default(),
            depth: DepthNoiseParams::default(),
            rolling_shutter: Some(RollingShutterParams::default()),
            motion_blur: false,
        }
    }
}

/// Independent generator for `(seed, channel, index)`.
pub fn substream(seed: u64, channel: ChannelId, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((channel as u64) << 48) | (index & 0xffff_ffff_ffff));
    rng
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

fn add_noise<R: Rng + ?Sized>(v: &mut Vector3<f64>, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        for x in v.iter_mut() {
            *x += gauss(rng, sigma);
        }
    }
}

/// Bias state carried across consecutive IMU samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImuBias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Adds white noise `σ = d·√f` and a bias random walk with per-sample step
/// `σ = d/√f` to time-ordered samples taken at `rate_hz`.
pub fn corrupt_imu<R: Rng + ?Sized>(
    samples: &[ImuSample],
    rate_hz: f64,
    params: &ImuNoiseParams,
    rng: &mut R,
) -> Result<Vec<ImuSample>, NoiseError> {
    let mut bias = ImuBias::default();
    corrupt_imu_with_bias(samples, rate_hz, params, &mut bias, rng)
}

pub fn corrupt_imu_with_bias<R: Rng + ?Sized>(
    samples: &[ImuSample],
    rate_hz: f64,
    params: &ImuNoiseParams,
    bias: &mut ImuBias,
    rng: &mut R,
) -> Result<Vec<ImuSample>, NoiseError> {
    params.validate()?;
    if !(rate_hz > 0.0) {
        return Err(NoiseError::InvalidParams(format!("IMU rate {rate_hz} Hz")));
    }
    let sq = rate_hz.sqrt();
    let (gw, aw) = (params.gyro_noise_density * sq, params.accel_noise_density * sq);
    let (gb, ab) = (params.gyro_bias_walk / sq, params.accel_bias_walk / sq);
    Ok(samples
        .iter()
        .map(|s| {
            add_noise(&mut bias.gyro, gb, rng);
            add_noise(&mut bias.accel, ab, rng);
            let mut out = *s;
            if gb > 0.0 {
                out.angular_velocity += bias.gyro;
            }
            if ab > 0.0 {
                out.specific_force += bias.accel;
            }
            add_noise(&mut out.angular_velocity, gw, rng);
            add_noise(&mut out.specific_force, aw, rng);
            out
        })
        .collect())
}

/// Clips to `(0, max_depth]` and adds `N(0, σ(z))`; results outside the range become 0.
pub fn corrupt_depth<R: Rng + ?Sized>(
    img: &DepthImage,
    params: &DepthNoiseParams,
    rng: &mut R,
) -> Result<DepthImage, NoiseError> {
    params.validate()?;
    let data = img
        .data
        .iter()
        .map(|&d| {
            let z = d as f64;
            if !(z > 0.0 && z <= params.max_depth) {
                return 0.0;
            }
            let sigma = params.sigma(z);
            let noisy = if sigma > 0.0 { (z + gauss(rng, sigma)) as f32 } else { d };
            if noisy > 0.0 && (noisy as f64) <= params.max_depth {
                noisy
            } else {
                0.0
            }
        })
        .collect();
    Ok(DepthImage {
        width: img.width,
        height: img.height,
        data,
    })
}

pub fn sample_readout<R: Rng + ?Sized>(params: &RollingShutterParams, rng: &mut R) -> Result<f64, NoiseError> {
    let dist = Normal::new(params.mean, params.std)
        .map_err(|e| NoiseError::InvalidParams(format!("rolling shutter {params:?}: {e}")))?;
    if params.mean < 0.0 && params.std == 0.0 {
        return Err(NoiseError::InvalidParams("rolling shutter readout can never be non-negative".into()));
    }
    loop {
        let r = dist.sample(rng);
        if r >= 0.0 {
            return Ok(r);
        }
    }
}

/// `t_frame + (i/rows)·readout` for each row, floored to ns.
pub fn row_stamps(t_frame_ns: u64, rows: u32, readout_s: f64) -> Vec<u64> {
    (0..rows)
        .map(|i| t_frame_ns + (i as f64 / rows as f64 * readout_s * 1e9).floor() as u64)
        .collect()
}

/// Timestamped camera poses, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub stamps_ns: Vec<u64>,
    pub poses: Vec<Pose>,
}

impl PoseTrack {
    pub fn new(stamps_ns: Vec<u64>, poses: Vec<Pose>) -> Result<Self, NoiseError> {
        if stamps_ns.len() != poses.len() || stamps_ns.is_empty() || stamps_ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NoiseError::InvalidParams("pose track needs increasing stamps, one per pose".into()));
        }
        Ok(Self { stamps_ns, poses })
    }

    pub fn span(&self) -> (u64, u64) {
        (self.stamps_ns[0], *self.stamps_ns.last().unwrap())
    }

    /// Interpolated pose, `None` outside the track.
    pub fn at(&self, t_ns: u64) -> Option<Pose> {
        let (a, b) = self.span();
        if t_ns < a || t_ns > b {
            return None;
        }
        let i = self.stamps_ns.partition_point(|&s| s <= t_ns) - 1;
        if self.stamps_ns[i] == t_ns || i + 1 == self.stamps_ns.len() {
            return Some(self.poses[i]);
        }
        let (t0, t1) = (self.stamps_ns[i], self.stamps_ns[i + 1]);
        let w = (t_ns - t0) as f64 / (t1 - t0) as f64;
        Some(self.poses[i].interpolate(&self.poses[i + 1], w))
    }
}

/// Renders a single image row from a camera pose at a given time.
pub trait RowRenderer {
    fn render_row(&self, row: u32, camera: &Pose, stamp_ns: u64) -> Vec<u8>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShutterFrame {
    pub image: GrayImage,
    pub row_stamps: Vec<u64>,
    pub readout_s: f64,
}

/// Draws a readout time and assigns per-row stamps. With a renderer and a
/// pose track each row is re-rendered at its own pose.
pub fn apply_rolling_shutter<R: Rng + ?Sized>(
    frame: &GrayImage,
    t_frame_ns: u64,
    params: &RollingShutterParams,
    rerender: Option<(&PoseTrack, &dyn RowRenderer)>,
    rng: &mut R,
) -> Result<ShutterFrame, NoiseError> {
    let readout_s = sample_readout(params, rng)?;
    let stamps = row_stamps(t_frame_ns, frame.height, readout_s);
    let mut image = frame.clone();
    if let Some((track, renderer)) = rerender {
        let need_end = *stamps.last().unwrap_or(&t_frame_ns);
        let (start, end) = track.span();
        if t_frame_ns < start || need_end > end {
            return Err(NoiseError::TrackTooShort {
                start,
                end,
                need_start: t_frame_ns,
                need_end,
            });
        }
        let w = frame.width as usize;
        for (row, &t) in stamps.iter().enumerate() {
            let pose = track.at(t).expect("coverage checked");
            let pixels = renderer.render_row(row as u32, &pose, t);
            image.data[row * w..(row + 1) * w].copy_from_slice(&pixels);
        }
    }
    Ok(ShutterFrame {
        image,
        row_stamps: stamps,
        readout_s,
    })
}

/// Placeholder: returns the frame unchanged.
pub fn motion_blur(frame: &GrayImage) -> GrayImage {
    log::warn!("motion blur is not modelled; frame left unchanged");
    frame.clone()
}

fn noisy_name(name: &str) -> String {
    format!("{name}{NOISY_SUFFIX}")
}

/// Copies `log` and adds a `.noisy` channel for every IMU, depth and (with
/// rolling shutter or blur enabled) grayscale channel. Clean records are
/// untouched; each noisy record follows its source record.
pub fn apply_noise(log: &Log, cfg: &NoiseConfig) -> Result<Log, NoiseError> {
    cfg.imu.validate()?;
    cfg.depth.validate()?;
    let mut out = Log::new(log.channels().to_vec())?;
    out.set_origin_ns(log.origin_ns());
    let gray_noise = cfg.rolling_shutter.is_some() || cfg.motion_blur;
    let mut targets: BTreeMap<ChannelId, ChannelId> = BTreeMap::new();
    for ch in log.channels() {
        let ty = match ch.payload_type.as_str() {
            payload::T_IMU | payload::T_DEPTH => ch.payload_type.clone(),
            payload::T_GRAY8 if gray_noise => {
                if cfg.rolling_shutter.is_some() {
                    payload::T_GRAY8_ROWS.to_string()
                } else {
                    payload::T_GRAY8.to_string()
                }
            }
            _ => continue,
        };
        if ch.name.ends_with(NOISY_SUFFIX) {
            continue;
        }
        targets.insert(ch.id, out.add_named_channel(&noisy_name(&ch.name), ch.rate_hz, &ty)?);
    }

    // IMU noise is sequential per channel; frames are independent substreams.
    let mut imu_state: BTreeMap<ChannelId, (ChaCha8Rng, ImuBias)> = BTreeMap::new();
    let frame_noise: Vec<Option<Vec<u8>>> = log
        .records()
        .par_iter()
        .map(|r| -> Result<Option<Vec<u8>>, NoiseError> {
            if !targets.contains_key(&r.channel) {
                return Ok(None);
            }
            let ty = &log.channel(r.channel).expect("record channel registered").payload_type;
            let mut rng = substream(cfg.seed, r.channel, r.index);
            match ty.as_str() {
                payload::T_DEPTH => {
                    let img = payload::decode_depth(&r.payload)?;
                    Ok(Some(payload::encode_depth(&corrupt_depth(&img, &cfg.depth, &mut rng)?)))
                }
                payload::T_GRAY8 => {
                    let mut img = payload::decode_gray(&r.payload)?;
                    if cfg.motion_blur {
                        img = motion_blur(&img);
                    }
                    Ok(Some(match &cfg.rolling_shutter {
                        Some(p) => {
                            let f = apply_rolling_shutter(&img, r.stamp_ns, p, None, &mut rng)?;
                            payload::encode_gray_rows(&f.image, &f.row_stamps)
                        }
                        None => payload::encode_gray(&img),
                    }))
                }
                _ => Ok(None),
            }
        })
        .collect::<Result<_, _>>()?;

    for (r, frame) in log.records().iter().zip(frame_noise) {
        out.push(r.channel, r.stamp_ns, r.payload.clone())?;
        let Some(&target) = targets.get(&r.channel) else { continue };
        let payload = match frame {
            Some(p) => p,
            None => {
                let (gyro, force) = payload::decode_imu(&r.payload)?;
                let rate = log.channel(r.channel).and_then(|c| c.rate_hz).unwrap_or(0) as f64;
                let (rng, bias) = imu_state
                    .entry(r.channel)
                    .or_insert_with(|| (substream(cfg.seed, r.channel, 0xffff_ffff_ffff), ImuBias::default()));
                let sample = ImuSample {
                    stamp_ns: r.stamp_ns,
                    angular_velocity: gyro,
                    specific_force: force,
                };
                let noisy = corrupt_imu_with_bias(&[sample], rate, &cfg.imu, bias, rng)?;
                payload::encode_imu(&noisy[0].angular_velocity, &noisy[0].specific_force)
            }
        };
        out.push(target, r.stamp_ns, payload)?;
    }
    Ok(out)
}
