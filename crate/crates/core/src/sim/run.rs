use std::collections::BTreeMap;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::bundle::{FrameBundle, FrameSink};
use super::payload::{self, DepthImage, GrayImage};
use super::{
    camera_world_pose, extract_boxes, render, schedule_channels, shade, synth_imu, CameraModel, ChannelGroup, ExtraCamera,
    RenderedFrame, Scene, SimConfig, SimError, CLOCK_CHANNEL, START_CHANNEL,
};
use crate::assets::AnimatedAsset;
use crate::geometry::{CollisionObject, Pose, TriMesh};
use crate::logstore::{step_stamp_ns, ChannelId, Log, NS_PER_S};
use crate::noise::RowRenderer;
use crate::robot::{integrate, JointController, JointLimits, PidGains, RobotState, Setpoint, WaypointFollower};

/// An animated asset and the rigid transform placing its local frame in the world.
#[derive(Debug, Clone)]
pub struct WorldAsset {
    pub asset: AnimatedAsset,
    pub pose: Pose,
}

pub struct World {
    env: CollisionObject,
    assets: Vec<WorldAsset>,
}

impl World {
    pub fn new(env: TriMesh, assets: Vec<WorldAsset>) -> Self {
        Self {
            env: CollisionObject::from_world(env),
            assets,
        }
    }

    pub fn env(&self) -> &CollisionObject {
        &self.env
    }

    pub fn assets(&self) -> &[WorldAsset] {
        &self.assets
    }

    /// World-frame meshes of every asset at animation time `t`.
    pub fn dynamic_objects(&self, t: f64) -> Result<Vec<CollisionObject>, SimError> {
        self.assets
            .iter()
            .map(|a| Ok(CollisionObject::new(&a.asset.sample_frame(t), &a.pose)?))
            .collect()
    }

    pub fn scene(&self, t: f64) -> Result<Scene<'_>, SimError> {
        Ok(Scene::new(Some(&self.env), self.dynamic_objects(t)?))
    }
}

/// Everything needed to fly one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub name: String,
    pub limits: JointLimits,
    pub gains: PidGains,
    pub waypoints: Vec<Vector6<f64>>,
    /// m
    pub tolerance: f64,
    /// rad
    pub angular_tolerance: f64,
    pub initial: Vector6<f64>,
    /// Velocity setpoint held during the bootstrap period.
    pub bootstrap_velocity: Vector6<f64>,
    /// Camera body frame relative to the robot body.
    pub camera_mount: Pose,
}

/// Joint states for steps `0..=total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotTrajectory {
    pub states: Vec<RobotState>,
}

impl RobotTrajectory {
    pub fn poses(&self) -> Vec<Pose> {
        self.states.iter().map(RobotState::pose).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RobotDriver {
    /// PID controller and waypoint follower.
    Controlled,
    /// Replays recorded states verbatim.
    Scripted(RobotTrajectory),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotChannels {
    pub prefix: String,
    pub imu: ChannelId,
    pub imu_cam: ChannelId,
    pub tf: ChannelId,
    pub joints: ChannelId,
    pub cam_pose: ChannelId,
    pub odom: ChannelId,
    pub rgb: ChannelId,
    pub depth: ChannelId,
    pub extra: Vec<ChannelId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSet {
    pub clock: ChannelId,
    pub start: ChannelId,
    pub robots: Vec<RobotChannels>,
}

/// Channel names of one robot. A `"<name>/"` prefix is added when several robots fly.
pub fn channel_names(robot: &str, multi: bool, cfg: &SimConfig) -> Vec<String> {
    let prefix = if multi { format!("{robot}/") } else { String::new() };
    let base = ["imu", "imu_cam", "tf", "joints", "cam_pose", "odom", "rgb", "depth"];
    base.iter()
        .map(|n| format!("{prefix}{n}"))
        .chain(cfg.extra_cameras.iter().map(|c| format!("{prefix}{}/depth", c.name)))
        .collect()
}

impl ChannelSet {
    /// Declares every channel on `log`, in a fixed order.
    pub fn register(log: &mut Log, cfg: &SimConfig, robots: &[RobotSpec]) -> Result<Self, SimError> {
        let r = &cfg.rates;
        let clock = log.add_named_channel(CLOCK_CHANNEL, Some(r.clock), payload::T_CLOCK)?;
        let start = log.add_named_channel(START_CHANNEL, None, payload::T_START)?;
        let multi = robots.len() > 1;
        let mut out = Vec::new();
        for spec in robots {
            let names = channel_names(&spec.name, multi, cfg);
            let fixed = [
                (r.imu, payload::T_IMU),
                (r.imu, payload::T_IMU),
                (r.tf, payload::T_TF),
                (r.joints, payload::T_JOINTS),
                (r.cam_pose, payload::T_POSE),
                (r.odom, payload::T_ODOM),
                (r.rgb, payload::T_GRAY8),
                (r.depth, payload::T_DEPTH),
            ];
            let mut ids = Vec::new();
            for (name, (rate, ty)) in names.iter().zip(fixed) {
                ids.push(log.add_named_channel(name, Some(rate), ty)?);
            }
            let mut extra = Vec::new();
            for (name, cam) in names[fixed.len()..].iter().zip(&cfg.extra_cameras) {
                extra.push(log.add_named_channel(name, Some(cam.rate), payload::T_DEPTH)?);
            }
            out.push(RobotChannels {
                prefix: if multi { format!("{}/", spec.name) } else { String::new() },
                imu: ids[0],
                imu_cam: ids[1],
                tf: ids[2],
                joints: ids[3],
                cam_pose: ids[4],
                odom: ids[5],
                rgb: ids[6],
                depth: ids[7],
                extra,
            });
        }
        Ok(Self {
            clock,
            start,
            robots: out,
        })
    }
}

pub struct RunOutput {
    pub log: Log,
    pub channels: ChannelSet,
    pub trajectories: Vec<RobotTrajectory>,
}

enum Driver<'a> {
    Controlled {
        ctrl: JointController,
        follower: WaypointFollower,
    },
    Scripted(&'a RobotTrajectory),
}

struct Cam {
    name: String,
    model: CameraModel,
    mount: Pose,
}

/// Runs `bootstrap_steps + duration_steps` physics steps.
///
/// At step `k` each robot is advanced to state `k+1`, then the channels due at
/// `k` are emitted for time `k·dt` from state `k` (the IMU also looks at the
/// neighbouring states). Animation time is `k·dt`. Frame bundles are handed
/// to `sink` for camera frames at or after the start step; the high-resolution
/// camera is rendered only when `cfg.render_high` is set and a sink is given.
pub fn run_experiment(
    cfg: &SimConfig,
    world: &World,
    robots: &[RobotSpec],
    drivers: &[RobotDriver],
    mut sink: Option<&mut dyn FrameSink>,
) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    if robots.is_empty() {
        return Err(SimError::InvalidConfig("at least one robot is required".into()));
    }
    if drivers.len() != robots.len() {
        return Err(SimError::InvalidConfig(format!(
            "{} drivers for {} robots",
            drivers.len(),
            robots.len()
        )));
    }
    let total = cfg.total_steps();
    let dt = cfg.dt();
    let gravity = cfg.gravity_vector();

    let mut states: Vec<Vec<RobotState>> = Vec::new();
    let mut run_drivers = Vec::new();
    for (spec, d) in robots.iter().zip(drivers) {
        spec.gains.validate()?;
        match d {
            RobotDriver::Controlled => {
                states.push(vec![RobotState::at(spec.limits.clamp_position(&spec.initial))]);
                run_drivers.push(Driver::Controlled {
                    ctrl: JointController::new(spec.gains.clone())?,
                    follower: WaypointFollower::new(spec.waypoints.clone(), spec.tolerance, spec.angular_tolerance)?,
                });
            }
            RobotDriver::Scripted(t) => {
                if t.states.len() as u64 != total + 1 {
                    return Err(SimError::InvalidConfig(format!(
                        "scripted trajectory of {} has {} states, expected {}",
                        spec.name,
                        t.states.len(),
                        total + 1
                    )));
                }
                states.push(vec![t.states[0]]);
                run_drivers.push(Driver::Scripted(t));
            }
        }
    }

    let mut log = Log::new(Vec::new())?;
    let channels = ChannelSet::register(&mut log, cfg, robots)?;
    let low = CameraModel::from_fov(cfg.low, cfg.hfov, cfg.vfov);
    let high = CameraModel::from_fov(cfg.high, cfg.hfov, cfg.vfov);
    let extras: Vec<(Cam, u32)> = cfg
        .extra_cameras
        .iter()
        .map(|c: &ExtraCamera| {
            (
                Cam {
                    name: c.name.clone(),
                    model: CameraModel::from_fov(c.resolution, c.hfov, c.vfov),
                    mount: c.mount,
                },
                c.rate,
            )
        })
        .collect();
    let mut bundle_counts: BTreeMap<String, u64> = BTreeMap::new();

    for k in 0..total {
        for (r, (spec, driver)) in robots.iter().zip(run_drivers.iter_mut()).enumerate() {
            let cur = states[r][k as usize];
            let next = match driver {
                Driver::Scripted(t) => t.states[k as usize + 1],
                Driver::Controlled { ctrl, follower } => {
                    let sp = if k < cfg.bootstrap_steps {
                        Setpoint::Velocity(spec.bootstrap_velocity)
                    } else {
                        follower.follow(&cur, &spec.limits)
                    };
                    let cmd = ctrl.step(&cur, &sp, &spec.limits, dt)?;
                    integrate(&cur, &cmd, &spec.limits, dt)
                }
            };
            states[r].push(next);
        }

        let stamp = step_stamp_ns(k, cfg.physics_hz);
        let groups = schedule_channels(k, cfg);
        let started = k >= cfg.bootstrap_steps;
        let extra_due: Vec<bool> = extras.iter().map(|(_, rate)| k % (cfg.physics_hz / rate) as u64 == 0).collect();
        let cams_due = groups.contains(&ChannelGroup::Rgb) || groups.contains(&ChannelGroup::Depth);
        let high_due = sink.is_some() && started && cfg.render_high && groups.contains(&ChannelGroup::Depth);
        let scene = if cams_due || high_due || extra_due.iter().any(|&d| d) {
            Some(
                world
                    .scene(k as f64 * dt)
                    .map_err(|e| SimError::Render { step: k, message: e.to_string() })?,
            )
        } else {
            None
        };

        for g in &groups {
            match g {
                ChannelGroup::Clock => log.push(channels.clock, stamp, payload::encode_u64(stamp))?,
                ChannelGroup::Start => log.push(channels.start, stamp, payload::encode_u64(k))?,
                _ => {}
            }
        }

        for (r, spec) in robots.iter().enumerate() {
            let ch = &channels.robots[r];
            let i = k as usize;
            let window = [states[r][i.saturating_sub(1)].pose(), states[r][i].pose(), states[r][i + 1].pose()];
            let body = window[1];
            let cam = camera_world_pose(&body, &spec.camera_mount);
            let mut low_frame: Option<RenderedFrame> = None;
            for g in &groups {
                match g {
                    ChannelGroup::Clock | ChannelGroup::Start => {}
                    ChannelGroup::Imu => {
                        let (w, f) = synth_imu(&window, dt, &gravity)?;
                        log.push(ch.imu, stamp, payload::encode_imu(&w, &f))?;
                        let cam_window = window.map(|p| camera_world_pose(&p, &spec.camera_mount));
                        let (w, f) = synth_imu(&cam_window, dt, &gravity)?;
                        log.push(ch.imu_cam, stamp, payload::encode_imu(&w, &f))?;
                    }
                    ChannelGroup::Tf => log.push(ch.tf, stamp, payload::encode_tf(&body, &cam))?,
                    ChannelGroup::Joints => {
                        let s = &states[r][i];
                        log.push(ch.joints, stamp, payload::encode_joints(&s.q, &s.qdot))?
                    }
                    ChannelGroup::CamPose => log.push(ch.cam_pose, stamp, payload::encode_pose(&cam))?,
                    ChannelGroup::Odom => {
                        let span = (i + 1 - i.saturating_sub(1)) as f64 * dt;
                        let linear: Vector3<f64> = (window[2].position - window[0].position) / span;
                        let (w, _) = synth_imu(&window, dt, &gravity)?;
                        log.push(ch.odom, stamp, payload::encode_odom(&body, &linear, &w))?
                    }
                    ChannelGroup::Rgb | ChannelGroup::Depth => {
                        let scene = scene.as_ref().expect("scene built for camera steps");
                        let frame = low_frame.get_or_insert_with(|| render(scene, &cam, &low));
                        if *g == ChannelGroup::Rgb {
                            let img = GrayImage {
                                width: frame.width,
                                height: frame.height,
                                data: frame.gray.clone(),
                            };
                            log.push(ch.rgb, stamp, payload::encode_gray(&img))?;
                        } else {
                            let img = DepthImage {
                                width: frame.width,
                                height: frame.height,
                                data: frame.depth.clone(),
                            };
                            log.push(ch.depth, stamp, payload::encode_depth(&img))?;
                            if started {
                                if let Some(s) = sink.as_deref_mut() {
                                    let name = format!("{}low", ch.prefix);
                                    emit_bundle(s, &mut bundle_counts, name, stamp, scene, &cam, &low, frame)?;
                                }
                            }
                        }
                    }
                }
            }
            if high_due {
                let scene = scene.as_ref().expect("scene built for camera steps");
                let frame = render(scene, &cam, &high);
                let s = sink.as_deref_mut().expect("high camera needs a sink");
                emit_bundle(s, &mut bundle_counts, format!("{}high", ch.prefix), stamp, scene, &cam, &high, &frame)?;
            }
            for (e, (extra, _)) in extras.iter().enumerate() {
                if !extra_due[e] {
                    continue;
                }
                let scene = scene.as_ref().expect("scene built for camera steps");
                let pose = camera_world_pose(&body, &extra.mount);
                let frame = render(scene, &pose, &extra.model);
                let img = DepthImage {
                    width: frame.width,
                    height: frame.height,
                    data: frame.depth.clone(),
                };
                log.push(ch.extra[e], stamp, payload::encode_depth(&img))?;
                if started {
                    if let Some(s) = sink.as_deref_mut() {
                        let name = format!("{}{}", ch.prefix, extra.name);
                        emit_bundle(s, &mut bundle_counts, name, stamp, scene, &pose, &extra.model, &frame)?;
                    }
                }
            }
        }
    }

    Ok(RunOutput {
        log,
        channels,
        trajectories: states.into_iter().map(|states| RobotTrajectory { states }).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn emit_bundle(
    sink: &mut dyn FrameSink,
    counts: &mut BTreeMap<String, u64>,
    camera: String,
    stamp_ns: u64,
    scene: &Scene,
    pose: &Pose,
    model: &CameraModel,
    frame: &RenderedFrame,
) -> Result<(), SimError> {
    let index = counts.entry(camera.clone()).or_insert(0);
    let bundle = FrameBundle {
        camera,
        index: *index,
        stamp_ns,
        width: frame.width,
        height: frame.height,
        camera_pose: *pose,
        depth: frame.depth.clone(),
        instance: frame.instance.clone(),
        boxes: extract_boxes(frame, scene, pose, model),
    };
    *index += 1;
    sink.accept(bundle)
}

/// Re-renders single grayscale rows against the world at their own time.
pub struct WorldRowRenderer<'a> {
    pub world: &'a World,
    pub model: CameraModel,
}

impl RowRenderer for WorldRowRenderer<'_> {
    fn render_row(&self, row: u32, camera: &Pose, stamp_ns: u64) -> Vec<u8> {
        let t = stamp_ns as f64 / NS_PER_S as f64;
        let scene = match self.world.scene(t) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("row {row} at {stamp_ns} ns rendered without dynamic assets: {e}");
                Scene::new(Some(&self.world.env), Vec::new())
            }
        };
        (0..self.model.width).map(|i| shade(&scene, camera, &self.model, i, row).2).collect()
    }
}

impl RobotSpec {
    /// Spec with default gains and tolerances, hovering at `initial` until waypoints are given.
    pub fn new(name: &str, limits: JointLimits, initial: Vector6<f64>) -> Self {
        Self {
            name: name.to_string(),
            limits,
            gains: PidGains::default(),
            waypoints: vec![initial],
            tolerance: 0.1,
            angular_tolerance: 10f64.to_radians(),
            initial,
            bootstrap_velocity: Vector6::zeros(),
            camera_mount: Pose::identity(),
        }
    }
}
