//! End-to-end experiment generation, manifests and replay.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::{Point3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assets::{swept_trace, AssetError, DEFAULT_TRACE_STRIDE};
use crate::envgen::{gen_environment, EnvParams};
use crate::geometry::{enclosing_polygon, rasterize_occupancy, Aabb, CollisionObject, GeometryError, OccupancyGrid2D, TriMesh};
use crate::logstore::{Log, LogError, DEFAULT_CHUNK_BYTES};
use crate::noise::{apply_noise, NoiseConfig, NoiseError};
use crate::placement::{
    flyer_recipes, flyer_volume, human_recipes, place_all, AssetRecipe, PlacementConfig, PlacementError,
    PlacementResult, ScenarioCode, ScenarioConfig,
};
use crate::robot::{init_pose, InitPoseParams, JointLimits, PidGains, RobotError, RobotState, PITCH, ROLL};
use crate::sim::bundle::FrameSink;
use crate::sim::{
    run_experiment, ExtraCamera, RobotDriver, RobotSpec, RobotTrajectory, RunOutput, SimConfig, SimError, World,
    WorldAsset,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const LOG_FILE: &str = "log.dslog";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("manifest version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Experiment configuration, readable from TOML. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioCode,
    pub seed: u64,
    /// Drawn from the allowed range when absent.
    pub humans: Option<usize>,
    pub sim: SimConfig,
    pub env: EnvParams,
    pub placement: PlacementConfig,
    pub trace_stride: usize,
    pub robots: usize,
    pub gains: PidGains,
    pub init: InitPoseParams,
    /// Random waypoints per robot when `waypoints` is empty.
    pub waypoint_count: usize,
    /// Explicit plan (x y z roll pitch yaw, meters and radians) shared by all robots.
    pub waypoints: Vec<Vector6<f64>>,
    /// m
    pub waypoint_tolerance: f64,
    /// Margin between walls and the robot's position limits, m.
    pub wall_margin: f64,
    /// Occupancy cell size used for start poses and waypoints, m.
    pub grid_resolution: f64,
    /// Noisy channels are added to the log when present.
    pub noise: Option<NoiseConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioCode::N,
            seed: 0,
            humans: None,
            sim: SimConfig::default(),
            env: EnvParams::default(),
            placement: PlacementConfig::default(),
            trace_stride: DEFAULT_TRACE_STRIDE,
            robots: 1,
            gains: PidGains::default(),
            init: InitPoseParams::default(),
            waypoint_count: 10,
            waypoints: Vec::new(),
            waypoint_tolerance: 0.15,
            wall_margin: 0.4,
            grid_resolution: 0.25,
            noise: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ExperimentError> {
        toml::to_string(self).map_err(|e| ExperimentError::Config(e.to_string()))
    }
}

/// Everything needed to rebuild an experiment bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    /// Master generator state after world construction (seed, stream, word position), base64.
    pub rng_state: String,
    pub config: ExperimentConfig,
    pub scenario: ScenarioConfig,
    pub env_seed: u64,
    pub placement: PlacementResult,
    pub recipes: Vec<AssetRecipe>,
    pub robots: Vec<RobotSpec>,
    /// Per robot: little-endian f64 `q, qdot` for every step state, base64.
    pub trajectories: Vec<String>,
    /// SHA-256 of the serialized log, hex.
    pub log_sha256: String,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let found = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MANIFEST_VERSION {
            return Err(ExperimentError::Version {
                found,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(serde_json::from_value(probe)?)
    }

    pub fn decoded_trajectories(&self) -> Result<Vec<RobotTrajectory>, ExperimentError> {
        self.trajectories.iter().map(|s| decode_trajectory(s)).collect()
    }

    pub fn rng(&self) -> Result<ChaCha8Rng, ExperimentError> {
        decode_rng(&self.rng_state)
    }
}

pub fn encode_rng(rng: &ChaCha8Rng) -> String {
    let mut bytes = rng.get_seed().to_vec();
    bytes.extend_from_slice(&rng.get_stream().to_le_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    B64.encode(bytes)
}

pub fn decode_rng(s: &str) -> Result<ChaCha8Rng, ExperimentError> {
    let bytes = B64.decode(s).map_err(|e| ExperimentError::Manifest(format!("rng state: {e}")))?;
    if bytes.len() != 56 {
        return Err(ExperimentError::Manifest(format!("rng state has {} bytes, expected 56", bytes.len())));
    }
    let mut rng = ChaCha8Rng::from_seed(bytes[..32].try_into().unwrap());
    rng.set_stream(u64::from_le_bytes(bytes[32..40].try_into().unwrap()));
    rng.set_word_pos(u128::from_le_bytes(bytes[40..56].try_into().unwrap()));
    Ok(rng)
}

pub fn encode_trajectory(t: &RobotTrajectory) -> String {
    let mut bytes = Vec::with_capacity(t.states.len() * 96);
    for s in &t.states {
        for v in s.q.iter().chain(s.qdot.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    B64.encode(bytes)
}

pub fn decode_trajectory(s: &str) -> Result<RobotTrajectory, ExperimentError> {
    let bytes = B64.decode(s).map_err(|e| ExperimentError::Manifest(format!("trajectory: {e}")))?;
    if bytes.len() % 96 != 0 {
        return Err(ExperimentError::Manifest("trajectory length is not a whole number of states".into()));
    }
    let states = bytes
        .chunks_exact(96)
        .map(|c| {
            let v: Vec<f64> = c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            RobotState {
                q: Vector6::from_column_slice(&v[..6]),
                qdot: Vector6::from_column_slice(&v[6..]),
            }
        })
        .collect();
    Ok(RobotTrajectory { states })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Generated world plus the record of how it was made.
pub struct Scene {
    pub scenario: ScenarioConfig,
    pub env_seed: u64,
    pub env: TriMesh,
    pub placement: PlacementResult,
    pub recipes: Vec<AssetRecipe>,
    pub world: World,
    pub grid: OccupancyGrid2D,
    /// Position box the robots may move in.
    pub robot_bounds: Aabb,
}

/// Builds the environment, places humans and spawns flyers.
pub fn build_scene<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Scene, ExperimentError> {
    let scenario = match cfg.humans {
        Some(n) => ScenarioConfig::new(cfg.scenario, n)?,
        None => ScenarioConfig::sample(cfg.scenario, rng),
    };
    let env_seed = rng.next_u64();
    let env = gen_environment(&mut ChaCha8Rng::seed_from_u64(env_seed), &cfg.env)?;
    let footprint = enclosing_polygon(&env)?;
    let env_obj = CollisionObject::from_world(env.clone());

    let humans = human_recipes(&scenario, rng);
    let mut traces = Vec::new();
    for r in &humans {
        traces.push(swept_trace(&r.build()?, cfg.trace_stride)?);
    }
    let placement = place_all(&env_obj, &footprint, &traces, &cfg.placement, rng)?;
    let volume = flyer_volume(&env.aabb(), cfg.wall_margin + cfg.env.wall_thickness);
    let flyers = flyer_recipes(&scenario, &volume, rng);
    let recipes: Vec<AssetRecipe> = humans.into_iter().chain(flyers).collect();

    let world = assemble_world(&env, &placement, &recipes)?;
    let mut blockers = vec![env.clone()];
    for p in &placement.placed {
        if let Some(t) = traces.iter().find(|t| t.asset_id() == p.asset_id) {
            blockers.push(t.mesh.transformed(&p.pose()));
        }
    }
    let blocked = TriMesh::concat(blockers.iter(), env.asset_id())?;
    let hover = cfg.init.hover_height;
    let mut grid = rasterize_occupancy(&blocked, (hover - 0.5, hover + 0.5), cfg.grid_resolution)?;
    grid.mask_outside(&footprint);

    let b = env.aabb();
    let m = cfg.wall_margin + cfg.env.wall_thickness;
    let robot_bounds = Aabb::new(
        Point3::new(b.min.x + m, b.min.y + m, 0.5),
        Point3::new(b.max.x - m, b.max.y - m, (cfg.env.height - 0.5).max(0.5)),
    );
    Ok(Scene {
        scenario,
        env_seed,
        env,
        placement,
        recipes,
        world,
        grid,
        robot_bounds,
    })
}

/// Placed humans keep their placement pose; flyers move in world coordinates.
pub fn assemble_world(env: &TriMesh, placement: &PlacementResult, recipes: &[AssetRecipe]) -> Result<World, ExperimentError> {
    let mut assets = Vec::new();
    for r in recipes {
        match r {
            AssetRecipe::Walker { id, .. } => {
                if let Some(p) = placement.placed.iter().find(|p| p.asset_id == *id) {
                    assets.push(WorldAsset {
                        asset: r.build()?,
                        pose: p.pose(),
                    });
                }
            }
            AssetRecipe::Flyer { .. } => assets.push(WorldAsset {
                asset: r.build()?,
                pose: crate::geometry::Pose::identity(),
            }),
        }
    }
    Ok(World::new(env.clone(), assets))
}

fn random_plan<R: Rng + ?Sized>(
    grid: &OccupancyGrid2D,
    limits: &JointLimits,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vector6<f64>>, ExperimentError> {
    let free = grid.free_cells();
    if free.is_empty() {
        return Err(RobotError::NoFreeCell.into());
    }
    let tilt = if limits.horizontal { 0.0 } else { 15f64.to_radians() };
    Ok((0..count.max(1))
        .map(|_| {
            let (i, j) = free[rng.random_range(0..free.len())];
            let c = grid.cell_center(i, j);
            let mut q = Vector6::new(
                c.x,
                c.y,
                rng.random_range(limits.pos_min[2]..=limits.pos_max[2]),
                rng.random_range(-tilt..=tilt),
                rng.random_range(-tilt..=tilt),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            q = limits.clamp_position(&q);
            q
        })
        .collect())
}

fn robot_specs<R: Rng + ?Sized>(cfg: &ExperimentConfig, scene: &Scene, rng: &mut R) -> Result<Vec<RobotSpec>, ExperimentError> {
    if cfg.robots == 0 {
        return Err(ExperimentError::Config("at least one robot is required".into()));
    }
    let bvh = scene
        .world
        .env()
        .bvh()
        .ok_or_else(|| ExperimentError::Config("environment mesh is empty".into()))?;
    let limits = JointLimits::new(&scene.robot_bounds, scene.scenario.horizontal);
    let mut specs = Vec::new();
    for r in 0..cfg.robots {
        let start = init_pose(&scene.grid, bvh, scene.world.env().mesh(), rng, &cfg.init)?;
        let initial = limits.clamp_position(&start.q);
        let plan = if cfg.waypoints.is_empty() {
            random_plan(&scene.grid, &limits, cfg.waypoint_count, rng)?
        } else {
            cfg.waypoints.clone()
        };
        let mut twist = Vector6::zeros();
        for i in 0..6 {
            let v = 0.5 * limits.vmax[i];
            twist[i] = if v > 0.0 { rng.random_range(-v..=v) } else { 0.0 };
        }
        if limits.horizontal {
            twist[ROLL] = 0.0;
            twist[PITCH] = 0.0;
        }
        let mut spec = RobotSpec::new(&format!("robot{r}"), limits.clone(), initial);
        spec.gains = cfg.gains.clone();
        spec.waypoints = plan;
        spec.tolerance = cfg.waypoint_tolerance;
        spec.bootstrap_velocity = twist;
        specs.push(spec);
    }
    Ok(specs)
}

pub struct Experiment {
    pub manifest: Manifest,
    pub log: Log,
    pub run: RunOutput,
}

impl Experiment {
    /// Writes `log.dslog` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let file = std::io::BufWriter::new(std::fs::File::create(dir.join(LOG_FILE))?);
        self.log.write_to(file, DEFAULT_CHUNK_BYTES)?;
        std::fs::write(dir.join(MANIFEST_FILE), self.manifest.to_json()?)?;
        Ok(())
    }
}

/// Scene generation, start poses, and the full run.
pub fn generate(cfg: &ExperimentConfig, sink: Option<&mut dyn FrameSink>) -> Result<Experiment, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = build_scene(cfg, &mut rng)?;
    let rng_state = encode_rng(&rng);
    let robots = robot_specs(cfg, &scene, &mut rng)?;
    let drivers = vec![RobotDriver::Controlled; robots.len()];
    let run = run_experiment(&cfg.sim, &scene.world, &robots, &drivers, sink)?;
    let log = match &cfg.noise {
        Some(n) => apply_noise(&run.log, n)?,
        None => run.log.clone(),
    };
    log::info!(
        "{} humans placed ({} dropped), {} flyers, {} records",
        scene.placement.placed.len(),
        scene.placement.dropped.len(),
        scene.scenario.flyer_count(),
        log.records().len()
    );
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        rng_state,
        config: cfg.clone(),
        scenario: scene.scenario.clone(),
        env_seed: scene.env_seed,
        placement: scene.placement.clone(),
        recipes: scene.recipes.clone(),
        robots,
        trajectories: run.trajectories.iter().map(encode_trajectory).collect(),
        log_sha256: sha256_hex(&log.to_bytes()),
    };
    Ok(Experiment { manifest, log, run })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayOverrides {
    /// Cameras added to every robot.
    pub extra_cameras: Vec<ExtraCamera>,
    /// Replaces the recorded noise configuration.
    pub noise: Option<NoiseConfig>,
    pub render_high: Option<bool>,
}

/// Rebuilds the world from the manifest and drives the robots along the
/// recorded trajectories.
pub fn replay(
    manifest: &Manifest,
    overrides: &ReplayOverrides,
    sink: Option<&mut dyn FrameSink>,
) -> Result<(Log, RunOutput), ExperimentError> {
    if manifest.version != MANIFEST_VERSION {
        return Err(ExperimentError::Version {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    let cfg = &manifest.config;
    let env = gen_environment(&mut ChaCha8Rng::seed_from_u64(manifest.env_seed), &cfg.env)?;
    let world = assemble_world(&env, &manifest.placement, &manifest.recipes)?;
    let mut sim = cfg.sim.clone();
    sim.extra_cameras.extend(overrides.extra_cameras.iter().cloned());
    if let Some(h) = overrides.render_high {
        sim.render_high = h;
    }
    let trajectories = manifest.decoded_trajectories()?;
    if trajectories.len() != manifest.robots.len() {
        return Err(ExperimentError::Manifest(format!(
            "{} trajectories for {} robots",
            trajectories.len(),
            manifest.robots.len()
        )));
    }
    let drivers: Vec<RobotDriver> = trajectories.into_iter().map(RobotDriver::Scripted).collect();
    let run = run_experiment(&sim, &world, &manifest.robots, &drivers, sink)?;
    let noise = overrides.noise.as_ref().or(cfg.noise.as_ref());
    let log = match noise {
        Some(n) => apply_noise(&run.log, n)?,
        None => run.log.clone(),
    };
    Ok((log, run))
}

/// Replays without overrides and compares against the recorded log hash.
pub fn verify(manifest: &Manifest) -> Result<bool, ExperimentError> {
    let (log, _) = replay(manifest, &ReplayOverrides::default(), None)?;
    Ok(sha256_hex(&log.to_bytes()) == manifest.log_sha256)
}
