//! Scenario configuration and collision-aware placement of animated assets.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{
    gen_flyer, gen_walker, AnimatedAsset, AssetError, FlyerParams, FlyerShape, PathShape, SweptTrace, WalkerParams,
};
use crate::geometry::{contact_count_objects, Aabb, AssetId, CollisionObject, FootprintPolygon, GeometryError, Pose};

pub const HUMAN_ID_BASE: u32 = 1000;
pub const FLYER_ID_BASE: u32 = 2000;
pub const HUMANS_MIN: usize = 7;
pub const HUMANS_MAX: usize = 40;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioCode {
    N,
    HN,
    F,
    HF,
    L,
    HL,
}

impl ScenarioCode {
    pub const ALL: [ScenarioCode; 6] = [Self::N, Self::HN, Self::F, Self::HF, Self::L, Self::HL];

    pub fn horizontal(self) -> bool {
        matches!(self, Self::HN | Self::HF | Self::HL)
    }

    /// Flyers per object set.
    pub fn flyers_per_set(self) -> usize {
        match self {
            Self::N | Self::HN => 0,
            Self::F | Self::HF => 5,
            Self::L | Self::HL => 10,
        }
    }
}

impl fmt::Display for ScenarioCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ScenarioCode {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "N" => Self::N,
            "HN" => Self::HN,
            "F" => Self::F,
            "HF" => Self::HF,
            "L" => Self::L,
            "HL" => Self::HL,
            _ => {
                return Err(PlacementError::InvalidInput(format!(
                    "unknown scenario code {s:?} (expected N, HN, F, HF, L or HL)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub code: ScenarioCode,
    pub humans: usize,
    pub flyers_a: usize,
    pub flyers_b: usize,
    pub horizontal: bool,
}

impl ScenarioConfig {
    pub fn new(code: ScenarioCode, humans: usize) -> Result<Self, PlacementError> {
        if !(HUMANS_MIN..=HUMANS_MAX).contains(&humans) {
            return Err(PlacementError::InvalidInput(format!(
                "human count {humans} outside [{HUMANS_MIN}, {HUMANS_MAX}]"
            )));
        }
        Ok(Self {
            code,
            humans,
            flyers_a: code.flyers_per_set(),
            flyers_b: code.flyers_per_set(),
            horizontal: code.horizontal(),
        })
    }

    /// Draws the human count uniformly from its range.
    pub fn sample<R: Rng + ?Sized>(code: ScenarioCode, rng: &mut R) -> Self {
        Self::new(code, rng.random_range(HUMANS_MIN..=HUMANS_MAX)).expect("count drawn in range")
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        let expected = Self::new(self.code, self.humans)?;
        if *self != expected {
            return Err(PlacementError::InvalidInput(format!(
                "scenario counts {self:?} do not match code {}",
                self.code
            )));
        }
        Ok(())
    }

    pub fn flyer_count(&self) -> usize {
        self.flyers_a + self.flyers_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub contact_threshold: usize,
    pub max_attempts_per_asset: usize,
    /// Half-open yaw interval, rad.
    pub yaw_range: (f64, f64),
    /// Gap between the trace's lowest point and the ground plane, m.
    pub ground_clearance: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            contact_threshold: 200,
            max_attempts_per_asset: 100,
            yaw_range: (0.0, TAU),
            ground_clearance: 1e-3,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.contact_threshold < 1 || self.max_attempts_per_asset < 1 {
            return Err(PlacementError::InvalidInput("threshold and attempts must be at least 1".into()));
        }
        if !(self.yaw_range.0 < self.yaw_range.1) || !self.ground_clearance.is_finite() || self.ground_clearance < 0.0
        {
            return Err(PlacementError::InvalidInput("invalid yaw range or ground clearance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub asset_id: AssetId,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Vertical offset applied to the asset so that it rests on the ground.
    pub z: f64,
    pub attempts: usize,
}

impl Placement {
    pub fn pose(&self) -> Pose {
        Pose::new(
            Point3::new(self.x, self.y, self.z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub placed: Vec<Placement>,
    pub dropped: Vec<AssetId>,
    /// Candidate poses tried per asset, in input order.
    pub attempts: Vec<(AssetId, usize)>,
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Uniform point in the polygon with uniform yaw in `[0, 2π)`.
pub fn sample_candidate<R: Rng + ?Sized>(polygon: &FootprintPolygon, rng: &mut R) -> Result<Candidate, PlacementError> {
    sample_candidate_in(polygon, (0.0, TAU), rng)
}

pub fn sample_candidate_in<R: Rng + ?Sized>(
    polygon: &FootprintPolygon,
    yaw_range: (f64, f64),
    rng: &mut R,
) -> Result<Candidate, PlacementError> {
    polygon.validate()?;
    let rect = polygon.bounding_rect();
    for _ in 0..MAX_REJECTIONS {
        let p = Point2::new(
            rng.random_range(rect.min.x..rect.max.x),
            rng.random_range(rect.min.y..rect.max.y),
        );
        if polygon.contains(&p) {
            let yaw = rng.random_range(yaw_range.0..yaw_range.1);
            return Ok(Candidate { x: p.x, y: p.y, yaw });
        }
    }
    Err(PlacementError::InvalidInput("polygon covers a negligible part of its bounding rectangle".into()))
}

/// World pose placing `trace` at a candidate with its lowest point `clearance` above z = 0.
pub fn candidate_pose(trace: &SweptTrace, c: &Candidate, clearance: f64) -> Placement {
    Placement {
        asset_id: trace.asset_id(),
        x: c.x,
        y: c.y,
        yaw: c.yaw,
        z: clearance - trace.mesh.aabb().min.z,
        attempts: 0,
    }
}

/// Places traces one after another in input order. A candidate is kept when
/// its contact count against the environment and against every trace placed
/// so far is strictly below the threshold; otherwise up to
/// `max_attempts_per_asset` candidates are tried before the asset is dropped.
pub fn place_all<R: Rng + ?Sized>(
    env: &CollisionObject,
    footprint: &FootprintPolygon,
    traces: &[SweptTrace],
    cfg: &PlacementConfig,
    rng: &mut R,
) -> Result<PlacementResult, PlacementError> {
    cfg.validate()?;
    if env.mesh().is_empty() {
        return Err(PlacementError::InvalidInput("environment mesh is empty".into()));
    }
    let mut placed_objects: Vec<CollisionObject> = Vec::new();
    let mut result = PlacementResult {
        placed: Vec::new(),
        dropped: Vec::new(),
        attempts: Vec::new(),
    };
    for trace in traces {
        let mut accepted = None;
        let mut attempts = 0;
        while attempts < cfg.max_attempts_per_asset {
            attempts += 1;
            let c = sample_candidate_in(footprint, cfg.yaw_range, rng)?;
            let placement = candidate_pose(trace, &c, cfg.ground_clearance);
            let obj = CollisionObject::new(&trace.mesh, &placement.pose())?;
            let thr = cfg.contact_threshold;
            if contact_count_objects(&obj, env, thr) >= thr {
                continue;
            }
            if placed_objects.iter().any(|other| contact_count_objects(&obj, other, thr) >= thr) {
                continue;
            }
            accepted = Some((placement, obj));
            break;
        }
        result.attempts.push((trace.asset_id(), attempts));
        match accepted {
            Some((mut p, obj)) => {
                p.attempts = attempts;
                log::debug!("placed {} after {attempts} attempts", p.asset_id);
                result.placed.push(p);
                placed_objects.push(obj);
            }
            None => {
                log::info!("dropping {} after {attempts} attempts", trace.asset_id());
                result.dropped.push(trace.asset_id());
            }
        }
    }
    Ok(result)
}

/// Generation record for one procedural asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AssetRecipe {
    Walker { id: AssetId, seed: u64, params: WalkerParams },
    Flyer { id: AssetId, seed: u64, params: FlyerParams },
}

impl AssetRecipe {
    pub fn id(&self) -> AssetId {
        match self {
            Self::Walker { id, .. } | Self::Flyer { id, .. } => *id,
        }
    }

    pub fn build(&self) -> Result<AnimatedAsset, AssetError> {
        match self {
            Self::Walker { id, seed, params } => gen_walker(&mut ChaCha8Rng::seed_from_u64(*seed), params, *id),
            Self::Flyer { id, seed, params } => gen_flyer(&mut ChaCha8Rng::seed_from_u64(*seed), params, *id),
        }
    }
}

/// Recipes for the scenario's humans, each with its own seed.
pub fn human_recipes<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AssetRecipe> {
    (0..cfg.humans)
        .map(|i| {
            let params = WalkerParams {
                speed: rng.random_range(0.5..1.5),
                path_length: rng.random_range(1.0..4.0),
                body_height: rng.random_range(1.5..1.95),
                path: PathShape::Random,
                frame_rate: 30.0,
            };
            AssetRecipe::Walker {
                id: AssetId(HUMAN_ID_BASE + i as u32),
                seed: rng.next_u64(),
                params,
            }
        })
        .collect()
}

/// Volume flyers move in: the environment bounds shrunk by `margin` where possible.
pub fn flyer_volume(env_bounds: &Aabb, margin: f64) -> Aabb {
    let c = env_bounds.center();
    let half = (env_bounds.extent() / 2.0 - Vector3::repeat(margin)).map(|v| v.max(0.0));
    Aabb::new(c - half, c + half)
}

/// Recipes for the scenario's flyers: boxes for the first set, ellipsoids for the second.
pub fn flyer_recipes<R: Rng + ?Sized>(cfg: &ScenarioConfig, volume: &Aabb, rng: &mut R) -> Vec<AssetRecipe> {
    let shapes = std::iter::repeat_n(FlyerShape::Box, cfg.flyers_a).chain(std::iter::repeat_n(FlyerShape::Ellipsoid, cfg.flyers_b));
    shapes
        .enumerate()
        .map(|(i, shape)| AssetRecipe::Flyer {
            id: AssetId(FLYER_ID_BASE + i as u32),
            seed: rng.next_u64(),
            params: FlyerParams::new(*volume, shape),
        })
        .collect()
}

/// Flyers are spawned without any collision checks.
pub fn spawn_flyers<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    volume: &Aabb,
    rng: &mut R,
) -> Result<Vec<AnimatedAsset>, PlacementError> {
    cfg.validate()?;
    Ok(flyer_recipes(cfg, volume, rng)
        .iter()
        .map(AssetRecipe::build)
        .collect::<Result<_, _>>()?)
}
