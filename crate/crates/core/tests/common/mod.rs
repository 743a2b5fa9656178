#![allow(dead_code)]

use dynscene::geometry::tritri::triangles_intersect;
use dynscene::geometry::{box_mesh, AssetId, Pose, TriMesh};
use dynscene::sim::{RobotSpec, SimConfig, World};
use dynscene::robot::JointLimits;
use dynscene::geometry::Aabb;
use nalgebra::{Point3, Vector3, Vector6};
use rand::Rng;

/// Triangle soup of `n` small triangles clustered in a few blobs inside `[-extent, extent]³`.
pub fn random_mesh<R: Rng>(rng: &mut R, n: usize, extent: f64, id: u32) -> TriMesh {
    let blobs: Vec<Point3<f64>> = (0..rng.random_range(1..=4))
        .map(|_| {
            Point3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            )
        })
        .collect();
    let mut vertices = Vec::with_capacity(3 * n);
    let mut triangles = Vec::with_capacity(n);
    for i in 0..n {
        let c = blobs[i % blobs.len()];
        let spread = extent * 0.5;
        let center = c + Vector3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
        );
        let size = rng.random_range(0.02..0.3) * extent;
        for _ in 0..3 {
            vertices.push(
                center
                    + Vector3::new(
                        rng.random_range(-size..size),
                        rng.random_range(-size..size),
                        rng.random_range(-size..size),
                    ),
            );
        }
        let b = 3 * i as u32;
        triangles.push([b, b + 1, b + 2]);
    }
    TriMesh::new(vertices, triangles, AssetId(id)).unwrap()
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_pose<R: Rng>(rng: &mut R, reach: f64) -> Pose {
    let axis = nalgebra::Unit::new_normalize(random_unit(rng));
    let mut coord = || if reach > 0.0 { rng.random_range(-reach..reach) } else { 0.0 };
    let position = Point3::new(coord(), coord(), coord());
    Pose::new(
        position,
        nalgebra::UnitQuaternion::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::TAU)),
    )
}

/// Quadratic reference: every triangle pair of the posed meshes.
pub fn brute_contacts(a: &TriMesh, pose_a: &Pose, b: &TriMesh, pose_b: &Pose) -> usize {
    let (wa, wb) = (a.transformed(pose_a), b.transformed(pose_b));
    let tb: Vec<_> = (0..wb.triangle_count()).map(|j| wb.triangle(j)).collect();
    let mut count = 0;
    for i in 0..wa.triangle_count() {
        let ta = wa.triangle(i);
        count += tb.iter().filter(|t| triangles_intersect(&ta, t)).count();
    }
    count
}

/// Floor slab plus one wall at x = 4.
pub fn room() -> TriMesh {
    let floor = box_mesh(Point3::new(-5.0, -5.0, -0.1), Point3::new(5.0, 5.0, 0.0), AssetId(1));
    let wall = box_mesh(Point3::new(4.0, -5.0, 0.0), Point3::new(4.1, 5.0, 3.0), AssetId(1));
    TriMesh::concat([&floor, &wall], AssetId(1)).unwrap()
}

pub fn empty_world() -> World {
    World::new(room(), Vec::new())
}

pub fn small_sim(seconds: f64) -> SimConfig {
    SimConfig {
        low: dynscene::sim::Resolution::new(16, 12),
        ..SimConfig::default()
    }
    .with_duration_s(seconds)
    .unwrap()
}

pub fn drone() -> RobotSpec {
    let bounds = Aabb::new(Point3::new(-4.0, -4.0, 0.5), Point3::new(3.5, 4.0, 2.5));
    let mut spec = RobotSpec::new("drone", JointLimits::new(&bounds, false), Vector6::new(0.0, 0.0, 1.5, 0.0, 0.0, 0.0));
    spec.waypoints = vec![Vector6::new(1.0, 1.0, 1.5, 0.0, 0.0, 1.0)];
    spec.bootstrap_velocity = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.05, 0.1);
    spec
}

pub struct PlacementCase {
    pub env: TriMesh,
    pub traces: Vec<dynscene::assets::SweptTrace>,
    pub result: dynscene::placement::PlacementResult,
}

/// Small furnished room with a handful of short-path walkers placed into it.
pub fn placement_case(seed: u64) -> PlacementCase {
    use dynscene::assets::{gen_walker, swept_trace, WalkerParams};
    use dynscene::envgen::{gen_environment, EnvParams, RoomShape};
    use dynscene::geometry::{enclosing_polygon, CollisionObject};
    use dynscene::placement::{place_all, PlacementConfig};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params = EnvParams {
        shape: RoomShape::Box {
            width: rng.random_range(3.0..5.0),
            depth: rng.random_range(3.0..5.0),
        },
        furniture: rng.random_range(0..3),
        ..EnvParams::default()
    };
    let env = gen_environment(&mut rng, &params).unwrap();
    let footprint = enclosing_polygon(&env).unwrap();
    let env_obj = CollisionObject::new(&env, &Pose::identity()).unwrap();
    let walkers = rng.random_range(4..12);
    let traces: Vec<_> = (0..walkers)
        .map(|i| {
            let wp = WalkerParams {
                path_length: rng.random_range(0.5..2.0),
                ..WalkerParams::default()
            };
            let w = gen_walker(&mut rng, &wp, AssetId(1000 + i)).unwrap();
            swept_trace(&w, 4).unwrap()
        })
        .collect();
    let result = place_all(&env_obj, &footprint, &traces, &PlacementConfig::default(), &mut rng).unwrap();
    PlacementCase { env, traces, result }
}

/// For every accepted placement, `(BVH count, oracle count)` against the
/// environment and against every other accepted placement.
pub fn placement_checks(case: &PlacementCase) -> Vec<(usize, usize)> {
    use dynscene::geometry::contact_count;
    let placed: Vec<(&TriMesh, Pose)> = case
        .result
        .placed
        .iter()
        .map(|p| {
            let t = case.traces.iter().find(|t| t.asset_id() == p.asset_id).unwrap();
            (&t.mesh, p.pose())
        })
        .collect();
    let id = Pose::identity();
    let mut out = Vec::new();
    for (i, (m, pose)) in placed.iter().enumerate() {
        out.push((
            contact_count(m, pose, &case.env, &id, usize::MAX),
            brute_contacts(m, pose, &case.env, &id),
        ));
        for (other, other_pose) in &placed[i + 1..] {
            out.push((
                contact_count(m, pose, other, other_pose, usize::MAX),
                brute_contacts(m, pose, other, other_pose),
            ));
        }
    }
    out
}

/// Outcome of a controller fuzz run: `(steps, violations)`.
pub fn fuzz_controller(seed: u64, steps: usize) -> (usize, Vec<String>) {
    use dynscene::robot::{integrate, JointController, PidGains, RobotState, Setpoint, PITCH, ROLL};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vmax = [0.5, 0.5, 0.5, 40f64.to_radians(), 40f64.to_radians(), 30f64.to_radians()];
    let mut violations = Vec::new();
    let mut done = 0;
    while done < steps {
        let lo = Point3::new(rng.random_range(-5.0..0.0), rng.random_range(-5.0..0.0), rng.random_range(0.0..1.0));
        let hi = lo + Vector3::new(rng.random_range(0.5..8.0), rng.random_range(0.5..8.0), rng.random_range(0.5..3.0));
        let horizontal = rng.random_bool(0.5);
        let limits = JointLimits::new(&Aabb::new(lo, hi), horizontal);
        let gains = PidGains::uniform(rng.random_range(0.0..50.0), rng.random_range(0.0..5.0), rng.random_range(0.0..2.0));
        let mut ctl = JointController::new(gains).unwrap();
        let mut q = Vector6::zeros();
        for i in 0..6 {
            q[i] = rng.random_range(limits.pos_min[i]..=limits.pos_max[i]);
        }
        let mut state = RobotState::at(limits.clamp_position(&q));
        let dt = [1.0 / 240.0, 1.0 / 60.0, 0.05][rng.random_range(0..3)];
        for _ in 0..1000 {
            let mut target = Vector6::zeros();
            for i in 0..6 {
                target[i] = rng.random_range(-100.0..100.0);
            }
            let sp = if rng.random_bool(0.5) { Setpoint::Position(target) } else { Setpoint::Velocity(target) };
            let cmd = ctl.step(&state, &sp, &limits, dt).unwrap();
            for i in 0..6 {
                if cmd[i].abs() > vmax[i] {
                    violations.push(format!("command {i} = {} exceeds {}", cmd[i], vmax[i]));
                }
            }
            state = integrate(&state, &cmd, &limits, dt);
            if !limits.contains(&state.q) {
                violations.push(format!("state {:?} outside limits", state.q));
            }
            if horizontal && (state.q[ROLL] != 0.0 || state.q[PITCH] != 0.0) {
                violations.push(format!("horizontal robot tilted: {:?}", state.q));
            }
            done += 1;
        }
    }
    (done, violations)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Shifts the stamps of a random `fraction` of the records on `channel` by
/// a non-zero jitter of up to ±5 ms. Returns how many were changed.
pub fn perturb_stamps<R: Rng>(log: &mut dynscene::logstore::Log, channel: u16, fraction: f64, rng: &mut R) -> usize {
    let mut changed = 0;
    for (ch, stamp) in log.stamps_mut() {
        if *ch == channel && rng.random_bool(fraction) {
            let jitter: i64 = rng.random_range(1..5_000_000) * if rng.random_bool(0.5) { 1 } else { -1 };
            *stamp = (*stamp as i64 + jitter).max(0) as u64;
            changed += 1;
        }
    }
    changed
}

/// Short, low-resolution experiment for replay checks.
pub fn tiny_experiment(code: dynscene::placement::ScenarioCode, seed: u64, seconds: f64) -> dynscene::experiment::ExperimentConfig {
    let mut cfg = dynscene::experiment::ExperimentConfig {
        scenario: code,
        seed,
        ..Default::default()
    };
    cfg.sim = cfg.sim.with_duration_s(seconds).unwrap();
    cfg.sim.low = dynscene::sim::Resolution::new(16, 12);
    cfg
}

pub fn side_camera() -> dynscene::sim::ExtraCamera {
    let cfg = SimConfig::default();
    dynscene::sim::ExtraCamera {
        name: "side".into(),
        resolution: dynscene::sim::Resolution::new(16, 12),
        hfov: cfg.hfov,
        vfov: cfg.vfov,
        mount: Pose::from_xyz_yaw(0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2),
        rate: 30,
    }
}

/// Names of channels in `a` whose records differ from the same-named channel in `b`.
pub fn differing_channels(a: &dynscene::logstore::Log, b: &dynscene::logstore::Log) -> Vec<String> {
    let mut out = Vec::new();
    for ch in a.channels() {
        let Some(other) = b.channel_by_name(&ch.name) else {
            out.push(ch.name.clone());
            continue;
        };
        let ra = a.records_on(ch.id).map(|r| (r.index, r.stamp_ns, &r.payload));
        let rb = b.records_on(other.id).map(|r| (r.index, r.stamp_ns, &r.payload));
        if !ra.eq(rb) {
            out.push(ch.name.clone());
        }
    }
    out
}
