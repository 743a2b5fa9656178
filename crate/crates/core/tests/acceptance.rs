//! Acceptance suite. Runs without the libtest harness so that each
//! criterion prints exactly one PASS/FAIL line.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{
    brute_contacts, differing_channels, fuzz_controller, mean_std, perturb_stamps, placement_case, placement_checks,
    random_mesh, random_pose, random_unit, side_camera, tiny_experiment,
};
use dynscene::assets::AssetKind;
use dynscene::eval::{align_umeyama, ate_rmse, evaluate, Alignment, EvalOptions, Trajectory, DEFAULT_GAP_TOL};
use dynscene::experiment::{build_scene, generate, replay, verify, ExperimentConfig, ReplayOverrides};
use dynscene::geometry::{contact_count, raycast_linear, Aabb, Bvh, Pose};
use dynscene::logstore::{periodic_channels, read_log, reindex, trim, Log, NS_PER_S};
use dynscene::noise::{corrupt_depth, corrupt_imu, DepthNoiseParams, ImuNoiseParams};
use dynscene::placement::{ScenarioCode, ScenarioConfig, HUMANS_MAX, HUMANS_MIN};
use dynscene::robot::{wrap_yaw, JointLimits, RobotState, PITCH, ROLL};
use dynscene::sim::payload::{decode_imu, DepthImage};
use dynscene::sim::{run_experiment, synth_imu, ImuSample, RobotDriver, RobotSpec, RobotTrajectory, START_CHANNEL};
use nalgebra::{Point3, Rotation3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn trimmed(log: &Log, seconds: u64) -> Log {
    trim(log, START_CHANNEL, seconds * NS_PER_S).unwrap()
}

fn schedule_fidelity() -> Outcome {
    let mut cfg = ExperimentConfig {
        scenario: ScenarioCode::F,
        seed: 1,
        ..Default::default()
    };
    cfg.sim = cfg.sim.with_duration_s(60.0).unwrap();
    let t = Instant::now();
    let exp = generate(&cfg, None).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed().as_secs_f64();
    let log = trimmed(&exp.log, 60);
    let expected = [
        ("clock", 14_400),
        ("imu", 14_400),
        ("tf", 7_200),
        ("joints", 7_200),
        ("cam_pose", 3_600),
        ("odom", 3_600),
        ("rgb", 1_800),
        ("depth", 1_800),
        ("start", 1),
    ];
    for (name, n) in expected {
        let got = log.count_by_name(name);
        ensure(got == n, || format!("{name}: {got} records, expected {n}"))?;
    }
    ensure(elapsed < 120.0, || format!("run took {elapsed:.1} s"))?;
    Ok(format!(
        "60 s at {}x{}: counts exact, {:.1} s wall time",
        cfg.sim.low.width, cfg.sim.low.height, elapsed
    ))
}

fn scenario_matrix() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5000 {
        let n = ScenarioConfig::sample(ScenarioCode::N, &mut rng).humans;
        ensure((HUMANS_MIN..=HUMANS_MAX).contains(&n), || format!("{n} humans drawn"))?;
    }
    for code in ScenarioCode::ALL {
        let expected = match code {
            ScenarioCode::N | ScenarioCode::HN => 0,
            ScenarioCode::F | ScenarioCode::HF => 10,
            ScenarioCode::L | ScenarioCode::HL => 20,
        };
        for seed in 0..3 {
            let cfg = ExperimentConfig {
                scenario: code,
                seed,
                ..Default::default()
            };
            let scene = build_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
            let flyers = scene.world.assets().iter().filter(|a| a.asset.kind() == AssetKind::Flyer).count();
            ensure(flyers == expected && scene.scenario.flyer_count() == expected, || {
                format!("{code}: {flyers} flyers, expected {expected}")
            })?;
            let humans = scene.placement.placed.len() + scene.placement.dropped.len();
            ensure(humans == scene.scenario.humans && (HUMANS_MIN..=HUMANS_MAX).contains(&humans), || {
                format!("{code}: {humans} humans")
            })?;
        }
        if code.horizontal() {
            let exp = generate(&tiny_experiment(code, 3, 5.0), None).map_err(|e| e.to_string())?;
            for traj in &exp.run.trajectories {
                let tilted = traj
                    .states
                    .iter()
                    .filter(|s| s.q[ROLL] != 0.0 || s.q[PITCH] != 0.0 || s.qdot[ROLL] != 0.0 || s.qdot[PITCH] != 0.0)
                    .count();
                ensure(tilted == 0, || format!("{code}: {tilted} tilted states"))?;
            }
        }
    }
    Ok("flyers 0/10/20 per tier, H codes level throughout, humans in [7, 40]".into())
}

fn controller_limits() -> Outcome {
    let (steps, violations) = fuzz_controller(3, 100_000);
    ensure(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    Ok(format!("{steps} fuzzed steps within limits"))
}

fn placement_soundness() -> Outcome {
    let (mut pairs, mut contacts, mut placed, mut dropped, mut retried) = (0, 0, 0, 0, 0);
    for seed in 0..50 {
        let case = placement_case(1000 + seed);
        placed += case.result.placed.len();
        dropped += case.result.dropped.len();
        retried += case.result.attempts.iter().filter(|(_, n)| *n > 1).count();
        for (bvh, oracle) in placement_checks(&case) {
            ensure(bvh == oracle, || format!("scene {seed}: BVH {bvh} vs oracle {oracle}"))?;
            ensure(oracle < 200, || format!("scene {seed}: accepted placement has {oracle} contacts"))?;
            pairs += 1;
            contacts += oracle;
        }
    }
    Ok(format!(
        "50 scenes, {placed} placed ({retried} after rejections), {dropped} dropped, {pairs} pairs re-verified ({contacts} contacts in total)"
    ))
}

fn geometry_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut rays, mut hits) = (0, 0);
    for m in 0..100 {
        let n = rng.random_range(1..=1000);
        let mesh = random_mesh(&mut rng, n, 2.0, 3);
        let bvh = Bvh::build(&mesh).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let origin = Point3::from(random_unit(&mut rng) * 6.0);
            let target = Point3::from(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            let dir = target - origin;
            let (a, b) = (bvh.raycast(&mesh, &origin, &dir), raycast_linear(&mesh, &origin, &dir));
            rays += 1;
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) if a.triangle == b.triangle && (a.t - b.t).abs() <= 1e-9 => hits += 1,
                (a, b) => return Err(format!("mesh {m}: BVH {a:?} vs linear {b:?}")),
            }
        }
    }
    let mut contacts = 0;
    for p in 0..100 {
        let (na, nb) = (rng.random_range(1..=500), rng.random_range(1..=500));
        let a = random_mesh(&mut rng, na, 1.0, 1);
        let b = random_mesh(&mut rng, nb, 1.0, 2);
        let (pa, pb) = (random_pose(&mut rng, 0.5), random_pose(&mut rng, 0.5));
        let fast = contact_count(&a, &pa, &b, &pb, usize::MAX);
        let slow = brute_contacts(&a, &pa, &b, &pb);
        ensure(fast == slow, || format!("pair {p}: contact_count {fast} vs brute force {slow}"))?;
        contacts += slow;
    }
    Ok(format!("{rays} rays ({hits} hits) agree; 100 mesh pairs agree ({contacts} contacts)"))
}

fn replay_determinism() -> Outcome {
    for code in ScenarioCode::ALL {
        let exp = generate(&tiny_experiment(code, 21, 1.0), None).map_err(|e| e.to_string())?;
        ensure(verify(&exp.manifest).map_err(|e| e.to_string())?, || format!("{code}: replay differs"))?;
        let overrides = ReplayOverrides {
            extra_cameras: vec![side_camera()],
            ..Default::default()
        };
        let (log, _) = replay(&exp.manifest, &overrides, None).map_err(|e| e.to_string())?;
        let diff = differing_channels(&exp.log, &log);
        ensure(diff.is_empty(), || format!("{code}: side camera changed {diff:?}"))?;
        ensure(log.count_by_name("side/depth") > 0, || format!("{code}: side camera missing"))?;
    }
    Ok("6 scenario codes byte-identical; side camera leaves original channels untouched".into())
}

fn reindex_repair() -> Outcome {
    let exp = generate(&tiny_experiment(ScenarioCode::F, 7, 10.0), None).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    for (label, clean) in [("raw", exp.log.clone()), ("trimmed", trimmed(&exp.log, 10))] {
        let imu = clean.channel_id("imu").map_err(|e| e.to_string())?;
        let mut corrupted = clean.clone();
        let changed = perturb_stamps(&mut corrupted, imu, 0.01, &mut ChaCha8Rng::seed_from_u64(8));
        ensure(changed > 0, || "nothing perturbed".into())?;
        let reloaded = read_log(&corrupted.to_bytes()).map_err(|e| e.to_string())?;
        let repaired = reindex(&reloaded, &periodic_channels(&reloaded), None).map_err(|e| e.to_string())?;
        ensure(repaired.to_bytes() == clean.to_bytes(), || format!("{label} log not restored"))?;
        report.push(format!("{label}: {changed} stamps"));
    }
    Ok(format!("restored byte-for-byte ({})", report.join(", ")))
}

fn noise_statistics() -> Outcome {
    let n = 100_000;
    let rate = 240.0;
    let params = ImuNoiseParams {
        gyro_bias_walk: 0.0,
        accel_bias_walk: 0.0,
        ..ImuNoiseParams::default()
    };
    let clean: Vec<ImuSample> = (0..n)
        .map(|k| ImuSample {
            stamp_ns: k as u64,
            angular_velocity: Vector3::new(0.1, 0.0, -0.3),
            specific_force: Vector3::new(0.0, 0.0, 9.81),
        })
        .collect();
    let noisy = corrupt_imu(&clean, rate, &params, &mut ChaCha8Rng::seed_from_u64(10)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for axis in 0..3 {
        let g: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a.angular_velocity[axis] - b.angular_velocity[axis]).collect();
        let f: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a.specific_force[axis] - b.specific_force[axis]).collect();
        for (xs, density, what) in [(g, params.gyro_noise_density, "gyro"), (f, params.accel_noise_density, "accel")] {
            let expected = density * rate.sqrt();
            let (_, std) = mean_std(&xs);
            let rel = (std / expected - 1.0).abs();
            worst = worst.max(rel);
            ensure(rel < 0.05, || format!("{what} axis {axis}: std {std:e} vs {expected:e}"))?;
        }
    }
    let depth = DepthNoiseParams::default();
    for z in [1.0f32, 2.0, 3.0] {
        let img = DepthImage { width: 1000, height: 100, data: vec![z; n] };
        let out = corrupt_depth(&img, &depth, &mut ChaCha8Rng::seed_from_u64(z as u64)).map_err(|e| e.to_string())?;
        let xs: Vec<f64> = out.data.iter().map(|&d| d as f64 - z as f64).collect();
        let expected = depth.sigma(z as f64);
        let (_, std) = mean_std(&xs);
        let rel = (std / expected - 1.0).abs();
        worst = worst.max(rel);
        ensure(rel < 0.05, || format!("depth at {z} m: std {std:e} vs {expected:e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = DepthImage { width: 1000, height: 100, data: (0..n).map(|_| rng.random_range(0.0..6.0f32)).collect() };
    let out = corrupt_depth(&img, &depth, &mut rng).map_err(|e| e.to_string())?;
    let over = out.data.iter().filter(|&&d| d as f64 > depth.max_depth).count();
    ensure(over == 0, || format!("{over} pixels beyond {} m", depth.max_depth))?;
    Ok(format!("stddevs within {:.2}% of their formulas; no depth beyond 3.5 m", worst * 100.0))
}

fn evaluation_oracles() -> Outcome {
    let gt = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
    let est = [Point3::new(0.3, 0.0, 0.0), gt[1], gt[2]];
    let ate = ate_rmse(&gt, &est, &Alignment::identity()).map_err(|e| e.to_string())?;
    ensure((ate - (0.09f64 / 3.0).sqrt()).abs() <= 1e-9, || format!("ATE {ate}"))?;

    let gt5 = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(1.0, 1.0, 0.0),
        Point3::new(0.0, 1.0, 1.0),
        Point3::new(2.0, 0.5, 0.5),
    ];
    let est5 = [
        gt5[0] + Vector3::new(0.1, 0.0, 0.0),
        gt5[1] + Vector3::new(0.0, -0.2, 0.0),
        gt5[2],
        gt5[3] + Vector3::new(0.0, 0.0, 0.3),
        gt5[4] + Vector3::new(0.1, 0.1, 0.1),
    ];
    let ate5 = ate_rmse(&gt5, &est5, &Alignment::identity()).map_err(|e| e.to_string())?;
    let hand = ((0.01 + 0.04 + 0.0 + 0.09 + 0.03) / 5.0f64).sqrt();
    ensure((ate5 - hand).abs() <= 1e-9, || format!("5-pose ATE {ate5} vs {hand}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts: Vec<Point3<f64>> = (0..10).map(|_| Point3::from(Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)))).collect();
        let t = random_pose(&mut rng, 10.0);
        let moved: Vec<Point3<f64>> = pts.iter().map(|p| t.transform_point(p)).collect();
        let al = align_umeyama(&pts, &moved, false).map_err(|e| e.to_string())?;
        let r_err = (al.rotation.matrix() - Rotation3::from(t.orientation).inverse().matrix()).abs().max();
        let inv = t.inverse();
        let t_err = (al.translation - inv.position.coords).norm();
        let fit = ate_rmse(&pts, &moved, &al).map_err(|e| e.to_string())?;
        worst = worst.max(r_err).max(t_err).max(fit);
    }
    ensure(worst <= 1e-9, || format!("rigid recovery error {worst:e}"))?;

    let gt_traj = Trajectory::new((0..=1800).map(|k| (k as f64 / 30.0, Pose::identity())).collect()).unwrap();
    let half = Trajectory::new((0..=900).map(|k| (k as f64 / 30.0, Pose::identity())).collect()).unwrap();
    let report = evaluate(&gt_traj, &half, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let missing = report.missing_time;
    ensure((missing - 30.0).abs() <= DEFAULT_GAP_TOL / 2.0 + 1e-9, || format!("missing time {missing}"))?;
    Ok(format!(
        "hand ATE values match, rigid recovery error {worst:.1e}, missing time {missing:.4} s of {:.0} s",
        report.span
    ))
}

/// Runs a scripted single-robot trajectory and returns the body IMU readings after the start signal.
fn scripted_imu(q_at: impl Fn(f64) -> Vector6<f64>) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>, String> {
    let cfg = common::small_sim(2.0);
    let dt = cfg.dt();
    let states: Vec<RobotState> = (0..=cfg.total_steps()).map(|k| RobotState::at(q_at(k as f64 * dt))).collect();
    let bounds = Aabb::new(Point3::new(-4.0, -4.0, 0.5), Point3::new(3.5, 4.0, 2.5));
    let spec = RobotSpec::new("drone", JointLimits::new(&bounds, false), states[0].q);
    let driver = RobotDriver::Scripted(RobotTrajectory { states });
    let out = run_experiment(&cfg, &common::empty_world(), &[spec], &[driver], None).map_err(|e| e.to_string())?;
    let log = trimmed(&out.log, 2);
    let id = log.channel_id("imu").map_err(|e| e.to_string())?;
    log.records_on(id).map(|r| decode_imu(&r.payload).map_err(|e| e.to_string())).collect()
}

fn imu_physics() -> Outcome {
    let g = Vector3::new(0.0, 0.0, -9.81);
    let p = Pose::from_xyz_yaw(1.0, -2.0, 1.5, 2.0);
    let (_, f) = synth_imu(&[p, p, p], 1.0 / 240.0, &g).map_err(|e| e.to_string())?;
    ensure((f - Vector3::new(0.0, 0.0, 9.81)).norm() <= 1e-6, || format!("hover specific force {f:?}"))?;
    let hover = scripted_imu(|_| Vector6::new(0.5, 0.5, 1.5, 0.0, 0.0, 1.0))?;
    for (w, f) in &hover {
        ensure((f - Vector3::new(0.0, 0.0, 9.81)).norm() <= 1e-6 && w.norm() <= 1e-12, || {
            format!("logged hover reading {f:?}, {w:?}")
        })?;
    }
    let (r, omega) = (1.0, 1.0);
    let circle = scripted_imu(|t| {
        Vector6::new(r * (omega * t).cos(), r * (omega * t).sin(), 1.5, 0.0, 0.0, wrap_yaw(omega * t))
    })?;
    let expected = r * omega * omega;
    let mut worst: f64 = 0.0;
    for (w, f) in &circle {
        let rel = ((f.xy().norm() - expected) / expected).abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-3, || format!("centripetal {} vs {expected}", f.xy().norm()))?;
        ensure((f.z - 9.81).abs() <= 1e-6 && (w.z - omega).abs() <= 1e-6, || format!("circle reading {f:?}, {w:?}"))?;
    }
    Ok(format!(
        "hover reads +g over {} samples; circle centripetal error {worst:.1e} relative",
        hover.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("schedule fidelity", schedule_fidelity),
        ("scenario matrix", scenario_matrix),
        ("controller limits", controller_limits),
        ("placement soundness", placement_soundness),
        ("geometry oracles", geometry_oracles),
        ("replay determinism", replay_determinism),
        ("re-indexing repair", reindex_repair),
        ("noise statistics", noise_statistics),
        ("evaluation oracles", evaluation_oracles),
        ("IMU physics", imu_physics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
