mod common;

use common::{drone, empty_world, random_pose, small_sim};
use dynscene::geometry::{box_mesh, centered_box, AssetId, CollisionObject, Pose};
use dynscene::sim::bundle::{FrameBundle, MemorySink};
use dynscene::sim::payload::{decode_depth, decode_gray, decode_pose};
use dynscene::sim::{
    camera_world_pose, extract_boxes, render, run_experiment, schedule_channels, CameraModel, ChannelGroup,
    RobotDriver, Scene, SimConfig,
};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn forward_camera() -> Pose {
    camera_world_pose(&Pose::identity(), &Pose::identity())
}

fn model(cfg: &SimConfig) -> CameraModel {
    CameraModel::from_fov(cfg.low, cfg.hfov, cfg.vfov)
}

#[test]
fn schedule_counts_per_second_match_rates() {
    let cfg = SimConfig::default();
    let mut counts = std::collections::BTreeMap::new();
    for k in cfg.bootstrap_steps..cfg.bootstrap_steps + 240 {
        for g in schedule_channels(k, &cfg) {
            *counts.entry(g).or_insert(0u32) += 1;
        }
    }
    use ChannelGroup::*;
    let r = &cfg.rates;
    let expected = [
        (Clock, r.clock),
        (Start, 1),
        (Imu, r.imu),
        (Tf, r.tf),
        (Joints, r.joints),
        (CamPose, r.cam_pose),
        (Odom, r.odom),
        (Rgb, r.rgb),
        (Depth, r.depth),
    ];
    for (g, n) in expected {
        assert_eq!(counts[&g], n, "{g:?}");
    }
}

#[test]
fn wall_at_two_meters_reads_two_everywhere() {
    let cfg = SimConfig::default();
    let wall = CollisionObject::from_world(box_mesh(Point3::new(2.0, -50.0, -50.0), Point3::new(2.1, 50.0, 50.0), AssetId(1)));
    let scene = Scene::new(Some(&wall), Vec::new());
    let frame = render(&scene, &forward_camera(), &model(&cfg));
    assert_eq!(frame.depth.len(), cfg.low.pixels());
    assert!(frame.depth.iter().all(|&d| (d - 2.0).abs() < 1e-6), "{:?}", &frame.depth[..4]);
    assert!(frame.instance.iter().all(|&id| id == 1));
}

#[test]
fn tilted_plane_matches_analytic_depth() {
    let cfg = SimConfig::default();
    let m = model(&cfg);
    // plane through (3, 0, 0) with normal (1, 0, 1)/√2, as a large thin box
    let n = Vector3::new(1.0, 0.0, 1.0).normalize();
    let slab = centered_box(Point3::origin(), Vector3::new(0.0005, 200.0, 200.0), AssetId(2));
    let rot = nalgebra::UnitQuaternion::rotation_between(&Vector3::x(), &n).unwrap();
    let pose = Pose::new(Point3::new(3.0, 0.0, 0.0) + n * 0.00025, rot);
    let obj = CollisionObject::from_world(slab.transformed(&pose));
    let scene = Scene::new(Some(&obj), Vec::new());
    let cam = forward_camera();
    let frame = render(&scene, &cam, &m);
    let d = n.dot(&Vector3::new(3.0, 0.0, 0.0));
    for j in 0..m.height {
        for i in 0..m.width {
            let dir = cam.orientation * m.ray(i, j);
            let denom = n.dot(&dir);
            let got = frame.depth[frame.at(i, j)] as f64;
            if denom > 1e-9 {
                let expected = (d - n.dot(&cam.position.coords)) / denom;
                assert!((got - expected).abs() < 1e-5 * expected.max(1.0), "({i},{j}) {got} vs {expected}");
            } else {
                assert_eq!(got, 0.0);
            }
        }
    }
}

#[test]
fn nearer_object_occludes_wall() {
    let cfg = SimConfig::default();
    let m = model(&cfg);
    let wall = CollisionObject::from_world(box_mesh(Point3::new(4.0, -50.0, -50.0), Point3::new(4.1, 50.0, 50.0), AssetId(1)));
    let cube = CollisionObject::from_world(centered_box(Point3::new(2.0, 0.0, 0.0), Vector3::repeat(0.5), AssetId(1001)));
    let scene = Scene::new(Some(&wall), vec![cube]);
    let cam = forward_camera();
    let frame = render(&scene, &cam, &m);
    let mut seen = 0;
    for (d, id) in frame.depth.iter().zip(&frame.instance) {
        match id {
            1001 => {
                seen += 1;
                assert!((*d - 1.75).abs() < 1e-5);
            }
            1 => assert!((*d - 4.0).abs() < 1e-5),
            other => panic!("unexpected instance {other}"),
        }
    }
    assert!(seen > 0);
    let boxes = extract_boxes(&frame, &scene, &cam, &m);
    assert_eq!(boxes.len(), 1);
    let (tight, loose) = (boxes[0].tight.unwrap(), boxes[0].loose.unwrap());
    assert!(loose.contains(&tight));
    assert_eq!(tight.area(), seen);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn depth_instance_and_boxes_are_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SimConfig::default();
        let m = model(&cfg);
        let objects: Vec<CollisionObject> = (0..rng.random_range(1..6))
            .map(|i| {
                let c = Point3::new(rng.random_range(0.5..6.0), rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0));
                let mesh = centered_box(Point3::origin(), Vector3::from_fn(|_, _| rng.random_range(0.1..1.0)), AssetId(1000 + i));
                let mut pose = random_pose(&mut rng, 0.0);
                pose.position = c;
                CollisionObject::from_world(mesh.transformed(&pose))
            })
            .collect();
        let scene = Scene::new(None, objects);
        let cam = forward_camera();
        let frame = render(&scene, &cam, &m);
        for (d, id) in frame.depth.iter().zip(&frame.instance) {
            prop_assert_eq!(*d == 0.0, *id == 0);
            prop_assert!(*d >= 0.0);
        }
        for b in extract_boxes(&frame, &scene, &cam, &m) {
            if let Some(t) = b.tight {
                let loose = b.loose.expect("visible object has a projected box");
                prop_assert!(loose.contains(&t), "{:?} not in {:?}", t, loose);
            }
        }
    }
}

#[test]
fn low_and_high_cameras_share_the_field_of_view() {
    let cfg = SimConfig::default();
    let low = CameraModel::from_fov(cfg.low, cfg.hfov, cfg.vfov);
    let high = CameraModel::from_fov(cfg.high, cfg.hfov, cfg.vfov);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..5.0));
        let (ul, vl) = low.project(&p);
        let (uh, vh) = high.project(&p);
        assert!((ul / low.width as f64 - uh / high.width as f64).abs() < 1e-12);
        assert!((vl / low.height as f64 - vh / high.height as f64).abs() < 1e-12);
    }
    let edge = |m: &CameraModel| (m.width as f64 / 2.0 / m.fx).atan() * 2.0;
    assert!((edge(&low) - cfg.hfov).abs() < 1e-12);
    assert!((edge(&high) - cfg.hfov).abs() < 1e-12);
}

#[test]
fn logged_frames_match_bundles() {
    let cfg = small_sim(0.25);
    let mut sink = MemorySink::default();
    let out = run_experiment(&cfg, &empty_world(), &[drone()], &[RobotDriver::Controlled], Some(&mut sink)).unwrap();
    let log = &out.log;
    let depth_id = log.channel_id("depth").unwrap();
    let start = dynscene::logstore::start_stamp(log, "start").unwrap();
    let logged: Vec<_> = log.records_on(depth_id).filter(|r| r.stamp_ns >= start).collect();
    let bundles: Vec<&FrameBundle> = sink.bundles.iter().filter(|b| b.camera == "low").collect();
    assert_eq!(logged.len(), bundles.len());
    for (r, b) in logged.iter().zip(&bundles) {
        assert_eq!(r.stamp_ns, b.stamp_ns);
        let img = decode_depth(&r.payload).unwrap();
        assert_eq!(img.data, b.depth);
        let back = FrameBundle::from_bytes(&b.camera, &b.to_bytes()).unwrap();
        assert_eq!(&back, *b);
    }
    let rgb = log.channel_id("rgb").unwrap();
    let g = decode_gray(&log.records_on(rgb).next().unwrap().payload).unwrap();
    assert_eq!((g.width, g.height), (cfg.low.width, cfg.low.height));
    let cam_pose = log.channel_id("cam_pose").unwrap();
    assert!(decode_pose(&log.records_on(cam_pose).next().unwrap().payload).is_ok());
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_sim(0.25);
    let a = run_experiment(&cfg, &empty_world(), &[drone()], &[RobotDriver::Controlled], None).unwrap();
    let b = run_experiment(&cfg, &empty_world(), &[drone()], &[RobotDriver::Controlled], None).unwrap();
    assert_eq!(a.log.to_bytes(), b.log.to_bytes());
}
