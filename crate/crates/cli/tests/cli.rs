use std::path::Path;
use std::process::{Command, Output};

use dynscene::logstore::read_log;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynscene")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, scenario: &str, extra: &[&str]) -> String {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "generate", "--scenario", scenario, "--seed", "4", "--duration", "0.5", "--res-low", "16x12", "--out", out,
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn generate_then_verify_replay() {
    let dir = tempfile::tempdir().unwrap();
    let text = generate(dir.path(), "L", &[]);
    assert!(text.contains("scenario L seed 4"), "{text}");
    let manifest = dir.path().join("manifest.json");
    let text = ok(&["replay", "--manifest", manifest.to_str().unwrap(), "--verify"]);
    assert!(text.contains("byte-identical"), "{text}");
}

#[test]
fn verify_refuses_overrides() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "N", &[]);
    let manifest = dir.path().join("manifest.json");
    let out = run(&["replay", "--manifest", manifest.to_str().unwrap(), "--verify", "--side-camera"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn side_camera_replay_writes_extra_channel() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "F", &[]);
    let manifest = dir.path().join("manifest.json");
    let replayed = dir.path().join("replayed");
    ok(&["replay", "--manifest", manifest.to_str().unwrap(), "--side-camera", "--out", replayed.to_str().unwrap()]);
    let log = read_log(&std::fs::read(replayed.join("log.dslog")).unwrap()).unwrap();
    assert!(log.count_by_name("side/depth") > 0);
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "N", &[]);
    let log = dir.path().join("log.dslog");
    let tum = dir.path().join("gt.tum");
    ok(&["inspect", "--log", log.to_str().unwrap(), "--tum", "cam_pose", "--out", tum.to_str().unwrap()]);
    let text = ok(&["eval", "--gt", tum.to_str().unwrap(), "--est", tum.to_str().unwrap()]);
    assert!(text.contains("ATE RMSE: 0.000 m"), "{text}");
    assert!(text.contains("missing time: 0.0 s"), "{text}");
}

#[test]
fn trim_and_reindex_rewrite_the_log() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "N", &[]);
    let log = dir.path().join("log.dslog");
    let out = dir.path().join("trimmed.dslog");
    ok(&["inspect", "--log", log.to_str().unwrap(), "--trim", "--reindex", "--out", out.to_str().unwrap()]);
    let trimmed = read_log(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(trimmed.count_by_name("imu"), 120);
    assert_eq!(trimmed.count_by_name("depth"), 15);
    let stats = ok(&["inspect", "--log", out.to_str().unwrap()]);
    assert!(stats.contains("imu"), "{stats}");
    let missing = run(&["inspect", "--log", log.to_str().unwrap(), "--trim"]);
    assert!(!missing.status.success());
}

#[test]
fn noise_command_adds_noisy_channels() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "N", &[]);
    let log = dir.path().join("log.dslog");
    let out = dir.path().join("noisy.dslog");
    ok(&["noise", "--log", log.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3", "--depth-limit", "3.5"]);
    let noisy = read_log(&std::fs::read(&out).unwrap()).unwrap();
    let clean = read_log(&std::fs::read(&log).unwrap()).unwrap();
    for name in ["imu", "depth", "rgb"] {
        assert_eq!(noisy.count_by_name(&format!("{name}.noisy")), clean.count_by_name(name));
    }
}

#[test]
fn occupancy_map_export() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "N", &[]);
    let manifest = dir.path().join("manifest.json");
    let pgm = dir.path().join("map.pgm");
    ok(&["inspect", "--manifest", manifest.to_str().unwrap(), "--pgm", pgm.to_str().unwrap()]);
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5"));
    let yaml = std::fs::read_to_string(dir.path().join("map.yaml")).unwrap();
    assert!(yaml.contains("map.pgm"), "{yaml}");
}

#[test]
fn waypoint_file_and_horizontal_flag() {
    let dir = tempfile::tempdir().unwrap();
    let wp = dir.path().join("plan.txt");
    std::fs::write(&wp, "2 2 1.5 0 0 90\n3 2 1.5 0 0 180\n").unwrap();
    let text = generate(dir.path(), "F", &["--horizontal", "--waypoints", wp.to_str().unwrap()]);
    assert!(text.contains("scenario HF"), "{text}");
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!run(&["generate", "--scenario", "X"]).status.success());
    assert!(!run(&["inspect"]).status.success());
    assert!(!run(&["eval", "--gt", "/nonexistent", "--est", "/nonexistent"]).status.success());
}
