use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dynscene::eval::{evaluate, read_tum, trajectory_from_log, write_tum, EvalOptions};
use dynscene::experiment::{
    build_scene, generate, replay, sha256_hex, Experiment, ExperimentConfig, Manifest, ReplayOverrides, LOG_FILE,
    MANIFEST_FILE,
};
use dynscene::geometry::occupancy::{write_metadata, write_pgm};
use dynscene::geometry::Pose;
use dynscene::logstore::{export_csv, periodic_channels, read_log, reindex, trim, Log, DEFAULT_CHUNK_BYTES, NS_PER_S};
use dynscene::noise::{apply_noise, NoiseConfig, RollingShutterParams};
use dynscene::placement::ScenarioCode;
use dynscene::robot::parse_waypoints;
use dynscene::sim::bundle::{DirSink, FrameSink};
use dynscene::sim::{ExtraCamera, Resolution, START_CHANNEL};

#[derive(Parser)]
#[command(name = "dynscene", version, about = "Dynamic indoor scene simulator and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scene, fly the robots and record a log with its manifest.
    Generate(GenerateArgs),
    /// Run asset placement only and print the result as JSON.
    Place(SceneArgs),
    /// Re-run an experiment from its manifest.
    Replay(ReplayArgs),
    /// Add `.noisy` channels to a log.
    Noise(NoiseArgs),
    /// Score an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Channel statistics, CSV/TUM export, trimming and occupancy maps.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct SceneArgs {
    /// N, HN, F, HF, L or HL
    #[arg(long)]
    scenario: Option<ScenarioCode>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Force horizontal flight (switches N/F/L to HN/HF/HL).
    #[arg(long)]
    horizontal: bool,
    #[arg(long)]
    humans: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Add noisy channels with depth limited to this range, m.
    #[arg(long)]
    depth_limit: Option<f64>,
    /// Recorded duration after the bootstrap, s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    res_low: Option<Resolution>,
    #[arg(long)]
    res_high: Option<Resolution>,
    #[arg(long)]
    robots: Option<usize>,
    /// Waypoint file (x y z roll pitch yaw; meters and degrees).
    #[arg(long)]
    waypoints: Option<PathBuf>,
    /// Write per-frame ground-truth bundles under <out>/frames.
    #[arg(long)]
    bundles: bool,
    /// Also render the high-resolution camera into the bundles.
    #[arg(long)]
    render_high: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare the replayed log with the recorded hash.
    #[arg(long)]
    verify: bool,
    /// Add a depth camera looking left, named `side`.
    #[arg(long)]
    side_camera: bool,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    depth_limit: Option<f64>,
    #[arg(long)]
    bundles: bool,
    #[arg(long)]
    render_high: bool,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML noise configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    depth_limit: Option<f64>,
    #[arg(long)]
    no_rolling_shutter: bool,
    #[arg(long)]
    motion_blur: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground truth, TUM format.
    #[arg(long)]
    gt: PathBuf,
    /// Estimate, TUM format.
    #[arg(long)]
    est: PathBuf,
    #[arg(long, default_value_t = dynscene::eval::DEFAULT_MAX_DT)]
    max_dt: f64,
    #[arg(long, default_value_t = dynscene::eval::DEFAULT_GAP_TOL)]
    gap_tol: f64,
    /// Also fit a scale factor.
    #[arg(long)]
    sim3: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    log: Option<PathBuf>,
    /// Export one channel as CSV.
    #[arg(long, requires = "log")]
    csv: Option<String>,
    /// Export a pose channel as a TUM trajectory.
    #[arg(long, requires = "log")]
    tum: Option<String>,
    /// Write the log trimmed to the recorded window.
    #[arg(long, requires = "log")]
    trim: bool,
    /// Rewrite periodic channel stamps from their indices.
    #[arg(long, requires = "log")]
    reindex: bool,
    /// Destination for exports and rewritten logs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rebuild the scene of a manifest and write its occupancy map.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pgm: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Place(a) => cmd_place(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &SceneArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.humans.is_some() {
        cfg.humans = args.humans;
    }
    if args.horizontal {
        cfg.scenario = match cfg.scenario {
            ScenarioCode::N => ScenarioCode::HN,
            ScenarioCode::F => ScenarioCode::HF,
            ScenarioCode::L => ScenarioCode::HL,
            h => h,
        };
    }
    Ok(cfg)
}

fn depth_noise(seed: u64, limit: f64) -> NoiseConfig {
    let mut n = NoiseConfig {
        seed,
        ..NoiseConfig::default()
    };
    n.depth.max_depth = limit;
    n
}

fn write_log(log: &Log, path: &Path) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    log.write_to(file, DEFAULT_CHUNK_BYTES)?;
    Ok(())
}

fn load_log(path: &Path) -> Result<Log> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_log(&bytes)?)
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&a.scene)?;
    if let Some(d) = a.duration {
        cfg.sim = cfg.sim.with_duration_s(d)?;
    }
    if let Some(r) = a.res_low {
        cfg.sim.low = r;
    }
    if let Some(r) = a.res_high {
        cfg.sim.high = r;
    }
    if let Some(n) = a.robots {
        cfg.robots = n;
    }
    if let Some(limit) = a.depth_limit {
        cfg.noise = Some(depth_noise(cfg.seed, limit));
    }
    if let Some(p) = &a.waypoints {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.waypoints = parse_waypoints(&text)?;
    }
    cfg.sim.render_high |= a.render_high;

    let mut sink = if a.bundles { Some(DirSink::new(a.out.join("frames"))?) } else { None };
    let exp: Experiment = generate(&cfg, sink.as_mut().map(|s| s as &mut dyn FrameSink))?;
    if let Some(mut s) = sink {
        s.flush()?;
    }
    exp.write(&a.out)?;
    let m = &exp.manifest;
    println!("scenario {} seed {}", m.scenario.code, m.seed);
    println!(
        "humans {} placed, {} dropped; flyers {}",
        m.placement.placed.len(),
        m.placement.dropped.len(),
        m.scenario.flyer_count()
    );
    println!("records {}", exp.log.records().len());
    println!("wrote {} and {}", a.out.join(LOG_FILE).display(), a.out.join(MANIFEST_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_place(a: SceneArgs) -> Result<ExitCode> {
    let cfg = load_config(&a)?;
    let scene = build_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let out = serde_json::json!({
        "scenario": scene.scenario,
        "placement": scene.placement,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Manifest::from_json(&text)?)
}

fn cmd_replay(a: ReplayArgs) -> Result<ExitCode> {
    let manifest = read_manifest(&a.manifest)?;
    let mut overrides = ReplayOverrides::default();
    if a.side_camera {
        let sim = &manifest.config.sim;
        overrides.extra_cameras.push(ExtraCamera {
            name: "side".into(),
            resolution: sim.low,
            hfov: sim.hfov,
            vfov: sim.vfov,
            mount: Pose::from_xyz_yaw(0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2),
            rate: sim.rates.depth,
        });
    }
    if a.noise_seed.is_some() || a.depth_limit.is_some() {
        let mut n = manifest.config.noise.clone().unwrap_or_default();
        if let Some(s) = a.noise_seed {
            n.seed = s;
        }
        if let Some(d) = a.depth_limit {
            n.depth.max_depth = d;
        }
        overrides.noise = Some(n);
    }
    if a.render_high {
        overrides.render_high = Some(true);
    }
    let mut sink = match (&a.out, a.bundles) {
        (Some(out), true) => Some(DirSink::new(out.join("frames"))?),
        (None, true) => bail!("--bundles needs --out"),
        _ => None,
    };
    let (log, _) = replay(&manifest, &overrides, sink.as_mut().map(|s| s as &mut dyn FrameSink))?;
    if let Some(mut s) = sink {
        s.flush()?;
    }
    let bytes = log.to_bytes();
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join(LOG_FILE), &bytes)?;
    }
    println!("records {}", log.records().len());
    if a.verify {
        if overrides != ReplayOverrides::default() {
            bail!("--verify compares against the recorded log and cannot be combined with overrides");
        }
        if sha256_hex(&bytes) == manifest.log_sha256 {
            println!("byte-identical: sha256 {}", manifest.log_sha256);
        } else {
            println!("MISMATCH: replayed log differs from the recorded one");
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_noise(a: NoiseArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<NoiseConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => NoiseConfig {
            seed: a.seed,
            ..NoiseConfig::default()
        },
    };
    if a.config.is_some() && a.seed != 0 {
        cfg.seed = a.seed;
    }
    if let Some(d) = a.depth_limit {
        cfg.depth.max_depth = d;
    }
    if a.no_rolling_shutter {
        cfg.rolling_shutter = None;
    } else if cfg.rolling_shutter.is_none() && a.config.is_none() {
        cfg.rolling_shutter = Some(RollingShutterParams::default());
    }
    cfg.motion_blur |= a.motion_blur;
    let log = load_log(&a.log)?;
    let noisy = apply_noise(&log, &cfg)?;
    write_log(&noisy, &a.out)?;
    let added = noisy.channels().len() - log.channels().len();
    println!("added {added} noisy channels; wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let read = |p: &Path| -> Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        read_tum(&text).with_context(|| format!("parsing {}", p.display()))
    };
    let gt = read(&a.gt)?;
    let est = read(&a.est)?;
    let opts = EvalOptions {
        max_dt: a.max_dt,
        gap_tol: a.gap_tol,
        with_scale: a.sim3,
    };
    let r = evaluate(&gt, &est, &opts)?;
    println!("matched pairs: {}", r.matched);
    if r.alignment.degenerate {
        println!("alignment: degenerate (translation only)");
    }
    println!("ATE RMSE: {:.3} m", r.ate_rmse);
    println!("missing time: {:.1} s of {:.1} s", r.missing_time, r.span);
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(a: InspectArgs) -> Result<ExitCode> {
    if let Some(path) = &a.log {
        let log = load_log(path)?;
        if let Some(name) = &a.csv {
            let id = log.channel_id(name)?;
            match &a.out {
                Some(out) => export_csv(&log, id, BufWriter::new(fs::File::create(out)?))?,
                None => export_csv(&log, id, std::io::stdout().lock())?,
            }
        } else if let Some(name) = &a.tum {
            let text = write_tum(&trajectory_from_log(&log, name)?);
            match &a.out {
                Some(out) => fs::write(out, text)?,
                None => print!("{text}"),
            }
        } else if a.trim || a.reindex {
            let out = a.out.as_ref().context("--trim/--reindex need --out")?;
            let mut result = log.clone();
            if a.trim {
                let duration = last_stamp(&log).saturating_sub(dynscene::logstore::start_stamp(&log, START_CHANNEL)?);
                result = trim(&result, START_CHANNEL, duration)?;
            }
            if a.reindex {
                let ids = periodic_channels(&result);
                result = reindex(&result, &ids, None)?;
            }
            write_log(&result, out)?;
            println!("wrote {} ({} records)", out.display(), result.records().len());
        } else {
            print_stats(&log)?;
        }
    }
    if let Some(path) = &a.manifest {
        let m = read_manifest(path)?;
        let scene = build_scene(&m.config, &mut ChaCha8Rng::seed_from_u64(m.config.seed))?;
        println!(
            "occupancy {}x{} cells at {} m",
            scene.grid.width(),
            scene.grid.height(),
            scene.grid.resolution()
        );
        if let Some(pgm) = &a.pgm {
            write_pgm(&scene.grid, BufWriter::new(fs::File::create(pgm)?))?;
            let yaml = pgm.with_extension("yaml");
            let name = pgm.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            write_metadata(&scene.grid, &name, BufWriter::new(fs::File::create(&yaml)?))?;
            println!("wrote {} and {}", pgm.display(), yaml.display());
        }
    }
    if a.log.is_none() && a.manifest.is_none() {
        bail!("nothing to inspect: pass --log or --manifest");
    }
    Ok(ExitCode::SUCCESS)
}

fn last_stamp(log: &Log) -> u64 {
    log.records().iter().map(|r| r.stamp_ns).max().unwrap_or(0)
}

fn print_stats(log: &Log) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<24} {:<12} {:>6} {:>8} {:>14} {:>14}", "channel", "type", "rate", "count", "first_s", "last_s")?;
    for ch in log.channels() {
        let stamps: Vec<u64> = log.records_on(ch.id).map(|r| r.stamp_ns).collect();
        let s = |v: Option<&u64>| v.map_or("-".to_string(), |t| format!("{:.6}", *t as f64 / NS_PER_S as f64));
        writeln!(
            out,
            "{:<24} {:<12} {:>6} {:>8} {:>14} {:>14}",
            ch.name,
            ch.payload_type,
            ch.rate_hz.map_or("-".to_string(), |r| r.to_string()),
            stamps.len(),
            s(stamps.first()),
            s(stamps.last())
        )?;
    }
    Ok(())
}
