//! Trajectory evaluation: TUM text I/O, timestamp association, rigid
//! alignment, ATE RMSE and missing time.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::logstore::{Log, LogError, NS_PER_S};
use crate::sim::payload;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("timestamps must be strictly increasing (at {0} s)")]
    NotIncreasing(f64),
    #[error("need at least {need} matched pairs, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Payload(String),
}

pub const DEFAULT_MAX_DT: f64 = 0.02;
pub const DEFAULT_GAP_TOL: f64 = 2.0 / 30.0;

/// Stamped poses, strictly increasing in time (seconds).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(points: Vec<(f64, Pose)>) -> Result<Self, EvalError> {
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(EvalError::NotIncreasing(w[1].0));
            }
        }
        let (stamps, poses) = points.into_iter().unzip();
        Ok(Self { stamps, poses })
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    /// Applies `x ↦ T·x` to every pose.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
        }
    }
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment.
pub fn read_tum(text: &str) -> Result<Trajectory, EvalError> {
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: n + 1, message };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[7], v[4], v[5], v[6]));
        points.push((v[0], Pose::new(Point3::new(v[1], v[2], v[3]), q)));
    }
    Trajectory::new(points)
}

pub fn write_tum(traj: &Trajectory) -> String {
    let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in traj.stamps.iter().zip(&traj.poses) {
        let q = p.quaternion_xyzw();
        writeln!(
            s,
            "{t:.9} {} {} {} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]
        )
        .unwrap();
    }
    s
}

/// Ground-truth trajectory from a `pose` (or `tf`, body part) channel of a log.
pub fn trajectory_from_log(log: &Log, channel: &str) -> Result<Trajectory, EvalError> {
    let id = log.channel_id(channel)?;
    let ty = log.channel(id).map(|c| c.payload_type.clone()).unwrap_or_default();
    let mut points = Vec::new();
    for r in log.records_on(id) {
        let pose = match ty.as_str() {
            payload::T_POSE => payload::decode_pose(&r.payload),
            payload::T_TF | payload::T_ODOM => {
                let n = if ty == payload::T_TF { 14 } else { 13 };
                let kind = if ty == payload::T_TF { payload::T_TF } else { payload::T_ODOM };
                payload::read_f64s(kind, &r.payload, n).and_then(|v| payload::pose_from_values(kind, &v[..7]))
            }
            other => return Err(EvalError::Payload(format!("channel {channel} carries {other}, not poses"))),
        }
        .map_err(|e| EvalError::Payload(e.to_string()))?;
        points.push((r.stamp_ns as f64 / NS_PER_S as f64, pose));
    }
    Trajectory::new(points)
}

/// Greedy nearest-timestamp matching: candidate pairs with `|Δt| ≤ max_dt`
/// are taken in order of increasing `|Δt|`, each pose used at most once.
/// Returns `(gt index, est index)` sorted by ground-truth index.
pub fn associate(gt: &Trajectory, est: &Trajectory, max_dt: f64) -> Vec<(usize, usize)> {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (e, &te) in est.stamps.iter().enumerate() {
        let lo = gt.stamps.partition_point(|&t| t < te - max_dt);
        for g in lo..gt.len() {
            let dt = (gt.stamps[g] - te).abs();
            if gt.stamps[g] > te + max_dt {
                break;
            }
            if dt <= max_dt {
                cands.push((dt, g, e));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_g = vec![false; gt.len()];
    let mut used_e = vec![false; est.len()];
    let mut out = Vec::new();
    for (_, g, e) in cands {
        if !used_g[g] && !used_e[e] {
            used_g[g] = true;
            used_e[e] = true;
            out.push((g, e));
        }
    }
    out.sort_unstable();
    out
}

/// Transform mapping estimate positions onto ground truth: `s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
    /// The estimate points were collinear; only a translation was fitted.
    pub degenerate: bool,
}

impl Alignment {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
            degenerate: false,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }
}

fn centroid(pts: &[Point3<f64>]) -> Vector3<f64> {
    pts.iter().map(|p| p.coords).sum::<Vector3<f64>>() / pts.len() as f64
}

/// Least-squares alignment of `est` onto `gt` (paired by index). Scale is
/// fixed to 1 unless `with_scale` is set.
pub fn align_umeyama(gt: &[Point3<f64>], est: &[Point3<f64>], with_scale: bool) -> Result<Alignment, EvalError> {
    let n = gt.len().min(est.len());
    if n < 3 || gt.len() != est.len() {
        return Err(EvalError::TooFewPairs { need: 3, got: n });
    }
    let (mg, me) = (centroid(gt), centroid(est));
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_e = 0.0;
    for (g, e) in gt.iter().zip(est) {
        let (dg, de) = (g.coords - mg, e.coords - me);
        cov += dg * de.transpose();
        scatter += de * de.transpose();
        var_e += de.norm_squared();
    }
    cov /= n as f64;
    var_e /= n as f64;

    let eig = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Ok(Alignment {
            rotation: Rotation3::identity(),
            translation: mg - me,
            scale: 1.0,
            degenerate: true,
        });
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_e
    } else {
        1.0
    };
    let rotation = Rotation3::from_matrix_unchecked(r);
    Ok(Alignment {
        rotation,
        translation: mg - scale * (rotation * me),
        scale,
        degenerate: false,
    })
}

/// `√(mean ‖s·R·p_est + t − p_gt‖²)`.
pub fn ate_rmse(gt: &[Point3<f64>], est: &[Point3<f64>], align: &Alignment) -> Result<f64, EvalError> {
    if gt.is_empty() || gt.len() != est.len() {
        return Err(EvalError::TooFewPairs { need: 1, got: gt.len().min(est.len()) });
    }
    let sum: f64 = gt.iter().zip(est).map(|(g, e)| (align.apply(e) - g).norm_squared()).sum();
    Ok((sum / gt.len() as f64).sqrt())
}

/// Span length minus the measure of the union of `[s − gap_tol/2, s + gap_tol/2]`
/// over estimate stamps `s` inside `[t0, t0 + span]`, clipped to the span.
pub fn missing_time(est_stamps: &[f64], t0: f64, span: f64, gap_tol: f64) -> f64 {
    let t1 = t0 + span;
    let half = gap_tol / 2.0;
    let mut stamps: Vec<f64> = est_stamps.iter().copied().filter(|s| *s >= t0 && *s <= t1).collect();
    stamps.sort_by(f64::total_cmp);
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for s in stamps {
        let (a, b) = ((s - half).max(t0), (s + half).min(t1));
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                covered += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        covered += b - a;
    }
    (span - covered).clamp(0.0, span)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub max_dt: f64,
    pub gap_tol: f64,
    pub with_scale: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_dt: DEFAULT_MAX_DT,
            gap_tol: DEFAULT_GAP_TOL,
            with_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matched: usize,
    pub alignment: Alignment,
    pub ate_rmse: f64,
    /// Over the ground-truth time span.
    pub missing_time: f64,
    pub span: f64,
}

/// Associates, aligns and scores `est` against `gt`.
pub fn evaluate(gt: &Trajectory, est: &Trajectory, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::TooFewPairs { need: 1, got: 0 });
    }
    let pairs = associate(gt, est, opts.max_dt);
    let g: Vec<Point3<f64>> = pairs.iter().map(|&(i, _)| gt.poses[i].position).collect();
    let e: Vec<Point3<f64>> = pairs.iter().map(|&(_, j)| est.poses[j].position).collect();
    let alignment = if pairs.len() >= 3 {
        align_umeyama(&g, &e, opts.with_scale)?
    } else {
        Alignment::identity()
    };
    let ate = ate_rmse(&g, &e, &alignment)?;
    let t0 = gt.stamps[0];
    let span = gt.stamps[gt.len() - 1] - t0;
    Ok(EvalReport {
        matched: pairs.len(),
        alignment,
        ate_rmse: ate,
        missing_time: missing_time(&est.stamps, t0, span, opts.gap_tol),
        span,
    })
}
