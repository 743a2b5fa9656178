//! Six-joint kinematic robot: x, y, z, roll, pitch, yaw.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Bvh, OccupancyGrid2D, Pose, TriMesh};

pub const ROLL: usize = 3;
pub const PITCH: usize = 4;
pub const YAW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no free cell to start from")]
    NoFreeCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// Lower position bounds; the yaw entry is ignored (yaw wraps on [0, 2π)).
    pub pos_min: Vector6<f64>,
    pub pos_max: Vector6<f64>,
    /// Speed caps per joint (m/s, rad/s).
    pub vmax: Vector6<f64>,
    pub horizontal: bool,
}

impl JointLimits {
    pub const VMAX_XYZ: f64 = 0.5;
    pub const VMAX_ROLL_PITCH_DEG: f64 = 40.0;
    pub const VMAX_YAW_DEG: f64 = 30.0;
    pub const ROLL_PITCH_RANGE_DEG: f64 = 25.0;

    pub fn new(bounds: &Aabb, horizontal: bool) -> Self {
        let rp = if horizontal { 0.0 } else { Self::ROLL_PITCH_RANGE_DEG.to_radians() };
        let vrp = if horizontal { 0.0 } else { Self::VMAX_ROLL_PITCH_DEG.to_radians() };
        Self {
            pos_min: Vector6::new(bounds.min.x, bounds.min.y, bounds.min.z, -rp, -rp, 0.0),
            pos_max: Vector6::new(bounds.max.x, bounds.max.y, bounds.max.z, rp, rp, TAU),
            vmax: Vector6::new(
                Self::VMAX_XYZ,
                Self::VMAX_XYZ,
                Self::VMAX_XYZ,
                vrp,
                vrp,
                Self::VMAX_YAW_DEG.to_radians(),
            ),
            horizontal,
        }
    }

    /// Clamps positions into range and wraps yaw.
    pub fn clamp_position(&self, q: &Vector6<f64>) -> Vector6<f64> {
        let mut out = *q;
        for i in 0..YAW {
            out[i] = q[i].clamp(self.pos_min[i], self.pos_max[i]);
        }
        out[YAW] = wrap_yaw(q[YAW]);
        out
    }

    pub fn contains(&self, q: &Vector6<f64>) -> bool {
        (0..YAW).all(|i| q[i] >= self.pos_min[i] && q[i] <= self.pos_max[i]) && (0.0..TAU).contains(&q[YAW])
    }
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_yaw(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle difference to `(−π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: Vector6<f64>,
    pub qdot: Vector6<f64>,
}

impl RobotState {
    pub fn at(q: Vector6<f64>) -> Self {
        Self {
            q,
            qdot: Vector6::zeros(),
        }
    }

    pub fn pose(&self) -> Pose {
        q_to_pose(&self.q)
    }
}

pub fn q_to_pose(q: &Vector6<f64>) -> Pose {
    Pose::new(
        Point3::new(q[0], q[1], q[2]),
        UnitQuaternion::from_euler_angles(q[ROLL], q[PITCH], q[YAW]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Setpoint {
    Position(Vector6<f64>),
    Velocity(Vector6<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: Vector6<f64>,
    pub ki: Vector6<f64>,
    pub kd: Vector6<f64>,
    /// Symmetric bound on the integral state.
    pub integral_limit: Vector6<f64>,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: Vector6::repeat(1.5),
            ki: Vector6::zeros(),
            kd: Vector6::repeat(0.1),
            integral_limit: Vector6::repeat(1.0),
        }
    }
}

impl PidGains {
    pub fn uniform(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp: Vector6::repeat(kp),
            ki: Vector6::repeat(ki),
            kd: Vector6::repeat(kd),
            integral_limit: Vector6::repeat(1.0),
        }
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        for i in 0..6 {
            let (kp, ki, kd, lim) = (self.kp[i], self.ki[i], self.kd[i], self.integral_limit[i]);
            if !(kp >= 0.0 && ki >= 0.0 && kd >= 0.0) || !(kp + ki + kd).is_finite() {
                return Err(RobotError::InvalidInput(format!("gains on joint {i} must be finite and non-negative")));
            }
            if ki > 0.0 && !(lim > 0.0) {
                return Err(RobotError::InvalidInput(format!("joint {i} has ki > 0 but no integrator clamp")));
            }
        }
        Ok(())
    }
}

fn check_finite(v: &Vector6<f64>, what: &str) -> Result<(), RobotError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RobotError::InvalidInput(format!("non-finite {what}: {v:?}")))
    }
}

/// Per-joint PID with integral and previous-error memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointController {
    pub gains: PidGains,
    integral: Vector6<f64>,
    prev_error: Option<Vector6<f64>>,
}

impl JointController {
    pub fn new(gains: PidGains) -> Result<Self, RobotError> {
        gains.validate()?;
        Ok(Self {
            gains,
            integral: Vector6::zeros(),
            prev_error: None,
        })
    }

    pub fn reset(&mut self) {
        self.integral = Vector6::zeros();
        self.prev_error = None;
    }

    /// Joint velocity command, clamped to `±vmax` per joint.
    pub fn step(
        &mut self,
        state: &RobotState,
        setpoint: &Setpoint,
        limits: &JointLimits,
        dt: f64,
    ) -> Result<Vector6<f64>, RobotError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RobotError::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        check_finite(&state.q, "state")?;
        let raw = match setpoint {
            Setpoint::Velocity(v) => {
                check_finite(v, "velocity target")?;
                self.prev_error = None;
                *v
            }
            Setpoint::Position(target) => {
                check_finite(target, "position target")?;
                let mut e = target - state.q;
                e[YAW] = wrap_pi(target[YAW] - state.q[YAW]);
                let g = &self.gains;
                self.integral += e * dt;
                for i in 0..6 {
                    let lim = g.integral_limit[i];
                    self.integral[i] = self.integral[i].clamp(-lim, lim);
                }
                let de = match self.prev_error {
                    Some(p) => {
                        let mut d = e - p;
                        d[YAW] = wrap_pi(d[YAW]);
                        d / dt
                    }
                    None => Vector6::zeros(),
                };
                self.prev_error = Some(e);
                g.kp.component_mul(&e) + g.ki.component_mul(&self.integral) + g.kd.component_mul(&de)
            }
        };
        Ok(clamp_command(&raw, limits))
    }
}

fn clamp_command(raw: &Vector6<f64>, limits: &JointLimits) -> Vector6<f64> {
    let mut v = Vector6::zeros();
    for i in 0..6 {
        v[i] = raw[i].clamp(-limits.vmax[i], limits.vmax[i]);
    }
    if limits.horizontal {
        v[ROLL] = 0.0;
        v[PITCH] = 0.0;
    }
    v
}

/// One PID step from a fresh controller (no integral or derivative history).
pub fn controller_step(
    state: &RobotState,
    setpoint: &Setpoint,
    gains: &PidGains,
    limits: &JointLimits,
    dt: f64,
) -> Result<Vector6<f64>, RobotError> {
    JointController::new(gains.clone())?.step(state, setpoint, limits, dt)
}

/// Kinematic step: `q += v·dt` with position clamping and yaw wrap.
/// The reported velocity is the one actually applied.
pub fn integrate(state: &RobotState, cmd: &Vector6<f64>, limits: &JointLimits, dt: f64) -> RobotState {
    let v = clamp_command(cmd, limits);
    let mut q = state.q;
    let mut qdot = v;
    for i in 0..YAW {
        let moved = state.q[i] + v[i] * dt;
        let clamped = moved.clamp(limits.pos_min[i], limits.pos_max[i]);
        if clamped != moved {
            qdot[i] = ((clamped - state.q[i]) / dt).clamp(-limits.vmax[i], limits.vmax[i]);
        }
        q[i] = clamped;
    }
    q[YAW] = wrap_yaw(state.q[YAW] + v[YAW] * dt);
    RobotState { q, qdot }
}

/// Sequential goal follower with translational and angular tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointFollower {
    plan: Vec<Vector6<f64>>,
    pub tolerance: f64,
    pub angular_tolerance: f64,
    index: usize,
}

impl WaypointFollower {
    pub fn new(plan: Vec<Vector6<f64>>, tolerance: f64, angular_tolerance: f64) -> Result<Self, RobotError> {
        if plan.is_empty() {
            return Err(RobotError::InvalidInput("waypoint plan is empty".into()));
        }
        for g in &plan {
            check_finite(g, "waypoint")?;
        }
        Ok(Self {
            plan,
            tolerance,
            angular_tolerance,
            index: 0,
        })
    }

    pub fn plan(&self) -> &[Vector6<f64>] {
        &self.plan
    }

    /// Index of the goal currently pursued.
    pub fn current(&self) -> usize {
        self.index
    }

    pub fn finished(&self, state: &RobotState, limits: &JointLimits) -> bool {
        self.index == self.plan.len() - 1 && self.reached(self.index, state, limits)
    }

    fn reached(&self, i: usize, state: &RobotState, limits: &JointLimits) -> bool {
        // Goals outside the limits count as reached at their clamped value.
        let goal = limits.clamp_position(&self.plan[i]);
        let trans = (goal.fixed_rows::<3>(0) - state.q.fixed_rows::<3>(0)).norm();
        let ang = (ROLL..=YAW)
            .map(|j| wrap_pi(goal[j] - state.q[j]).abs())
            .fold(0.0, f64::max);
        trans < self.tolerance && ang < self.angular_tolerance
    }

    /// Position setpoint for the first goal not yet reached; holds the last one.
    pub fn follow(&mut self, state: &RobotState, limits: &JointLimits) -> Setpoint {
        while self.index + 1 < self.plan.len() && self.reached(self.index, state, limits) {
            self.index += 1;
        }
        Setpoint::Position(limits.clamp_position(&self.plan[self.index]))
    }
}

/// Parses a waypoint file: one goal per line as `x y z roll pitch yaw`
/// (meters and degrees), separated by whitespace or commas. `#` starts a comment.
pub fn parse_waypoints(text: &str) -> Result<Vec<Vector6<f64>>, RobotError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RobotError::InvalidInput(format!("line {}: {e}", n + 1)))?;
        if vals.len() != 6 {
            return Err(RobotError::InvalidInput(format!(
                "line {}: expected 6 values, found {}",
                n + 1,
                vals.len()
            )));
        }
        out.push(Vector6::new(
            vals[0],
            vals[1],
            vals[2],
            vals[3].to_radians(),
            vals[4].to_radians(),
            vals[5].to_radians(),
        ));
    }
    Ok(out)
}

pub fn format_waypoints(plan: &[Vector6<f64>]) -> String {
    let mut s = String::from("# x y z [m] roll pitch yaw [deg]\n");
    for g in plan {
        s.push_str(&format!(
            "{} {} {} {} {} {}\n",
            g[0],
            g[1],
            g[2],
            g[ROLL].to_degrees(),
            g[PITCH].to_degrees(),
            g[YAW].to_degrees()
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitPoseParams {
    /// m
    pub hover_height: f64,
    /// rad
    pub hfov: f64,
    /// rad
    pub vfov: f64,
    /// m
    pub max_range: f64,
    pub yaw_candidates: usize,
    pub rays: (usize, usize),
}

impl Default for InitPoseParams {
    fn default() -> Self {
        Self {
            hover_height: 1.5,
            hfov: 90f64.to_radians(),
            vfov: 2.0 * ((90f64.to_radians() / 2.0).tan() * 0.75).atan(),
            max_range: 20.0,
            yaw_candidates: 36,
            rays: (9, 7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitPose {
    pub q: Vector6<f64>,
    /// Hit fraction for each candidate yaw `k·2π/yaw_candidates`.
    pub scores: Vec<f64>,
}

impl InitPose {
    pub fn pose(&self) -> Pose {
        q_to_pose(&self.q)
    }
}

/// Fraction of a pinhole ray grid (body frame x forward, z up) hitting geometry within range.
pub fn hit_fraction(bvh: &Bvh, mesh: &TriMesh, position: &Point3<f64>, yaw: f64, p: &InitPoseParams) -> f64 {
    let (nu, nv) = p.rays;
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let (th, tv) = ((p.hfov / 2.0).tan(), (p.vfov / 2.0).tan());
    let mut hits = 0usize;
    for i in 0..nu {
        for j in 0..nv {
            let u = (2.0 * (i as f64 + 0.5) / nu as f64 - 1.0) * th;
            let v = (2.0 * (j as f64 + 0.5) / nv as f64 - 1.0) * tv;
            let d = rot * Vector3::new(1.0, -u, -v);
            if bvh.raycast_within(mesh, position, &d, p.max_range).is_some() {
                hits += 1;
            }
        }
    }
    hits as f64 / (nu * nv) as f64
}

/// Random free-cell start at hover height, with yaw chosen to maximize the
/// fraction of view rays that hit geometry (lowest yaw wins ties).
pub fn init_pose<R: Rng + ?Sized>(
    grid: &OccupancyGrid2D,
    bvh: &Bvh,
    mesh: &TriMesh,
    rng: &mut R,
    params: &InitPoseParams,
) -> Result<InitPose, RobotError> {
    if params.yaw_candidates == 0 || params.rays.0 == 0 || params.rays.1 == 0 {
        return Err(RobotError::InvalidInput("need at least one yaw candidate and one ray".into()));
    }
    let free = grid.free_cells();
    if free.is_empty() {
        return Err(RobotError::NoFreeCell);
    }
    let (i, j) = free[rng.random_range(0..free.len())];
    let c = grid.cell_center(i, j);
    let position = Point3::new(c.x, c.y, params.hover_height);
    let scores: Vec<f64> = (0..params.yaw_candidates)
        .map(|k| hit_fraction(bvh, mesh, &position, TAU * k as f64 / params.yaw_candidates as f64, params))
        .collect();
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = k;
        }
    }
    let yaw = TAU * best as f64 / params.yaw_candidates as f64;
    Ok(InitPose {
        q: Vector6::new(position.x, position.y, position.z, 0.0, 0.0, yaw),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(horizontal: bool) -> JointLimits {
        JointLimits::new(&Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 10.0, 3.0)), horizontal)
    }

    #[test]
    fn at_setpoint_commands_zero() {
        let s = RobotState::at(Vector6::new(1.0, 2.0, 1.0, 0.1, -0.1, 3.0));
        let v = controller_step(&s, &Setpoint::Position(s.q), &PidGains::default(), &limits(false), 1.0 / 240.0).unwrap();
        assert_eq!(v, Vector6::zeros());
    }

    #[test]
    fn large_error_saturates() {
        let s = RobotState::at(Vector6::new(0.0, 5.0, 1.0, 0.0, 0.0, 0.0));
        let mut t = s.q;
        t[0] = 10.0;
        let v = controller_step(&s, &Setpoint::Position(t), &PidGains::uniform(1.0, 0.0, 0.0), &limits(false), 0.01)
            .unwrap();
        assert_eq!(v[0], 0.5);
    }

    #[test]
    fn horizontal_forces_roll_pitch_zero() {
        let s = RobotState::at(Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        let t = Vector6::new(1.0, 1.0, 1.0, 0.4, -0.4, 0.0);
        for sp in [Setpoint::Position(t), Setpoint::Velocity(t)] {
            let v = controller_step(&s, &sp, &PidGains::default(), &limits(true), 0.01).unwrap();
            assert_eq!((v[ROLL], v[PITCH]), (0.0, 0.0));
        }
    }

    #[test]
    fn nan_rejected() {
        let s = RobotState::at(Vector6::repeat(f64::NAN));
        assert!(controller_step(&s, &Setpoint::Velocity(Vector6::zeros()), &PidGains::default(), &limits(false), 0.01)
            .is_err());
        let s = RobotState::at(Vector6::zeros());
        assert!(controller_step(&s, &Setpoint::Position(Vector6::zeros()), &PidGains::default(), &limits(false), 0.0)
            .is_err());
    }

    #[test]
    fn yaw_wraps_forward() {
        let s = RobotState::at(Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 359f64.to_radians()));
        let mut cmd = Vector6::zeros();
        cmd[YAW] = 30f64.to_radians();
        let n = integrate(&s, &cmd, &limits(false), 0.1);
        assert!((n.q[YAW] - 2f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn zero_command_keeps_state() {
        let s = RobotState::at(Vector6::new(1.0, 1.0, 1.0, 0.1, 0.0, 1.0));
        let n = integrate(&s, &Vector6::zeros(), &limits(false), 0.1);
        assert_eq!(n.q, s.q);
        assert_eq!(n.qdot, Vector6::zeros());
    }

    #[test]
    fn clamp_at_bound_reports_zero_velocity() {
        let s = RobotState::at(Vector6::new(10.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        let mut cmd = Vector6::zeros();
        cmd[0] = 0.5;
        let n = integrate(&s, &cmd, &limits(false), 0.1);
        assert_eq!(n.q[0], 10.0);
        assert_eq!(n.qdot[0], 0.0);
    }

    #[test]
    fn follower_advances_and_holds() {
        let lim = limits(false);
        let plan = vec![
            Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
            Vector6::new(2.0, 1.0, 1.0, 0.0, 0.0, 0.0),
        ];
        let mut f = WaypointFollower::new(plan.clone(), 0.05, 0.05).unwrap();
        let s = RobotState::at(plan[0]);
        assert_eq!(f.follow(&s, &lim), Setpoint::Position(plan[1]));
        let s = RobotState::at(plan[1]);
        assert_eq!(f.follow(&s, &lim), Setpoint::Position(plan[1]));
        assert!(f.finished(&s, &lim));
        assert!(WaypointFollower::new(vec![], 0.1, 0.1).is_err());
    }

    #[test]
    fn waypoint_file_round_trip() {
        let plan = vec![Vector6::new(1.0, 2.0, 1.5, 0.0, 10f64.to_radians(), 90f64.to_radians())];
        let back = parse_waypoints(&format_waypoints(&plan)).unwrap();
        assert!((back[0] - plan[0]).norm() < 1e-12);
        assert!(parse_waypoints("1 2 3").is_err());
        assert!(parse_waypoints("1, 2, 3, 0, 0, x").is_err());
    }
}
