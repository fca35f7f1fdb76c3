//! Fixed-step simulation of a front-steered car tracking a trajectory.
//!
//! The plant is a 3-DOF dynamic bicycle model (lateral velocity, yaw rate,
//! planar pose) with Pacejka lateral tire forces. The longitudinal speed is
//! slaved to the reference speed profile. Steering goes through a
//! second-order actuator with rate limit and backlash. The controller runs
//! every [`CONTROL_PERIOD`] on a noisy pose measurement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{
    compose_steering, feedforward_road_wheel, ControlOutput, ControllerConfig, ControllerError, FeedbackLaw,
    LateralController, CONTROL_PERIOD,
};
use crate::path_track::Trajectory;

/// Physics integration step [s].
pub const PHYSICS_DT: f64 = 0.001;
pub const GRAVITY: f64 = 9.81;
/// A run fails when the true lateral deviation exceeds this [m].
pub const OFF_PATH_LIMIT: f64 = 5.0;
/// Runs that have not finished after this long fail [s].
pub const RUN_TIMEOUT: f64 = 600.0;
/// Below this speed the kinematic model is used [m/s].
pub const KINEMATIC_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite vehicle state at t = {t:.3} s")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Magic-formula coefficients of one axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacejkaAxle {
    pub b: f64,
    pub c: f64,
    /// Peak force [N].
    pub d: f64,
}

impl PacejkaAxle {
    /// Cornering stiffness of the linear range [N/rad].
    pub fn cornering_stiffness(&self) -> f64 {
        self.b * self.c * self.d
    }
}

/// Lateral force `D sin(C atan(B slip))` [N].
pub fn pacejka_lateral_force(slip_angle: f64, axle: &PacejkaAxle) -> f64 {
    axle.d * (axle.c * (axle.b * slip_angle).atan()).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorParams {
    /// Natural frequency [rad/s].
    pub omega_n: f64,
    pub zeta: f64,
    /// Road-wheel rate limit [rad/s].
    pub rate_limit: f64,
    /// Backlash half-width at the road wheel [rad].
    pub backlash: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// CG to front axle [m].
    pub lf: f64,
    /// CG to rear axle [m].
    pub lr: f64,
    pub front: PacejkaAxle,
    pub rear: PacejkaAxle,
    /// Steering-wheel angle over road-wheel angle.
    pub steering_ratio: f64,
    /// Maximum road-wheel angle [rad].
    pub delta_max: f64,
    pub actuator: ActuatorParams,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams { omega_n: 30.0, zeta: 0.8, rate_limit: 8.0 / 16.0, backlash: 0.005 / 16.0 }
    }
}

impl Default for VehicleParams {
    /// Compact hatchback. Peak tire forces are 0.9 of the static axle load.
    fn default() -> Self {
        let (mass, lf, lr) = (1200.0, 1.05, 1.41);
        let l = lf + lr;
        let front_load = mass * GRAVITY * lr / l;
        let rear_load = mass * GRAVITY * lf / l;
        VehicleParams {
            mass,
            yaw_inertia: 1500.0,
            lf,
            lr,
            front: PacejkaAxle { b: 10.0, c: 1.3, d: 0.9 * front_load },
            rear: PacejkaAxle { b: 10.0, c: 1.3, d: 0.9 * rear_load },
            steering_ratio: 16.0,
            delta_max: 0.55,
            actuator: ActuatorParams::default(),
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Understeer gradient of the linearized model [rad s²/m].
    pub fn understeer_gradient(&self) -> f64 {
        let (cf, cr) = (self.front.cornering_stiffness(), self.rear.cornering_stiffness());
        self.mass * (self.lr * cr - self.lf * cf) / (self.wheelbase() * cf * cr)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("steering_ratio", self.steering_ratio),
            ("delta_max", self.delta_max),
            ("actuator.omega_n", self.actuator.omega_n),
            ("actuator.rate_limit", self.actuator.rate_limit),
            ("front.b", self.front.b),
            ("front.c", self.front.c),
            ("front.d", self.front.d),
            ("rear.b", self.rear.b),
            ("rear.c", self.rear.c),
            ("rear.d", self.rear.d),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.actuator.zeta > 0.0 && self.actuator.zeta <= 2.0) {
            return Err(SimError::InvalidParams(format!("actuator.zeta must be in (0, 2], got {}", self.actuator.zeta)));
        }
        if !(self.actuator.backlash >= 0.0) {
            return Err(SimError::InvalidParams("actuator.backlash must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    /// Road-wheel angle [rad].
    pub delta: f64,
    /// Actuator rate [rad/s].
    pub delta_dot: f64,
}

impl VehicleState {
    fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.vx, self.vy, self.r, self.delta, self.delta_dot]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Localization noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    pub sigma_xy: f64,
    pub sigma_psi: f64,
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel { sigma_xy: 0.001, sigma_psi: 0.0005, seed: 0 }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        SensorModel { sigma_xy: 0.0, sigma_psi: 0.0, seed: 0 }
    }

    /// Noise on (x, y, psi) for controller tick `tick`. Each tick draws from
    /// its own ChaCha stream, so samples do not depend on call order.
    pub fn sample(&self, tick: u64) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tick);
        let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
        let (a, b, c) = (n(), n(), n());
        (self.sigma_xy * a, self.sigma_xy * b, self.sigma_psi * c)
    }
}

/// One semi-implicit step of the steering actuator toward `command`.
/// Returns the new `(delta, delta_dot)`.
pub fn actuator_step(delta: f64, delta_dot: f64, command: f64, params: &VehicleParams, dt: f64) -> (f64, f64) {
    let a = &params.actuator;
    let command = command.clamp(-params.delta_max, params.delta_max);
    let err = command - delta;
    let effective = if err > a.backlash {
        err - a.backlash
    } else if err < -a.backlash {
        err + a.backlash
    } else {
        0.0
    };
    // Damping treated implicitly.
    let rate = (delta_dot + dt * a.omega_n * a.omega_n * effective) / (1.0 + 2.0 * a.zeta * a.omega_n * dt);
    let mut rate = rate.clamp(-a.rate_limit, a.rate_limit);
    let mut next = delta + dt * rate;
    if next.abs() > params.delta_max {
        next = next.clamp(-params.delta_max, params.delta_max);
        rate = 0.0;
    }
    (next, rate)
}

/// Time derivative of `[x, y, psi, vy, r]` at speed `vx` and road-wheel angle `delta`.
fn body_derivatives(s: &[f64; 5], vx: f64, delta: f64, p: &VehicleParams) -> [f64; 5] {
    let [_, _, psi, vy, r] = *s;
    let (sin_psi, cos_psi) = psi.sin_cos();
    if vx < KINEMATIC_SPEED {
        let yaw_rate = vx * delta.tan() / p.wheelbase();
        return [vx * cos_psi, vx * sin_psi, yaw_rate, 0.0, 0.0];
    }
    let slip_f = delta - (vy + p.lf * r).atan2(vx);
    let slip_r = -(vy - p.lr * r).atan2(vx);
    let fy_f = pacejka_lateral_force(slip_f, &p.front);
    let fy_r = pacejka_lateral_force(slip_r, &p.rear);
    let fy_f_body = fy_f * delta.cos();
    [
        vx * cos_psi - vy * sin_psi,
        vx * sin_psi + vy * cos_psi,
        r,
        (fy_f_body + fy_r) / p.mass - vx * r,
        (p.lf * fy_f_body - p.lr * fy_r) / p.yaw_inertia,
    ]
}

fn rk4<const N: usize>(y: &[f64; N], dt: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + h * k[i]) };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, 0.5 * dt));
    let k3 = f(&add(y, &k2, 0.5 * dt));
    let k4 = f(&add(y, &k3, dt));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn settle_kinematic(state: &mut VehicleState, p: &VehicleParams) {
    if state.vx < KINEMATIC_SPEED {
        state.r = state.vx * state.delta.tan() / p.wheelbase();
        state.vy = p.lr * state.r;
    }
}

/// Advances the body by `dt` at constant `vx` and road-wheel angle.
pub fn vehicle_step(state: &VehicleState, params: &VehicleParams, dt: f64) -> VehicleState {
    let y0 = [state.x, state.y, state.psi, state.vy, state.r];
    let y1 = rk4(&y0, dt, |s| body_derivatives(s, state.vx, state.delta, params));
    let mut next = VehicleState { x: y1[0], y: y1[1], psi: y1[2], vy: y1[3], r: y1[4], ..*state };
    settle_kinematic(&mut next, params);
    next
}

/// Advances the body by `dt` with `vx` following `speed(progress)`; the
/// progress along the path is integrated alongside the body states.
fn vehicle_step_slaved(
    state: &VehicleState,
    progress: f64,
    params: &VehicleParams,
    dt: f64,
    speed: impl Fn(f64) -> f64,
) -> (VehicleState, f64) {
    let y0 = [state.x, state.y, state.psi, state.vy, state.r, progress];
    let y1 = rk4(&y0, dt, |s| {
        let vx = speed(s[5]);
        let d = body_derivatives(&[s[0], s[1], s[2], s[3], s[4]], vx, state.delta, params);
        [d[0], d[1], d[2], d[3], d[4], vx]
    });
    let mut next = VehicleState { x: y1[0], y: y1[1], psi: y1[2], vy: y1[3], r: y1[4], vx: speed(y1[5]), ..*state };
    settle_kinematic(&mut next, params);
    (next, y1[5])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunFailure {
    OffPath { t: f64, y1: f64 },
    Timeout { t: f64 },
    NonFinite { t: f64 },
    ControllerFault { t: f64, message: String },
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunFailure::OffPath { t, y1 } => write!(f, "left the path at t = {t:.2} s (y1 = {y1:.2} m)"),
            RunFailure::Timeout { t } => write!(f, "did not finish within {t:.0} s"),
            RunFailure::NonFinite { t } => write!(f, "non-finite vehicle state at t = {t:.2} s"),
            RunFailure::ControllerFault { t, message } => write!(f, "controller fault at t = {t:.2} s: {message}"),
        }
    }
}

/// Controller-rate record of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    pub x_meas: Vec<f64>,
    pub y_meas: Vec<f64>,
    pub psi_meas: Vec<f64>,
    /// True lateral deviation of the reference point [m].
    pub y1: Vec<f64>,
    /// Lateral deviation seen by the controller [m].
    pub y1_meas: Vec<f64>,
    pub u_fb: Vec<f64>,
    pub delta_ff: Vec<f64>,
    /// Road-wheel command sent to the actuator, after clamping [rad].
    pub delta_cmd: Vec<f64>,
    /// Actual road-wheel angle [rad].
    pub delta: Vec<f64>,
    pub v: Vec<f64>,
    /// Path curvature at the true matched point [1/m].
    pub kappa: Vec<f64>,
    /// `alpha` used by model-free laws (NaN otherwise).
    pub alpha: Vec<f64>,
    pub completed: bool,
    pub failure: Option<RunFailure>,
    pub seed: u64,
    pub dt: f64,
}

/// Column order of the SimLog CSV.
pub const SIMLOG_COLUMNS: [&str; 16] = [
    "t", "x", "y", "psi", "x_meas", "y_meas", "psi_meas", "y1", "y1_meas", "u_fb", "delta_ff", "delta_cmd",
    "delta", "v", "kappa", "alpha",
];

impl SimLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn columns(&self) -> [&Vec<f64>; 16] {
        [
            &self.t,
            &self.x,
            &self.y,
            &self.psi,
            &self.x_meas,
            &self.y_meas,
            &self.psi_meas,
            &self.y1,
            &self.y1_meas,
            &self.u_fb,
            &self.delta_ff,
            &self.delta_cmd,
            &self.delta,
            &self.v,
            &self.kappa,
            &self.alpha,
        ]
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 16] {
        [
            &mut self.t,
            &mut self.x,
            &mut self.y,
            &mut self.psi,
            &mut self.x_meas,
            &mut self.y_meas,
            &mut self.psi_meas,
            &mut self.y1,
            &mut self.y1_meas,
            &mut self.u_fb,
            &mut self.delta_ff,
            &mut self.delta_cmd,
            &mut self.delta,
            &mut self.v,
            &mut self.kappa,
            &mut self.alpha,
        ]
    }

    fn push_row(&mut self, row: [f64; 16]) {
        for (col, v) in self.columns_mut().into_iter().zip(row) {
            col.push(v);
        }
    }

    /// Writes the log as CSV: a `#` line with run status, the header, then one row per tick.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let failure = self.failure.as_ref().map(|f| serde_json::to_string(f).unwrap()).unwrap_or_default();
        writeln!(w, "# completed={} seed={} dt={:?} failure={}", self.completed, self.seed, self.dt, failure)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SIMLOG_COLUMNS)?;
        let cols = self.columns();
        for i in 0..self.len() {
            out.write_record(cols.iter().map(|c| format!("{:?}", c[i])))?;
        }
        out.flush()
    }

    /// Reads a log written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: std::io::BufRead>(mut r: R) -> Result<SimLog, String> {
        let mut status = String::new();
        r.read_line(&mut status).map_err(|e| e.to_string())?;
        let status = status.trim().strip_prefix('#').ok_or("missing `# completed=...` status line")?;
        let mut log = SimLog::default();
        let mut rest = status.trim();
        for key in ["completed=", "seed=", "dt=", "failure="] {
            let start = rest.strip_prefix(key).ok_or_else(|| format!("status line lacks `{key}`"))?;
            let (value, tail) = if key == "failure=" {
                (start, "")
            } else {
                start.split_once(' ').unwrap_or((start, ""))
            };
            match key {
                "completed=" => log.completed = value.parse().map_err(|_| format!("bad completed flag `{value}`"))?,
                "seed=" => log.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
                "dt=" => log.dt = value.parse().map_err(|_| format!("bad dt `{value}`"))?,
                _ => {
                    if !value.is_empty() {
                        log.failure = Some(serde_json::from_str(value).map_err(|e| e.to_string())?);
                    }
                }
            }
            rest = tail.trim_start();
        }
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().ne(SIMLOG_COLUMNS.iter().copied()) {
            return Err(format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(",")));
        }
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let mut row = [0.0; 16];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|_| format!("row {}: bad number `{field}`", line + 1))?;
            }
            log.push_row(row);
        }
        Ok(log)
    }
}

/// Knobs of a simulation run beyond the vehicle and sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub physics_dt: f64,
    pub control_period: f64,
    pub feedforward: bool,
    pub timeout: f64,
    pub off_path_limit: f64,
    pub reference: ReferencePoint,
}

/// Body point whose lateral deviation is measured and regulated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferencePoint {
    CenterOfGravity,
    #[default]
    FrontAxle,
    /// Distance ahead of the CG along the body axis [m].
    Ahead(f64),
}

impl ReferencePoint {
    pub fn offset(&self, params: &VehicleParams) -> f64 {
        match *self {
            ReferencePoint::CenterOfGravity => 0.0,
            ReferencePoint::FrontAxle => params.lf,
            ReferencePoint::Ahead(d) => d,
        }
    }
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            physics_dt: PHYSICS_DT,
            control_period: CONTROL_PERIOD,
            feedforward: true,
            timeout: RUN_TIMEOUT,
            off_path_limit: OFF_PATH_LIMIT,
            reference: ReferencePoint::default(),
        }
    }
}

/// Runs one lap (closed path) or to the end (open path).
///
/// Failures never surface as errors: they end the run and are recorded in
/// the log. Errors are reserved for invalid inputs.
pub fn simulate_run(
    trajectory: &Trajectory,
    law: &mut dyn FeedbackLaw,
    params: &VehicleParams,
    sensor: &SensorModel,
    options: &SimOptions,
) -> Result<SimLog, SimError> {
    params.validate()?;
    if !(options.physics_dt > 0.0 && options.control_period >= options.physics_dt) {
        return Err(SimError::InvalidParams("control period must be a multiple of the physics step".into()));
    }
    let decimation = (options.control_period / options.physics_dt).round() as u64;
    let path = &trajectory.path;
    let total = path.length();
    let wheelbase = params.wheelbase();
    let reference_offset = options.reference.offset(params);
    let speed = |s: f64| {
        let s = if path.is_closed() { s } else { s.min(total) };
        trajectory.speed_at(s).unwrap_or(0.0)
    };

    law.reset();
    let start = path.points()[0];
    let delta0 = if options.feedforward {
        feedforward_road_wheel(start.kappa, wheelbase).clamp(-params.delta_max, params.delta_max)
    } else {
        0.0
    };
    let mut state = VehicleState {
        x: start.x,
        y: start.y,
        psi: start.heading,
        vx: speed(0.0),
        delta: delta0,
        ..Default::default()
    };
    let mut progress = 0.0;
    let mut command = delta0;
    let mut hint_true = 0;
    let mut hint_meas = 0;
    let mut log = SimLog { seed: sensor.seed, dt: options.control_period, ..Default::default() };

    let mut step: u64 = 0;
    let mut tick: u64 = 0;
    loop {
        if step % decimation == 0 {
            let t = tick as f64 * options.control_period;
            if progress >= total {
                log.completed = true;
                break;
            }
            if t >= options.timeout {
                log.failure = Some(RunFailure::Timeout { t });
                break;
            }
            if !state.is_finite() {
                log.failure = Some(RunFailure::NonFinite { t });
                break;
            }
            let d = reference_offset;
            let (tx, ty) = (state.x + d * state.psi.cos(), state.y + d * state.psi.sin());
            let truth = match path.project(tx, ty, hint_true) {
                Ok(p) => p,
                Err(_) => {
                    log.failure = Some(RunFailure::OffPath { t, y1: f64::INFINITY });
                    break;
                }
            };
            hint_true = truth.index;
            let (nx, ny, npsi) = sensor.sample(tick);
            let (mx, my, mpsi) = (state.x + nx, state.y + ny, state.psi + npsi);
            let meas = match path.project(mx + d * mpsi.cos(), my + d * mpsi.sin(), hint_meas) {
                Ok(p) => p,
                Err(_) => {
                    log.failure = Some(RunFailure::OffPath { t, y1: truth.y1 });
                    break;
                }
            };
            hint_meas = meas.index;
            let feedback = match law.step(meas.y1, state.vx) {
                Ok(f) => f,
                Err(e) => {
                    log.failure = Some(RunFailure::ControllerFault { t, message: e.to_string() });
                    break;
                }
            };
            let delta_ff = if options.feedforward { feedforward_road_wheel(meas.kappa, wheelbase) } else { 0.0 };
            let out = ControlOutput::new(feedback, delta_ff, params.delta_max);
            command = compose_steering(out.delta_ff, out.u_fb, params.delta_max);
            log.push_row([
                t,
                state.x,
                state.y,
                state.psi,
                mx,
                my,
                mpsi,
                truth.y1,
                meas.y1,
                out.u_fb,
                out.delta_ff,
                command,
                state.delta,
                state.vx,
                truth.kappa,
                out.alpha_used,
            ]);
            if truth.y1.abs() > options.off_path_limit {
                log.failure = Some(RunFailure::OffPath { t, y1: truth.y1 });
                break;
            }
            tick += 1;
        }
        let (delta, delta_dot) = actuator_step(state.delta, state.delta_dot, command, params, options.physics_dt);
        state.delta = delta;
        state.delta_dot = delta_dot;
        let (next, next_progress) = vehicle_step_slaved(&state, progress, params, options.physics_dt, speed);
        state = next;
        progress = next_progress;
        step += 1;
    }
    Ok(log)
}

/// [`simulate_run`] with a freshly built controller.
pub fn simulate_controller(
    trajectory: &Trajectory,
    config: &ControllerConfig,
    params: &VehicleParams,
    sensor: &SensorModel,
    options: &SimOptions,
) -> Result<SimLog, SimError> {
    let mut controller = LateralController::new(*config, options.control_period)?;
    simulate_run(trajectory, &mut controller, params, sensor, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unlimited() -> VehicleParams {
        let mut p = VehicleParams::default();
        p.actuator = ActuatorParams { omega_n: 12.0, zeta: 1.0, rate_limit: 1e9, backlash: 0.0 };
        p.delta_max = 10.0;
        p
    }

    #[test]
    fn pacejka_shape() {
        let axle = PacejkaAxle { b: 10.0, c: 1.3, d: 5000.0 };
        assert_eq!(pacejka_lateral_force(0.0, &axle), 0.0);
        let small = pacejka_lateral_force(0.01, &axle);
        assert!((small - 650.0).abs() / 650.0 < 0.02, "{small}");
        let sat = 5000.0 * (1.3 * std::f64::consts::FRAC_PI_2).sin();
        assert!((pacejka_lateral_force(1e12, &axle) - sat).abs() < 1e-6);
        assert!((pacejka_lateral_force(-1e12, &axle) + sat).abs() < 1e-6);
        assert_eq!(pacejka_lateral_force(-0.2, &axle), -pacejka_lateral_force(0.2, &axle));
    }

    #[test]
    fn actuator_equilibrium() {
        let mut p = VehicleParams::default();
        p.actuator.backlash = 0.0;
        assert_eq!(actuator_step(0.2, 0.0, 0.2, &p, PHYSICS_DT), (0.2, 0.0));
    }

    #[test]
    fn actuator_critically_damped_step() {
        let p = unlimited();
        let (mut d, mut dd) = (0.0, 0.0);
        let mut t = 0.0;
        while d < 0.95 * 0.1 {
            (d, dd) = actuator_step(d, dd, 0.1, &p, PHYSICS_DT);
            t += PHYSICS_DT;
        }
        let expected = 4.744 / 12.0;
        assert!((t - expected).abs() / expected < 0.02, "t95 = {t}");
    }

    #[test]
    fn actuator_rate_limit() {
        let mut p = VehicleParams::default();
        p.actuator.rate_limit = 0.5;
        let (mut d, mut dd) = (0.0, 0.0);
        let mut prev = 0.0;
        for _ in 0..1000 {
            (d, dd) = actuator_step(d, dd, 0.5, &p, PHYSICS_DT);
            assert!((d - prev) / PHYSICS_DT <= 0.5 + 1e-9);
            prev = d;
        }
        assert!(d <= 0.5 + 1e-12);
    }

    #[test]
    fn actuator_backlash_deadband() {
        let mut p = VehicleParams::default();
        p.actuator.backlash = 0.01;
        let (d, dd) = actuator_step(0.0, 0.0, 0.009, &p, PHYSICS_DT);
        assert_eq!((d, dd), (0.0, 0.0));
    }

    #[test]
    fn straight_line_equilibrium() {
        let p = VehicleParams::default();
        let mut s = VehicleState { vx: 10.0, ..Default::default() };
        for _ in 0..2000 {
            s = vehicle_step(&s, &p, PHYSICS_DT);
        }
        assert_eq!((s.vy, s.r, s.y, s.psi), (0.0, 0.0, 0.0, 0.0));
        assert!((s.x - 20.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_yaw_rate_matches_bicycle_model() {
        let mut p = VehicleParams::default();
        // Make the car clearly understeering so the gradient matters.
        p.rear.d *= 1.3;
        let k_us = p.understeer_gradient();
        assert!(k_us > 0.0);
        for vx in [5.0, 10.0, 20.0] {
            let delta = 0.01;
            let mut s = VehicleState { vx, delta, ..Default::default() };
            for _ in 0..20_000 {
                s = vehicle_step(&s, &p, PHYSICS_DT);
            }
            let expected = vx * delta / (p.wheelbase() + k_us * vx * vx);
            assert!((s.r - expected).abs() / expected < 0.05, "vx {vx}: r {} vs {expected}", s.r);
        }
    }

    #[test]
    fn mirrored_steering_mirrors_motion() {
        let p = VehicleParams::default();
        let mut a = VehicleState { vx: 12.0, delta: 0.03, ..Default::default() };
        let mut b = VehicleState { vx: 12.0, delta: -0.03, ..Default::default() };
        for _ in 0..3000 {
            a = vehicle_step(&a, &p, PHYSICS_DT);
            b = vehicle_step(&b, &p, PHYSICS_DT);
        }
        assert_eq!(a.x, b.x);
        for (u, v) in [(a.y, b.y), (a.psi, b.psi), (a.vy, b.vy), (a.r, b.r)] {
            assert_eq!(u, -v);
        }
    }

    #[test]
    fn perturbations_decay_without_steering() {
        let p = VehicleParams::default();
        for vx in [3.0, 15.0, 30.0] {
            let mut s = VehicleState { vx, vy: 0.3, r: -0.1, ..Default::default() };
            for _ in 0..10_000 {
                s = vehicle_step(&s, &p, PHYSICS_DT);
            }
            assert!(s.vy.abs() < 1e-3 && s.r.abs() < 1e-3, "vx {vx}: vy {} r {}", s.vy, s.r);
        }
    }

    #[test]
    fn kinematic_fallback_at_standstill() {
        let p = VehicleParams::default();
        let s = VehicleState { vx: 0.05, delta: 0.1, ..Default::default() };
        let n = vehicle_step(&s, &p, PHYSICS_DT);
        assert!(n.is_finite());
        assert!((n.r - 0.05 * 0.1f64.tan() / p.wheelbase()).abs() < 1e-12);
    }

    #[test]
    fn sensor_noise_is_order_independent() {
        let s = SensorModel { seed: 42, ..Default::default() };
        let forward: Vec<_> = (0..10).map(|k| s.sample(k)).collect();
        let backward: Vec<_> = (0..10).rev().map(|k| s.sample(k)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
        assert_ne!(s.sample(0), s.sample(1));
        assert_eq!(SensorModel::noiseless().sample(5), (0.0, 0.0, 0.0));
    }

    #[test]
    fn default_params_are_valid() {
        let p = VehicleParams::default();
        p.validate().unwrap();
        assert_eq!(p.wheelbase(), 2.46);
        let mut bad = p;
        bad.actuator.zeta = 2.5;
        assert!(bad.validate().is_err());
    }
}
