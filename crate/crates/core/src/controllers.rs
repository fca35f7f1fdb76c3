//! Lateral feedback laws and the steering feedforward.
//!
//! All laws run at a fixed sample period `ts` (20 Hz by default) and act on
//! the lateral deviation `y1` of the vehicle from the path, whose reference
//! is zero. Each produces a normalized feedback action `u_fb` in `[-1, 1]`,
//! which is scaled by the maximum road-wheel angle and added to the
//! kinematic feedforward.
//!
//! The model-free laws (iPD) treat the lateral channel as the second-order
//! ultra-local model `y'' = F + alpha * u`: `F` lumps together everything
//! that is not modelled and is re-estimated every tick from the filtered
//! second derivative of `y1` and the previously applied action.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Speed, SpeedUnit};

/// Controller sample period [s].
pub const CONTROL_PERIOD: f64 = 0.05;
/// Default derivative filter time constant [s].
pub const DEFAULT_TC: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("controller fault: {0}")]
    Fault(String),
}

fn default_tc() -> f64 {
    DEFAULT_TC
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidParams {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    pub kd: f64,
    /// Derivative filter coefficient [1/s].
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfcParams {
    pub kp: f64,
    pub kd: f64,
    pub alpha: f64,
    #[serde(default = "default_tc")]
    pub tc: f64,
}

/// iPD whose `alpha` grows linearly with speed above `v0`.
///
/// `k_alpha` is expressed per unit of `v0`: with `v0 = "26.83 km/h"` it is a
/// gain per km/h, and the measured speed is converted to km/h before the
/// schedule is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamfcParams {
    pub kp: f64,
    pub kd: f64,
    pub alpha0: f64,
    pub k_alpha: f64,
    pub v0: Speed,
    #[serde(default = "default_tc")]
    pub tc: f64,
}

impl SamfcParams {
    /// `alpha` at a speed given in m/s.
    pub fn alpha_at(&self, v_mps: f64) -> f64 {
        alpha_schedule(self.v0.unit.from_mps(v_mps), self.alpha0, self.k_alpha, self.v0.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControllerConfig {
    Pid(PidParams),
    Mfc(MfcParams),
    Samfc(SamfcParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pid,
    Mfc,
    Samfc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Pid, ControllerKind::Mfc, ControllerKind::Samfc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::Mfc => "mfc",
            ControllerKind::Samfc => "samfc",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "pid" => Some(ControllerKind::Pid),
            "mfc" => Some(ControllerKind::Mfc),
            "samfc" => Some(ControllerKind::Samfc),
            _ => None,
        }
    }

    /// Names of the tunable parameters, in parameter-vector order.
    /// SAMFC's `v0` is in km/h.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ControllerKind::Pid => &["kp", "ki", "kd", "n"],
            ControllerKind::Mfc => &["kp", "kd", "alpha", "tc"],
            ControllerKind::Samfc => &["kp", "kd", "alpha0", "k_alpha", "v0", "tc"],
        }
    }

    /// Builds a configuration from a parameter vector ordered as
    /// [`parameter_names`](Self::parameter_names).
    pub fn config_from_vector(self, p: &[f64]) -> Result<ControllerConfig, ControllerError> {
        let want = self.parameter_names().len();
        if p.len() != want {
            return Err(ControllerError::InvalidConfig(format!(
                "{} expects {want} parameters, got {}",
                self.name(),
                p.len()
            )));
        }
        Ok(match self {
            ControllerKind::Pid => ControllerConfig::Pid(PidParams { kp: p[0], ki: p[1], kd: p[2], n: p[3] }),
            ControllerKind::Mfc => ControllerConfig::Mfc(MfcParams { kp: p[0], kd: p[1], alpha: p[2], tc: p[3] }),
            ControllerKind::Samfc => ControllerConfig::Samfc(SamfcParams {
                kp: p[0],
                kd: p[1],
                alpha0: p[2],
                k_alpha: p[3],
                v0: Speed::kmh(p[4]),
                tc: p[5],
            }),
        })
    }
}

impl ControllerConfig {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerConfig::Pid(_) => ControllerKind::Pid,
            ControllerConfig::Mfc(_) => ControllerKind::Mfc,
            ControllerConfig::Samfc(_) => ControllerKind::Samfc,
        }
    }

    /// Parameter vector in [`ControllerKind::parameter_names`] order.
    pub fn to_vector(&self) -> Vec<f64> {
        match *self {
            ControllerConfig::Pid(p) => vec![p.kp, p.ki, p.kd, p.n],
            ControllerConfig::Mfc(p) => vec![p.kp, p.kd, p.alpha, p.tc],
            ControllerConfig::Samfc(p) => {
                vec![p.kp, p.kd, p.alpha0, p.k_alpha, SpeedUnit::KilometersPerHour.from_mps(p.v0.to_mps()), p.tc]
            }
        }
    }

    /// Tuned parameter sets shipped with the tool.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "pid_table3" => Some(ControllerConfig::Pid(PidParams { kp: 0.2216, ki: 0.0, kd: 0.0367, n: 5.0 })),
            "mfc_table3" => Some(ControllerConfig::Mfc(MfcParams { kp: 0.0, kd: 19.28, alpha: 1409.0, tc: DEFAULT_TC })),
            "samfc_table3" => Some(ControllerConfig::Samfc(SamfcParams {
                kp: 0.5625,
                kd: 2.688,
                alpha0: 57.15,
                k_alpha: 9.547,
                v0: Speed::kmh(26.83),
                tc: DEFAULT_TC,
            })),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["pid_table3", "mfc_table3", "samfc_table3"];

    pub fn validate(&self, ts: f64) -> Result<(), ControllerError> {
        let bad = |m: String| Err(ControllerError::InvalidConfig(m));
        if !(ts > 0.0 && ts.is_finite()) {
            return bad(format!("sample period must be positive, got {ts}"));
        }
        let finite = self.to_vector().iter().all(|v| v.is_finite());
        if !finite {
            return bad("parameters must be finite".into());
        }
        match *self {
            ControllerConfig::Pid(p) => {
                if !(p.n > 0.0) {
                    return bad(format!("pid.n must be positive, got {}", p.n));
                }
                if p.n * ts >= 2.0 {
                    return bad(format!("pid.n * ts = {} puts the derivative filter pole outside the unit circle", p.n * ts));
                }
            }
            ControllerConfig::Mfc(p) => {
                if !(p.alpha > 0.0) {
                    return bad(format!("mfc.alpha must be positive, got {}", p.alpha));
                }
                if p.tc < 0.0 {
                    return bad(format!("mfc.tc must be non-negative, got {}", p.tc));
                }
            }
            ControllerConfig::Samfc(p) => {
                if !(p.alpha0 > 0.0) {
                    return bad(format!("samfc.alpha0 must be positive, got {}", p.alpha0));
                }
                if p.k_alpha < 0.0 {
                    return bad(format!("samfc.k_alpha must be non-negative, got {}", p.k_alpha));
                }
                if p.tc < 0.0 {
                    return bad(format!("samfc.tc must be non-negative, got {}", p.tc));
                }
            }
        }
        Ok(())
    }
}

/// Kinematic feedforward expressed as a steering-wheel angle [rad].
pub fn feedforward_steering(kappa: f64, wheelbase: f64, steering_ratio: f64) -> f64 {
    steering_ratio * (wheelbase * kappa).atan()
}

/// Kinematic feedforward at the road wheel [rad].
pub fn feedforward_road_wheel(kappa: f64, wheelbase: f64) -> f64 {
    (wheelbase * kappa).atan()
}

/// Speed-scheduled `alpha`: constant up to `v0`, then growing by `k_alpha`
/// per unit of speed. `v` and `v0` must share a unit.
pub fn alpha_schedule(v: f64, alpha0: f64, k_alpha: f64, v0: f64) -> f64 {
    alpha0.max(k_alpha * (v - v0) + alpha0)
}

/// One step of the Tustin-discretized filtered differentiator `s / (tc s + 1)`.
pub fn filtered_derivative_step(y_k: f64, y_km1: f64, dhat_km1: f64, ts: f64, tc: f64) -> f64 {
    (2.0 * y_k - 2.0 * y_km1 - (ts - 2.0 * tc) * dhat_km1) / (ts + 2.0 * tc)
}

/// Estimate of the lumped term `F`, assuming it is constant over one sample.
pub fn estimate_f(ddot_y_hat: f64, u_prev: f64, alpha: f64) -> f64 {
    ddot_y_hat - alpha * u_prev
}

/// Unsaturated iPD action for a second-order ultra-local model.
pub fn ipd_law(f_hat: f64, ddot_y_ref: f64, e: f64, e_dot: f64, kp: f64, kd: f64, alpha: f64) -> f64 {
    (-f_hat + ddot_y_ref + kp * e + kd * e_dot) / alpha
}

/// Road-wheel command: feedforward plus scaled feedback, clamped to the steering range.
pub fn compose_steering(delta_ff: f64, u_fb: f64, delta_max: f64) -> f64 {
    (delta_ff + delta_max * u_fb).clamp(-delta_max, delta_max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub derivative: f64,
    pub e_prev: f64,
    /// Last emitted action was saturated (sign of the saturation, 0 if not).
    pub saturated: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpdState {
    pub u_prev: f64,
    pub y_prev: f64,
    pub dy_hat: f64,
    pub ddy_hat: f64,
    pub f_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerState {
    Pid(PidState),
    Ipd(IpdState),
}

/// Feedback action emitted at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub u_fb: f64,
    /// `alpha` in effect (NaN for PID).
    pub alpha: f64,
}

/// Full steering decision for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u_fb: f64,
    /// Road-wheel feedforward [rad].
    pub delta_ff: f64,
    /// `delta_ff + delta_max * u_fb`, before clamping at the plant [rad].
    pub delta_t: f64,
    pub alpha_used: f64,
}

impl ControlOutput {
    /// Feedback outside [-1, 1] is saturated here.
    pub fn new(feedback: Feedback, delta_ff: f64, delta_max: f64) -> Self {
        let u_fb = feedback.u_fb.clamp(-1.0, 1.0);
        ControlOutput {
            u_fb,
            delta_ff,
            delta_t: delta_ff + delta_max * u_fb,
            alpha_used: feedback.alpha,
        }
    }
}

/// Discrete PID realizing
/// `Kp + Ki Ts / (z - 1) + Kd N / (1 + N Ts / (z - 1))`
/// with conditional integration while the output is saturated.
pub fn pid_step(e: f64, params: &PidParams, state: &PidState, ts: f64) -> (f64, PidState) {
    let increment = params.ki * ts * state.e_prev;
    // Freeze the integrator when it would push further into saturation.
    let integral = if state.saturated != 0.0 && increment * state.saturated > 0.0 {
        state.integral
    } else {
        state.integral + increment
    };
    let derivative = (1.0 - params.n * ts) * state.derivative + params.kd * params.n * (e - state.e_prev);
    let raw = params.kp * e + integral + derivative;
    let u = raw.clamp(-1.0, 1.0);
    let saturated = if raw > 1.0 {
        1.0
    } else if raw < -1.0 {
        -1.0
    } else {
        0.0
    };
    (u, PidState { integral, derivative, e_prev: e, saturated })
}

/// Gains of an iPD law, with `alpha` already resolved for this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdGains {
    pub kp: f64,
    pub kd: f64,
    pub alpha: f64,
    pub tc: f64,
}

/// One iPD tick on measured lateral deviation `y1` (reference 0).
pub fn ipd_step(y1: f64, gains: &IpdGains, state: &IpdState, ts: f64) -> Result<(f64, IpdState), ControllerError> {
    let dy_hat = filtered_derivative_step(y1, state.y_prev, state.dy_hat, ts, gains.tc);
    let ddy_hat = filtered_derivative_step(dy_hat, state.dy_hat, state.ddy_hat, ts, gains.tc);
    let f_hat = estimate_f(ddy_hat, state.u_prev, gains.alpha);
    let e = -y1;
    let e_dot = -dy_hat;
    let raw = ipd_law(f_hat, 0.0, e, e_dot, gains.kp, gains.kd, gains.alpha);
    if !raw.is_finite() {
        return Err(ControllerError::Fault(format!("non-finite iPD action (y1 = {y1}, F_hat = {f_hat})")));
    }
    let u = raw.clamp(-1.0, 1.0);
    Ok((u, IpdState { u_prev: u, y_prev: y1, dy_hat, ddy_hat, f_hat }))
}

/// Anything that turns lateral deviation into a normalized feedback action.
pub trait FeedbackLaw {
    fn reset(&mut self);
    /// `y1` is the measured lateral deviation [m], `v` the speed [m/s].
    fn step(&mut self, y1: f64, v: f64) -> Result<Feedback, ControllerError>;
}

/// A configured controller with its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralController {
    config: ControllerConfig,
    ts: f64,
    state: ControllerState,
}

impl LateralController {
    pub fn new(config: ControllerConfig, ts: f64) -> Result<Self, ControllerError> {
        config.validate(ts)?;
        let mut c = LateralController { config, ts, state: ControllerState::Pid(PidState::default()) };
        c.reset();
        Ok(c)
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }
}

impl FeedbackLaw for LateralController {
    fn reset(&mut self) {
        self.state = match self.config {
            ControllerConfig::Pid(_) => ControllerState::Pid(PidState::default()),
            _ => ControllerState::Ipd(IpdState::default()),
        };
    }

    fn step(&mut self, y1: f64, v: f64) -> Result<Feedback, ControllerError> {
        let (gains, st) = match (&self.config, &self.state) {
            (ControllerConfig::Pid(p), ControllerState::Pid(s)) => {
                let (u, next) = pid_step(-y1, p, s, self.ts);
                if !u.is_finite() {
                    return Err(ControllerError::Fault(format!("non-finite PID action (y1 = {y1})")));
                }
                self.state = ControllerState::Pid(next);
                return Ok(Feedback { u_fb: u, alpha: f64::NAN });
            }
            (ControllerConfig::Mfc(p), ControllerState::Ipd(s)) => {
                (IpdGains { kp: p.kp, kd: p.kd, alpha: p.alpha, tc: p.tc }, s)
            }
            (ControllerConfig::Samfc(p), ControllerState::Ipd(s)) => {
                (IpdGains { kp: p.kp, kd: p.kd, alpha: p.alpha_at(v), tc: p.tc }, s)
            }
            _ => unreachable!("state always matches the configuration"),
        };
        let (u, next) = ipd_step(y1, &gains, st, self.ts)?;
        self.state = ControllerState::Ipd(next);
        Ok(Feedback { u_fb: u, alpha: gains.alpha })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedforward_values() {
        assert_eq!(feedforward_steering(0.0, 2.46, 16.0), 0.0);
        let ff = feedforward_steering(0.05, 2.46, 16.0);
        assert!((ff - 16.0 * 0.123f64.atan()).abs() < 1e-15);
        assert!((ff - 1.958).abs() < 1e-3);
        assert_eq!(feedforward_steering(-0.05, 2.46, 16.0), -ff);
    }

    #[test]
    fn alpha_schedule_values() {
        assert_eq!(alpha_schedule(10.0, 57.15, 9.547, 26.83), 57.15);
        assert_eq!(alpha_schedule(26.83, 57.15, 9.547, 26.83), 57.15);
        assert!((alpha_schedule(36.83, 57.15, 9.547, 26.83) - 152.62).abs() < 1e-9);
        for v in [0.0, 5.0, 100.0] {
            assert_eq!(alpha_schedule(v, 57.15, 0.0, 26.83), 57.15);
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        assert_eq!(filtered_derivative_step(3.0, 3.0, 0.0, 0.05, 0.1), 0.0);
    }

    #[test]
    fn unfiltered_derivative_two_step_average() {
        let ts = 0.05;
        let delta = 0.2;
        let d0 = 0.7;
        let d1 = filtered_derivative_step(1.0 + delta, 1.0, d0, ts, 0.0);
        assert!((d1 - (2.0 * delta / ts - d0)).abs() < 1e-12);
        assert!((0.5 * (d0 + d1) - delta / ts).abs() < 1e-12);
    }

    #[test]
    fn f_estimate_cancels() {
        assert_eq!(estimate_f(2.0, 0.5, 4.0), 0.0);
        assert_eq!(estimate_f(1.3, 0.0, 99.0), 1.3);
    }

    #[test]
    fn ipd_equilibrium_and_derivative_action() {
        let (u, _) = ipd_step(0.0, &IpdGains { kp: 1.0, kd: 1.0, alpha: 10.0, tc: 0.1 }, &IpdState::default(), 0.05).unwrap();
        assert_eq!(u, 0.0);
        let u = ipd_law(0.0, 0.0, 0.0, 1.0, 0.0, 19.28, 1409.0);
        assert!((u - 0.013684).abs() < 1e-6);
    }

    #[test]
    fn ipd_stores_saturated_action() {
        let gains = IpdGains { kp: 100.0, kd: 0.0, alpha: 1.0, tc: 0.1 };
        let (u, st) = ipd_step(2.0, &gains, &IpdState::default(), 0.05).unwrap();
        assert_eq!(u, -1.0);
        assert_eq!(st.u_prev, -1.0);
    }

    #[test]
    fn pid_pure_proportional() {
        let p = PidParams { kp: 0.7, ki: 0.0, kd: 0.0, n: 5.0 };
        let mut s = PidState::default();
        for e in [0.1, -0.5, 3.0, -2.0] {
            let (u, next) = pid_step(e, &p, &s, 0.05);
            assert_eq!(u, (0.7 * e).clamp(-1.0, 1.0));
            s = next;
        }
    }

    #[test]
    fn pid_integral_ramp() {
        let p = PidParams { kp: 0.0, ki: 0.2, kd: 0.0, n: 5.0 };
        let mut s = PidState::default();
        let mut last = 0.0;
        for k in 0..20 {
            let (u, next) = pid_step(1.0, &p, &s, 0.05);
            if k > 0 {
                assert!((u - last - 0.01).abs() < 1e-12);
            }
            last = u;
            s = next;
        }
    }

    #[test]
    fn pid_first_tick_on_unit_step() {
        let ControllerConfig::Pid(p) = ControllerConfig::preset("pid_table3").unwrap() else { unreachable!() };
        let (u, _) = pid_step(1.0, &p, &PidState::default(), 0.05);
        assert!((u - 0.4051).abs() < 1e-12);
    }

    #[test]
    fn pid_rejects_unstable_filter() {
        let c = ControllerConfig::Pid(PidParams { kp: 1.0, ki: 0.0, kd: 0.1, n: 40.0 });
        assert!(c.validate(0.05).is_err());
        let c = ControllerConfig::Pid(PidParams { kp: 1.0, ki: 0.0, kd: 0.1, n: 39.0 });
        assert!(c.validate(0.05).is_ok());
    }

    #[test]
    fn pid_anti_windup_freezes_integrator() {
        let p = PidParams { kp: 2.0, ki: 1.0, kd: 0.0, n: 5.0 };
        let mut s = PidState::default();
        for _ in 0..50 {
            s = pid_step(1.0, &p, &s, 0.05).1;
        }
        // Saturated from the first tick on; the integrator moved only once.
        assert!((s.integral - 0.0).abs() < 1e-12);
        let (u, _) = pid_step(-0.2, &p, &s, 0.05);
        assert!(u < 0.0, "recovers immediately once the error flips");
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose_steering(0.1, 0.0, 0.55), 0.1);
        assert_eq!(compose_steering(0.0, 1.0, 0.55), 0.55);
        assert_eq!(compose_steering(0.3, 0.6, 0.55), 0.55);
    }

    #[test]
    fn presets_and_vectors() {
        for name in ControllerConfig::PRESETS {
            let c = ControllerConfig::preset(name).unwrap();
            c.validate(CONTROL_PERIOD).unwrap();
            let back = c.kind().config_from_vector(&c.to_vector()).unwrap();
            assert_eq!(back.to_vector(), c.to_vector());
        }
        let ControllerConfig::Samfc(s) = ControllerConfig::preset("samfc_table3").unwrap() else { unreachable!() };
        assert_eq!((s.kp, s.kd, s.alpha0, s.k_alpha), (0.5625, 2.688, 57.15, 9.547));
        assert_eq!(s.v0, Speed::kmh(26.83));
        // Schedule evaluated in km/h: 10 km/h above v0.
        assert!((s.alpha_at((26.83 + 10.0) / 3.6) - 152.62).abs() < 1e-9);
    }

    #[test]
    fn samfc_without_slope_matches_mfc() {
        let mfc = ControllerConfig::Mfc(MfcParams { kp: 0.4, kd: 3.0, alpha: 80.0, tc: 0.1 });
        let samfc = ControllerConfig::Samfc(SamfcParams {
            kp: 0.4,
            kd: 3.0,
            alpha0: 80.0,
            k_alpha: 0.0,
            v0: Speed::kmh(20.0),
            tc: 0.1,
        });
        let mut a = LateralController::new(mfc, CONTROL_PERIOD).unwrap();
        let mut b = LateralController::new(samfc, CONTROL_PERIOD).unwrap();
        for k in 0..400 {
            let t = k as f64 * CONTROL_PERIOD;
            let y = 0.3 * (0.7 * t).sin() + 0.01 * (13.0 * t).cos();
            let v = 3.0 + 0.1 * t;
            let fa = a.step(y, v).unwrap();
            let fb = b.step(y, v).unwrap();
            assert_eq!(fa.u_fb.to_bits(), fb.u_fb.to_bits());
        }
    }
}
