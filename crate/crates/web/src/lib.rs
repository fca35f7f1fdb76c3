//! Browser bindings. Each operation returns a JSON document so the page can
//! stay framework-free; the same functions are callable natively.

use mfclab_core::circuits;
use mfclab_core::controllers::{alpha_schedule, ControllerConfig};
use mfclab_core::metrics::{self, SpectralConfig};
use mfclab_core::vehicle_sim::{simulate_controller, SensorModel, SimLog, SimOptions, VehicleParams};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Longest series handed to the page; logs are decimated down to this.
const MAX_POINTS: usize = 2000;

#[derive(Serialize)]
struct Series {
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    y1: Vec<f64>,
    u_fb: Vec<f64>,
    alpha: Vec<Option<f64>>,
}

fn decimate(log: &SimLog) -> Series {
    let step = log.len().div_ceil(MAX_POINTS).max(1);
    let pick = |v: &[f64]| v.iter().step_by(step).copied().collect::<Vec<_>>();
    Series {
        t: pick(&log.t),
        x: pick(&log.x),
        y: pick(&log.y),
        y1: pick(&log.y1),
        u_fb: pick(&log.u_fb),
        alpha: log.alpha.iter().step_by(step).map(|a| a.is_finite().then_some(*a)).collect(),
    }
}

/// Simulates one lap of a built-in circuit with a controller preset and
/// returns the decimated traces, the reference path and the scores.
pub fn simulate_lap_json(circuit: &str, preset: &str, seed: u32, noise_mm: f64) -> Result<String, String> {
    let traj = circuits::trajectory(circuit, None).map_err(|e| e.to_string())?;
    let config = ControllerConfig::preset(preset).ok_or_else(|| format!("unknown preset `{preset}`"))?;
    if !(noise_mm >= 0.0 && noise_mm.is_finite()) {
        return Err("noise must be a non-negative number of millimetres".into());
    }
    let base = SensorModel::default();
    let sensor = SensorModel {
        seed: u64::from(seed),
        sigma_xy: noise_mm / 1000.0,
        sigma_psi: base.sigma_psi * noise_mm / (base.sigma_xy * 1000.0),
    };
    let log = simulate_controller(&traj, &config, &VehicleParams::default(), &sensor, &SimOptions::default())
        .map_err(|e| e.to_string())?;
    let report = metrics::report(&log, &SpectralConfig::default()).map_err(|e| e.to_string())?;
    let pts = traj.path.points();
    let step = pts.len().div_ceil(MAX_POINTS).max(1);
    let doc = json!({
        "circuit": circuit,
        "controller": config.kind().name(),
        "completed": log.completed,
        "failure": log.failure.as_ref().map(|f| f.to_string()),
        "iae": report.iae,
        "mle": report.mle,
        "m_eps": report.m_epsilon,
        "m_zeta": report.m_zeta,
        "reference": {
            "x": pts.iter().step_by(step).map(|p| p.x).collect::<Vec<_>>(),
            "y": pts.iter().step_by(step).map(|p| p.y).collect::<Vec<_>>(),
        },
        "log": decimate(&log),
    });
    Ok(doc.to_string())
}

/// `alpha` against speed for the speed-adaptive law, speeds in km/h.
pub fn alpha_curve_json(alpha0: f64, k_alpha: f64, v0_kmh: f64, v_max_kmh: f64, samples: usize) -> Result<String, String> {
    if !(alpha0 > 0.0 && k_alpha >= 0.0 && v0_kmh >= 0.0 && v_max_kmh > 0.0 && samples >= 2) {
        return Err("need alpha0 > 0, k_alpha >= 0, v0 >= 0, v_max > 0 and at least two samples".into());
    }
    let v: Vec<f64> = (0..samples).map(|i| v_max_kmh * i as f64 / (samples - 1) as f64).collect();
    let alpha: Vec<f64> = v.iter().map(|&s| alpha_schedule(s, alpha0, k_alpha, v0_kmh)).collect();
    Ok(json!({ "v_kmh": v, "alpha": alpha }).to_string())
}

/// Scores a pure tone of the given frequency and amplitude as if it were the
/// feedback signal on a 30 s straight.
pub fn tone_scores_json(freq_hz: f64, amplitude: f64) -> Result<String, String> {
    let cfg = SpectralConfig::default();
    if !(freq_hz > 0.0 && freq_hz < cfg.fs / 2.0 && amplitude.is_finite()) {
        return Err(format!("frequency must lie in (0, {}) Hz", cfg.fs / 2.0));
    }
    let n = (30.0 * cfg.fs) as usize;
    let u: Vec<f64> =
        (0..n).map(|i| amplitude * (std::f64::consts::TAU * freq_hz * i as f64 / cfg.fs).sin()).collect();
    let kappa = vec![0.0; n];
    let eps = metrics::epsilon_sections(&u, &kappa, &cfg).map_err(|e| e.to_string())?;
    let zeta = metrics::zeta_sections(&u, &cfg).map_err(|e| e.to_string())?;
    let m_eps = eps.iter().map(|s| s.score).sum::<f64>() / eps.len().max(1) as f64;
    let p_max = zeta.iter().map(|s| s.power).fold(0.0, f64::max);
    let spectrum = metrics::stft_spectra(&u, &cfg).into_iter().next().unwrap_or_default();
    let df = cfg.fs / cfg.section_len() as f64;
    Ok(json!({
        "m_eps": m_eps,
        "m_zeta": metrics::db_score(p_max, cfg.s_zeta, cfg.lambda_db),
        "freq": (0..spectrum.len()).map(|k| k as f64 * df).collect::<Vec<_>>(),
        "power_db": spectrum.iter().map(|p| 10.0 * p.max(1e-30).log10()).collect::<Vec<_>>(),
        "band_eps": cfg.band_eps,
        "band_zeta": cfg.band_zeta,
    })
    .to_string())
}

#[wasm_bindgen(js_name = simulateLap)]
pub fn simulate_lap(circuit: &str, preset: &str, seed: u32, noise_mm: f64) -> Result<String, JsValue> {
    simulate_lap_json(circuit, preset, seed, noise_mm).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = alphaCurve)]
pub fn alpha_curve(alpha0: f64, k_alpha: f64, v0_kmh: f64, v_max_kmh: f64, samples: usize) -> Result<String, JsValue> {
    alpha_curve_json(alpha0, k_alpha, v0_kmh, v_max_kmh, samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = toneScores)]
pub fn tone_scores(freq_hz: f64, amplitude: f64) -> Result<String, JsValue> {
    tone_scores_json(freq_hz, amplitude).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = presetNames)]
pub fn preset_names() -> String {
    json!({ "presets": ControllerConfig::PRESETS, "circuits": circuits::NAMES }).to_string()
}
