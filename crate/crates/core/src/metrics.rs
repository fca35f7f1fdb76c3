//! Run quality indicators.
//!
//! Tracking accuracy is the time-averaged absolute lateral deviation. Two
//! spectral scores look at the feedback action: `M_eps` measures
//! low-frequency oscillation on long straights (a stability-margin proxy) and
//! `M_zeta` measures high-frequency oscillation over the whole run (a comfort
//! proxy). Both come from a short-time Fourier transform of the high-passed
//! action, mapped to a dB scale and clamped at zero.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle_sim::SimLog;

/// Value given to every metric of a failed run.
pub const FAILURE_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid spectral configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Sampling rate of the log [Hz].
    pub fs: f64,
    /// STFT section length [s].
    pub section_seconds: f64,
    /// Fraction of a section shared with the next one.
    pub overlap: f64,
    pub band_eps: [f64; 2],
    pub band_zeta: [f64; 2],
    pub hp_cut_eps: f64,
    pub hp_cut_zeta: f64,
    pub s_eps: f64,
    pub s_zeta: f64,
    /// Power threshold below which scores are zero [dB below unity].
    pub lambda_db: f64,
    /// Curvature below which the path counts as straight [1/m].
    pub straight_kappa: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            fs: 20.0,
            section_seconds: 5.0,
            overlap: 0.5,
            band_eps: [1.1, 4.0],
            band_zeta: [4.0, 10.0],
            hp_cut_eps: 0.5,
            hp_cut_zeta: 4.0,
            s_eps: 0.015,
            s_zeta: 0.04,
            lambda_db: 80.0,
            straight_kappa: 0.01,
        }
    }
}

impl SpectralConfig {
    /// Samples per section.
    pub fn section_len(&self) -> usize {
        (self.section_seconds * self.fs).round() as usize
    }

    /// Samples between section starts.
    pub fn hop(&self) -> usize {
        ((1.0 - self.overlap) * self.section_len() as f64).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::InvalidConfig(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        let n = self.section_seconds * self.fs;
        if !(n >= 2.0 && (n - n.round()).abs() < 1e-9) {
            return bad(format!("section length {} s is not a whole number of samples", self.section_seconds));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap must be in [0, 1), got {}", self.overlap));
        }
        let nyquist = self.fs / 2.0;
        for (name, [lo, hi]) in [("band_eps", self.band_eps), ("band_zeta", self.band_zeta)] {
            if !(lo > 0.0 && lo <= hi && hi <= nyquist) {
                return bad(format!("{name} [{lo}, {hi}] must lie within (0, {nyquist}]"));
            }
        }
        for (name, fc) in [("hp_cut_eps", self.hp_cut_eps), ("hp_cut_zeta", self.hp_cut_zeta)] {
            if !(fc > 0.0 && fc < nyquist) {
                return bad(format!("{name} = {fc} Hz must lie within (0, {nyquist})"));
            }
        }
        if !(self.s_eps >= 0.0 && self.s_zeta >= 0.0 && self.lambda_db.is_finite()) {
            return bad("scale factors must be non-negative and lambda finite".into());
        }
        Ok(())
    }
}

/// One STFT section's maximum in-band power and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPower {
    /// Time of the first sample of the section, relative to the log start [s].
    pub t_start: f64,
    pub power: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub completed: bool,
    pub iae: f64,
    /// Maximum absolute lateral error [m].
    pub mle: f64,
    pub m_epsilon: f64,
    pub m_zeta: f64,
    pub eps_sections: Vec<SectionPower>,
    pub zeta_sections: Vec<SectionPower>,
}

/// Time-averaged absolute lateral deviation of a completed run [m].
pub fn iae(log: &SimLog) -> f64 {
    if !log.completed {
        return FAILURE_PENALTY;
    }
    mean_abs(&log.y1)
}

/// Mean of `|x|` over the samples (0 for an empty signal).
pub fn mean_abs(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64
    }
}

/// Maximum absolute lateral deviation [m].
pub fn mle(log: &SimLog) -> f64 {
    log.y1.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Second-order Butterworth high-pass `(b, a)` with `a[0] = 1`.
pub fn butterworth_highpass(cutoff: f64, fs: f64) -> Result<([f64; 3], [f64; 3]), MetricsError> {
    if !(cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(MetricsError::InvalidConfig(format!(
            "high-pass cutoff {cutoff} Hz must lie within (0, {}) Hz",
            fs / 2.0
        )));
    }
    let k = (std::f64::consts::PI * cutoff / fs).tan();
    let sqrt2 = std::f64::consts::SQRT_2;
    let norm = 1.0 / (1.0 + sqrt2 * k + k * k);
    let b = [norm, -2.0 * norm, norm];
    let a = [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - sqrt2 * k + k * k) * norm];
    Ok((b, a))
}

/// Direct-form II transposed filter started from state `z`.
fn lfilter(b: &[f64; 3], a: &[f64; 3], x: &[f64], mut z: [f64; 2]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let y = b[0] * xi + z[0];
            z[0] = b[1] * xi - a[1] * y + z[1];
            z[1] = b[2] * xi - a[2] * y;
            y
        })
        .collect()
}

/// Filter state that makes a unit-step input look like it has always been applied.
fn steady_state(b: &[f64; 3], a: &[f64; 3]) -> [f64; 2] {
    let dc = (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]);
    let z1 = b[2] - a[2] * dc;
    [b[1] - a[1] * dc + z1, z1]
}

/// Zero-phase second-order Butterworth high-pass.
///
/// The signal is extended by odd reflection at both ends and filtered
/// forward then backward, each pass starting from the steady state of its
/// first sample, so constant inputs come out as exact zeros.
pub fn highpass(signal: &[f64], cutoff: f64, fs: f64) -> Result<Vec<f64>, MetricsError> {
    let (b, a) = butterworth_highpass(cutoff, fs)?;
    let n = signal.len();
    if n < 2 {
        return Ok(vec![0.0; n]);
    }
    let pad = 9.min(n - 1);
    let (first, last) = (signal[0], signal[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    let zi = steady_state(&b, &a);
    let scaled = |x0: f64| [zi[0] * x0, zi[1] * x0];
    let mut y = lfilter(&b, &a, &ext, scaled(ext[0]));
    y.reverse();
    let mut y = lfilter(&b, &a, &y, scaled(y[0]));
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// DFT bins whose frequencies fall inside `band` (edges inclusive).
pub fn band_bins(band: [f64; 2], n: usize, fs: f64) -> std::ops::RangeInclusive<usize> {
    let df = fs / n as f64;
    let lo = (band[0] / df - 1e-9).ceil().max(0.0) as usize;
    let hi = ((band[1] / df + 1e-9).floor() as usize).min(n / 2);
    lo..=hi
}

/// One-sided power of bin `k` of an `n`-point transform with window sum `wsum`.
///
/// A sine of amplitude `A` centred on a bin gets power `A²/2`.
pub fn bin_power(x: Complex<f64>, k: usize, n: usize, wsum: f64) -> f64 {
    let one_sided = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
    one_sided * x.norm_sqr() / (wsum * wsum)
}

/// One-sided power spectrum of every Hann-tapered section of `signal`.
pub fn stft_spectra(signal: &[f64], cfg: &SpectralConfig) -> Vec<Vec<f64>> {
    let n = cfg.section_len();
    if signal.len() < n {
        return Vec::new();
    }
    let window = hann(n);
    let wsum: f64 = window.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    (0..=signal.len() - n)
        .step_by(cfg.hop())
        .map(|start| {
            for (slot, (x, w)) in buf.iter_mut().zip(signal[start..start + n].iter().zip(&window)) {
                *slot = Complex::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            (0..=n / 2).map(|k| bin_power(buf[k], k, n, wsum)).collect()
        })
        .collect()
}

/// Per-section maximum power among the bins inside `band`.
pub fn stft_power_sections(signal: &[f64], cfg: &SpectralConfig, band: [f64; 2]) -> Vec<f64> {
    let bins = band_bins(band, cfg.section_len(), cfg.fs);
    stft_spectra(signal, cfg)
        .iter()
        .map(|spec| spec[bins.clone()].iter().copied().fold(0.0, f64::max))
        .collect()
}

/// `max(0, scale (10 log10 P + lambda))`; exactly 0 for `P = 0`.
pub fn db_score(power: f64, scale: f64, lambda_db: f64) -> f64 {
    if power > 0.0 {
        (scale * (10.0 * power.log10() + lambda_db)).max(0.0)
    } else {
        0.0
    }
}

/// Maximal index ranges where `|kappa|` stays below the straight threshold
/// for at least one full section.
pub fn straight_runs(kappa: &[f64], cfg: &SpectralConfig) -> Vec<std::ops::Range<usize>> {
    let min_len = cfg.section_len();
    let mut runs = Vec::new();
    let mut start = None;
    for (i, k) in kappa.iter().enumerate() {
        match (k.abs() < cfg.straight_kappa, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    runs.push(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if kappa.len() - s >= min_len {
            runs.push(s..kappa.len());
        }
    }
    runs
}

/// Scored `M_eps` sections of a feedback signal with its per-sample curvature.
pub fn epsilon_sections(u_fb: &[f64], kappa: &[f64], cfg: &SpectralConfig) -> Result<Vec<SectionPower>, MetricsError> {
    cfg.validate()?;
    let hop_s = cfg.hop() as f64 / cfg.fs;
    let mut out = Vec::new();
    for run in straight_runs(kappa, cfg) {
        let filtered = highpass(&u_fb[run.clone()], cfg.hp_cut_eps, cfg.fs)?;
        let t0 = run.start as f64 / cfg.fs;
        for (j, p) in stft_power_sections(&filtered, cfg, cfg.band_eps).into_iter().enumerate() {
            out.push(SectionPower { t_start: t0 + j as f64 * hop_s, power: p, score: db_score(p, cfg.s_eps, cfg.lambda_db) });
        }
    }
    Ok(out)
}

/// Scored `M_zeta` sections over the whole feedback signal.
pub fn zeta_sections(u_fb: &[f64], cfg: &SpectralConfig) -> Result<Vec<SectionPower>, MetricsError> {
    cfg.validate()?;
    let hop_s = cfg.hop() as f64 / cfg.fs;
    let filtered = highpass(u_fb, cfg.hp_cut_zeta, cfg.fs)?;
    Ok(stft_power_sections(&filtered, cfg, cfg.band_zeta)
        .into_iter()
        .enumerate()
        .map(|(j, p)| SectionPower { t_start: j as f64 * hop_s, power: p, score: db_score(p, cfg.s_zeta, cfg.lambda_db) })
        .collect())
}

fn m_epsilon_of(sections: &[SectionPower]) -> f64 {
    if sections.is_empty() {
        0.0
    } else {
        sections.iter().map(|s| s.score).sum::<f64>() / sections.len() as f64
    }
}

fn m_zeta_of(sections: &[SectionPower], cfg: &SpectralConfig) -> f64 {
    let p_max = sections.iter().map(|s| s.power).fold(0.0, f64::max);
    db_score(p_max, cfg.s_zeta, cfg.lambda_db)
}

/// Low-frequency oscillation score on long straights.
pub fn m_epsilon(log: &SimLog, cfg: &SpectralConfig) -> Result<f64, MetricsError> {
    if !log.completed {
        return Ok(FAILURE_PENALTY);
    }
    Ok(m_epsilon_of(&epsilon_sections(&log.u_fb, &log.kappa, cfg)?))
}

/// High-frequency oscillation score: the loudest section of the whole run.
pub fn m_zeta(log: &SimLog, cfg: &SpectralConfig) -> Result<f64, MetricsError> {
    if !log.completed {
        return Ok(FAILURE_PENALTY);
    }
    Ok(m_zeta_of(&zeta_sections(&log.u_fb, cfg)?, cfg))
}

/// All indicators of one run.
pub fn report(log: &SimLog, cfg: &SpectralConfig) -> Result<MetricsReport, MetricsError> {
    cfg.validate()?;
    let eps_sections = epsilon_sections(&log.u_fb, &log.kappa, cfg)?;
    let zeta_sections = zeta_sections(&log.u_fb, cfg)?;
    let (iae, m_epsilon, m_zeta) = if log.completed {
        (mean_abs(&log.y1), m_epsilon_of(&eps_sections), m_zeta_of(&zeta_sections, cfg))
    } else {
        (FAILURE_PENALTY, FAILURE_PENALTY, FAILURE_PENALTY)
    };
    Ok(MetricsReport { completed: log.completed, iae, mle: mle(log), m_epsilon, m_zeta, eps_sections, zeta_sections })
}
