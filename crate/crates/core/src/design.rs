//! First-level design matrix: canonical HRF, convolved event regressors,
//! DCT drift basis, motion and intercept columns.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataio::{Condition, EventTimeline, MotionRegressors};
use crate::error::{Error, Result};

/// Double-gamma shape parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub undershoot_shape: f64,
    pub peak_rate: f64,
    pub undershoot_rate: f64,
    pub undershoot_ratio: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self { peak_shape: 6.0, undershoot_shape: 16.0, peak_rate: 1.0, undershoot_rate: 1.0, undershoot_ratio: 6.0 }
    }
}

/// HRF sampled at `0, dt, 2dt, ...` over the window, peak-normalized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Hrf {
    pub dt_seconds: f64,
    pub duration_seconds: f64,
    pub params: HrfParams,
    pub samples: Vec<f64>,
}

fn gamma_pdf(t: f64, shape: f64, rate: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)).exp()
}

impl HrfParams {
    /// Unnormalized double-gamma response at `t` seconds.
    pub fn eval(&self, t: f64) -> f64 {
        gamma_pdf(t, self.peak_shape, self.peak_rate)
            - gamma_pdf(t, self.undershoot_shape, self.undershoot_rate) / self.undershoot_ratio
    }
}

pub fn canonical_hrf(dt_seconds: f64, duration_seconds: f64) -> Result<Hrf> {
    hrf_with_params(dt_seconds, duration_seconds, HrfParams::default())
}

pub fn hrf_with_params(dt_seconds: f64, duration_seconds: f64, params: HrfParams) -> Result<Hrf> {
    if !(dt_seconds > 0.0 && dt_seconds <= 0.5) {
        return Err(Error::Config(format!("HRF sampling step {dt_seconds} s must be in (0, 0.5]")));
    }
    if !(duration_seconds >= 24.0 && duration_seconds.is_finite()) {
        return Err(Error::Config(format!("HRF window {duration_seconds} s must be >= 24 s")));
    }
    let n = (duration_seconds / dt_seconds + 1e-9).floor() as usize + 1;
    let mut samples: Vec<f64> = (0..n).map(|i| params.eval(i as f64 * dt_seconds)).collect();
    let peak = samples.iter().cloned().fold(f64::MIN, f64::max);
    for s in &mut samples {
        *s /= peak;
    }
    Ok(Hrf { dt_seconds, duration_seconds, params, samples })
}

impl Hrf {
    pub fn peak_time(&self) -> f64 {
        let (i, _) =
            self.samples.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        i as f64 * self.dt_seconds
    }
}

/// Fraction of each microtime bin `[k dt, (k+1) dt)` covered by `condition`.
fn microtime_boxcar(timeline: &EventTimeline, condition: Condition, n_bins: usize, dt: f64) -> Vec<f64> {
    let mut boxcar = vec![0.0; n_bins];
    for e in timeline.of(condition) {
        let first = (e.onset / dt).floor() as usize;
        let last = ((e.end() / dt).ceil() as usize).min(n_bins);
        for (k, slot) in boxcar.iter_mut().enumerate().take(last).skip(first) {
            let lo = (k as f64 * dt).max(e.onset);
            let hi = ((k + 1) as f64 * dt).min(e.end());
            if hi > lo {
                *slot += (hi - lo) / dt;
            }
        }
    }
    boxcar
}

/// Condition regressor sampled once per scan.
///
/// The microtime boxcar carries the covered fraction of each bin and is
/// convolved with the bin-averaged (trapezoid) HRF, scaled by the bin width,
/// so values approximate the continuous integral of boxcar times HRF in
/// seconds. Each scan takes the value at its first microtime bin.
pub fn event_regressor(
    timeline: &EventTimeline,
    condition: Condition,
    nt: usize,
    tr_seconds: f64,
    hrf: &Hrf,
    microtime_bins: usize,
) -> Result<Vec<f64>> {
    if microtime_bins == 0 {
        return Err(Error::Config("microtime_bins must be >= 1".into()));
    }
    let dt = tr_seconds / microtime_bins as f64;
    if ((hrf.dt_seconds - dt) / dt).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "HRF step {} s does not match tr / microtime_bins = {dt} s",
            hrf.dt_seconds
        )));
    }
    let n_bins = nt * microtime_bins;
    let boxcar = microtime_boxcar(timeline, condition, n_bins, dt);
    if boxcar.iter().all(|&b| b == 0.0) {
        return Ok(vec![0.0; nt]);
    }
    let h = &hrf.samples;
    let kernel: Vec<f64> = (1..=h.len()).map(|m| 0.5 * (h[m - 1] + h.get(m).copied().unwrap_or(0.0)) * dt).collect();
    Ok((0..nt)
        .map(|scan| {
            let k = scan * microtime_bins;
            kernel.iter().enumerate().take_while(|(j, _)| *j < k).map(|(j, w)| w * boxcar[k - j - 1]).sum()
        })
        .collect())
}

/// Number of DCT drift columns for a cutoff period.
pub fn dct_order(nt: usize, tr_seconds: f64, cutoff_seconds: f64) -> usize {
    let x = 2.0 * nt as f64 * tr_seconds / cutoff_seconds;
    ((x + 1.0 + 1e-9).floor() as usize).saturating_sub(1)
}

/// Unit-norm cosine drift columns `cos(pi k (2t+1) / (2 nt))`, `k = 1..=K`.
pub fn dct_highpass_basis(nt: usize, tr_seconds: f64, cutoff_seconds: f64) -> Result<DMatrix<f64>> {
    if !(cutoff_seconds > 2.0 * tr_seconds) {
        return Err(Error::Config(format!(
            "high-pass cutoff {cutoff_seconds} s must exceed twice the TR ({tr_seconds} s)"
        )));
    }
    let k = dct_order(nt, tr_seconds, cutoff_seconds);
    if k == 0 {
        warn!("high-pass cutoff {cutoff_seconds} s longer than the run: no drift columns");
    }
    let mut basis = DMatrix::zeros(nt, k);
    for c in 0..k {
        let freq = (c + 1) as f64;
        let mut col: Vec<f64> =
            (0..nt).map(|t| (std::f64::consts::PI * freq * (2 * t + 1) as f64 / (2 * nt) as f64).cos()).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut col {
            *v /= norm;
        }
        basis.set_column(c, &nalgebra::DVector::from_vec(col));
    }
    Ok(basis)
}

/// GLM design: `[speech, silence, motion_1..6, drift_1..K, intercept]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    rank: usize,
}

pub const SPEECH_COLUMN: usize = 0;
pub const SILENCE_COLUMN: usize = 1;

/// Relative singular-value cutoff used for rank and pseudoinverse decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

impl DesignMatrix {
    pub fn from_columns(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.ncols() != column_names.len() {
            return Err(Error::Dims(format!("{} columns but {} names", values.ncols(), column_names.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("design contains non-finite values".into()));
        }
        let rank = numerical_rank(&values);
        Ok(Self { values, column_names, rank })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn nt(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    /// Contrast weights with +1 on `plus` and -1 on `minus`.
    pub fn difference_contrast(&self, plus: usize, minus: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.ncols()];
        c[plus] = 1.0;
        c[minus] = -1.0;
        c
    }
}

pub fn assemble_design(
    speech: &[f64],
    silence: &[f64],
    motion: &MotionRegressors,
    drift: &DMatrix<f64>,
    nt: usize,
) -> Result<DesignMatrix> {
    let check = |what: &str, len: usize| {
        if len != nt {
            Err(Error::Dims(format!("{what} has {len} rows, expected {nt}")))
        } else {
            Ok(())
        }
    };
    check("speech regressor", speech.len())?;
    check("silence regressor", silence.len())?;
    check("motion regressors", motion.nt())?;
    check("drift basis", drift.nrows())?;

    let k = drift.ncols();
    let p = 2 + 6 + k + 1;
    let mut x = DMatrix::zeros(nt, p);
    let mut names = Vec::with_capacity(p);
    for t in 0..nt {
        x[(t, 0)] = speech[t];
        x[(t, 1)] = silence[t];
        for m in 0..6 {
            x[(t, 2 + m)] = motion.rows()[t][m];
        }
        for d in 0..k {
            x[(t, 8 + d)] = drift[(t, d)];
        }
        x[(t, p - 1)] = 1.0;
    }
    names.push("speech".to_string());
    names.push("silence".to_string());
    names.extend((1..=6).map(|i| format!("motion_{i}")));
    names.extend((1..=k).map(|i| format!("drift_{i}")));
    names.push("intercept".to_string());
    DesignMatrix::from_columns(x, names)
}

/// Settings that turn a timeline plus motion table into a design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub microtime_bins: usize,
    pub hrf_duration_seconds: f64,
    pub highpass_cutoff_seconds: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { microtime_bins: 16, hrf_duration_seconds: 32.0, highpass_cutoff_seconds: 128.0 }
    }
}

pub fn build_design(
    timeline: &EventTimeline,
    motion: &MotionRegressors,
    nt: usize,
    tr_seconds: f64,
    cfg: &DesignConfig,
) -> Result<DesignMatrix> {
    let hrf = canonical_hrf(tr_seconds / cfg.microtime_bins as f64, cfg.hrf_duration_seconds)?;
    let speech = event_regressor(timeline, Condition::Speech, nt, tr_seconds, &hrf, cfg.microtime_bins)?;
    let silence = event_regressor(timeline, Condition::Silence, nt, tr_seconds, &hrf, cfg.microtime_bins)?;
    let drift = dct_highpass_basis(nt, tr_seconds, cfg.highpass_cutoff_seconds)?;
    assemble_design(&speech, &silence, motion, &drift, nt)
}
