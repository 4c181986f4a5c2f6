//! Voxelwise GLM with single-pass Cochrane–Orcutt AR(1) prewhitening and
//! positive-part contrast t-maps.
//!
//! Rank-deficient designs are handled once per design: whitening with
//! `|rho| < 1` is an invertible row transform, so the whitened design keeps the
//! null space of the raw design. Every fit is solved in the raw design's row
//! space (singular values above `RANK_TOLERANCE * sigma_max`), which yields
//! the minimum-norm pseudoinverse solution.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, RANK_TOLERANCE, SILENCE_COLUMN, SPEECH_COLUMN};
use crate::error::{Error, Result};
use crate::volume::{MapKind, ScalarMap, Volume4D};

pub const RHO_CLAMP: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct Contrast {
    pub name: String,
    pub weights: Vec<f64>,
}

impl Contrast {
    /// `speech - silence` for a design laid out by [`crate::design::assemble_design`].
    pub fn speech_gt_silence(design: &DesignMatrix) -> Self {
        Self { name: "speech_gt_silence".into(), weights: design.difference_contrast(SPEECH_COLUMN, SILENCE_COLUMN) }
    }

    pub fn silence_gt_speech(design: &DesignMatrix) -> Self {
        Self { name: "silence_gt_speech".into(), weights: design.difference_contrast(SILENCE_COLUMN, SPEECH_COLUMN) }
    }
}

/// Single-voxel fit.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit {
    pub betas: Vec<f64>,
    pub sigma2: f64,
    pub dof: usize,
    pub rho: f64,
    /// Unscaled coefficient covariance `(X'X)^+` of the (whitened) design.
    pub xtx_inv: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastValue {
    pub value: f64,
    pub se: f64,
    pub t: f64,
    pub degenerate: bool,
}

impl ContrastValue {
    /// Positive part: `(max(C, 0), t where C > 0 else 0)`.
    pub fn positive_part(&self) -> (f64, f64) {
        if self.value > 0.0 {
            (self.value, self.t)
        } else {
            (0.0, 0.0)
        }
    }
}

/// Design-dependent quantities shared across voxels.
#[derive(Clone, Debug)]
pub struct GlmSolver {
    x: DMatrix<f64>,
    row_basis: DMatrix<f64>,
    reduced: DMatrix<f64>,
    rank: usize,
}

impl GlmSolver {
    pub fn new(design: &DesignMatrix) -> Result<Self> {
        Self::from_matrix(design.values().clone())
    }

    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        let nt = x.nrows();
        let svd = x.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| max > 0.0 && svd.singular_values[i] > RANK_TOLERANCE * max)
            .collect();
        let rank = keep.len();
        if nt <= rank {
            return Err(Error::Dof { nt, rank });
        }
        let mut row_basis = DMatrix::zeros(x.ncols(), rank);
        for (j, &i) in keep.iter().enumerate() {
            row_basis.set_column(j, &v_t.row(i).transpose());
        }
        let reduced = &x * &row_basis;
        Ok(Self { x, row_basis, reduced, rank })
    }

    pub fn nt(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dof(&self) -> usize {
        self.nt() - self.rank
    }

    /// Ordinary least squares (`rho = 0`).
    pub fn fit_ols(&self, y: &[f64]) -> Result<GlmFit> {
        self.fit_whitened(y, 0.0)
    }

    /// Least squares after the AR(1) whitening transform with coefficient `rho`.
    pub fn fit_whitened(&self, y: &[f64], rho: f64) -> Result<GlmFit> {
        let nt = self.nt();
        if y.len() != nt {
            return Err(Error::Dims(format!("series has {} scans, design has {nt}", y.len())));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::Validation(format!("AR(1) coefficient {rho} must satisfy |rho| < 1")));
        }
        let r = self.rank;
        let (xw, yw) = if rho == 0.0 {
            (self.reduced.clone(), DVector::from_column_slice(y))
        } else {
            let head = (1.0 - rho * rho).sqrt();
            let xw = DMatrix::from_fn(nt, r, |t, j| {
                if t == 0 {
                    head * self.reduced[(0, j)]
                } else {
                    self.reduced[(t, j)] - rho * self.reduced[(t - 1, j)]
                }
            });
            let yw = DVector::from_fn(nt, |t, _| if t == 0 { head * y[0] } else { y[t] - rho * y[t - 1] });
            (xw, yw)
        };
        let gram = xw.tr_mul(&xw);
        let rhs = xw.tr_mul(&yw);
        let gram_inv = invert_spd(gram);
        let gamma = &gram_inv * rhs;
        let betas = &self.row_basis * &gamma;

        let fitted = &self.reduced * &gamma;
        let residuals: Vec<f64> = (0..nt).map(|t| y[t] - fitted[t]).collect();
        let rss = whiten_sum_squares(&residuals, rho);
        let dof = self.dof();
        let xtx_inv = &self.row_basis * gram_inv * self.row_basis.transpose();
        Ok(GlmFit { betas: betas.iter().copied().collect(), sigma2: rss / dof as f64, dof, rho, xtx_inv, residuals })
    }

    /// OLS, AR(1) estimate from its residuals, then one whitened refit.
    pub fn fit_prewhitened(&self, y: &[f64]) -> Result<GlmFit> {
        self.fit_prewhitened_with(y, None)
    }

    /// As [`Self::fit_prewhitened`], with the residual autocorrelation mapped
    /// through `correction` before whitening.
    pub fn fit_prewhitened_with(&self, y: &[f64], correction: Option<&Ar1Correction>) -> Result<GlmFit> {
        let ols = self.fit_ols(y)?;
        let r = estimate_ar1(&ols.residuals);
        let rho = correction.map_or(r, |c| c.apply(r));
        if rho == 0.0 {
            return Ok(ols);
        }
        self.fit_whitened(y, rho)
    }

    /// Bias correction for AR(1) estimates taken from this design's OLS residuals.
    pub fn ar1_correction(&self) -> Ar1Correction {
        let nt = self.nt();
        // columns of `reduced` are orthogonal; normalizing them gives a basis Q of col(X)
        let mut q = self.reduced.clone();
        for mut col in q.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        // A is the symmetric lag-1 matrix with 1/2 off the diagonal
        let aq = DMatrix::from_fn(nt, self.rank, |t, j| {
            let up = if t + 1 < nt { q[(t + 1, j)] } else { 0.0 };
            let down = if t > 0 { q[(t - 1, j)] } else { 0.0 };
            0.5 * (up + down)
        });
        let qaq = q.tr_mul(&aq);
        Ar1Correction {
            tr_r: self.dof() as f64,
            tr_ra: -qaq.trace(),
            tr_rara: (nt as f64 - 1.0) / 2.0 - 2.0 * aq.norm_squared() + qaq.norm_squared(),
        }
    }
}

/// First-order bias correction for the lag-1 autocorrelation of OLS
/// residuals. With residual projector `R = I - X X^+` and lag-1 operator `A`,
/// `E[r] ~ (tr(RA) + 2 rho tr(RARA)) / (tr(R) + 2 rho tr(RA))`; [`Self::apply`]
/// solves this for `rho`. Without it the estimate is biased by about
/// `-rank / nt`, which under-whitens and inflates false positives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1Correction {
    pub tr_r: f64,
    pub tr_ra: f64,
    pub tr_rara: f64,
}

impl Ar1Correction {
    pub fn apply(&self, r: f64) -> f64 {
        let denom = 2.0 * (self.tr_rara - r * self.tr_ra);
        if !(denom > 0.0) {
            return r.clamp(-RHO_CLAMP, RHO_CLAMP);
        }
        ((r * self.tr_r - self.tr_ra) / denom).clamp(-RHO_CLAMP, RHO_CLAMP)
    }
}

/// Inverse of a symmetric positive definite matrix; falls back to an
/// eigen-decomposition pseudoinverse if Cholesky fails.
fn invert_spd(m: DMatrix<f64>) -> DMatrix<f64> {
    match Cholesky::new(m.clone()) {
        Some(ch) => ch.inverse(),
        None => {
            let eig = SymmetricEigen::new(m);
            let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let cut = RANK_TOLERANCE * RANK_TOLERANCE * max;
            let inv_vals = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
        }
    }
}

fn whiten_sum_squares(e: &[f64], rho: f64) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let head = (1.0 - rho * rho) * e[0] * e[0];
    head + e.windows(2).map(|w| (w[1] - rho * w[0]).powi(2)).sum::<f64>()
}

/// Lag-1 autocorrelation of demeaned residuals, clamped to `[-0.95, 0.95]`.
pub fn estimate_ar1(residuals: &[f64]) -> f64 {
    let n = residuals.len();
    if n < 2 {
        return 0.0;
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
    (num / denom).clamp(-RHO_CLAMP, RHO_CLAMP)
}

/// Plain OLS of `y` on `design`.
pub fn fit_ols(y: &[f64], design: &DesignMatrix) -> Result<GlmFit> {
    GlmSolver::new(design)?.fit_ols(y)
}

/// One Cochrane–Orcutt refit: whitens with `rho` and solves by least squares.
pub fn prewhiten_and_refit(y: &[f64], design: &DesignMatrix, rho: f64) -> Result<GlmFit> {
    GlmSolver::new(design)?.fit_whitened(y, rho)
}

/// Contrast estimate and t-statistic. `t = 0` whenever the standard error is 0;
/// that case is flagged degenerate if the contrast itself is nonzero.
pub fn contrast_value(fit: &GlmFit, c: &Contrast) -> Result<ContrastValue> {
    if c.weights.len() != fit.betas.len() {
        return Err(Error::Dims(format!(
            "contrast has {} weights, fit has {} coefficients",
            c.weights.len(),
            fit.betas.len()
        )));
    }
    let value: f64 = c.weights.iter().zip(&fit.betas).map(|(w, b)| w * b).sum();
    let cv = DVector::from_column_slice(&c.weights);
    let quad = cv.dot(&(&fit.xtx_inv * &cv)).max(0.0);
    let se = (fit.sigma2 * quad).sqrt();
    Ok(if se > 0.0 && se.is_finite() {
        ContrastValue { value, se, t: value / se, degenerate: false }
    } else {
        ContrastValue { value, se: 0.0, t: 0.0, degenerate: value != 0.0 }
    })
}

/// Positive-part contrast and its t for a single voxel.
pub fn contrast_tmap(fit: &GlmFit, c: &Contrast) -> Result<(f64, f64)> {
    Ok(contrast_value(fit, c)?.positive_part())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmConfig {
    /// Cochrane–Orcutt prewhitening; `false` keeps plain OLS.
    pub prewhiten: bool,
    /// Use one AR(1) coefficient (mean of voxel estimates) for every voxel.
    pub pooled_rho: bool,
    /// Apply [`Ar1Correction`] to each voxel's residual autocorrelation.
    pub ar1_bias_correction: bool,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self { prewhiten: true, pooled_rho: false, ar1_bias_correction: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmSummary {
    pub dof: usize,
    pub rank: usize,
    pub n_columns: usize,
    pub n_voxels: usize,
    pub n_degenerate: usize,
    pub rho_mean: f64,
    /// Bin edges are `-0.95 + 0.1 * i`, `i = 0..=19`.
    pub rho_histogram: Vec<usize>,
}

/// Per-subject output of the first-level analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct TMapPair {
    pub speech_gt_silence: ScalarMap,
    pub silence_gt_speech: ScalarMap,
    /// Signed `speech - silence` contrast estimate.
    pub contrast: ScalarMap,
    pub rho: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub summary: GlmSummary,
}

impl TMapPair {
    /// Signed t reconstructed from the two positive-part maps.
    pub fn signed_t(&self) -> Vec<f64> {
        self.speech_gt_silence.data().iter().zip(self.silence_gt_speech.data()).map(|(a, b)| a - b).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct VoxelResult {
    contrast: f64,
    t: f64,
    rho: f64,
    degenerate: bool,
}

pub fn subject_tmaps(bold: &Volume4D, design: &DesignMatrix) -> Result<TMapPair> {
    subject_tmaps_with(bold, design, &GlmConfig::default())
}

pub fn subject_tmaps_with(bold: &Volume4D, design: &DesignMatrix, cfg: &GlmConfig) -> Result<TMapPair> {
    if bold.nt() != design.nt() {
        return Err(Error::Dims(format!("volume has {} scans, design has {} rows", bold.nt(), design.nt())));
    }
    let solver = GlmSolver::new(design)?;
    let c1 = Contrast::speech_gt_silence(design);
    let nvox = bold.dims().len();
    let correction = (cfg.prewhiten && cfg.ar1_bias_correction).then(|| solver.ar1_correction());

    let fit_voxel = |v: usize, rho: Option<f64>| -> Result<VoxelResult> {
        let y = bold.voxel_series(v);
        if y.iter().all(|&s| s == 0.0) {
            return Ok(VoxelResult { contrast: 0.0, t: 0.0, rho: 0.0, degenerate: true });
        }
        let fit = match (cfg.prewhiten, rho) {
            (false, _) => solver.fit_ols(&y)?,
            (true, None) => solver.fit_prewhitened_with(&y, correction.as_ref())?,
            (true, Some(r)) => solver.fit_whitened(&y, r)?,
        };
        let cv = contrast_value(&fit, &c1)?;
        let degenerate = cv.degenerate || (cv.se == 0.0 && cv.value == 0.0);
        Ok(VoxelResult { contrast: cv.value, t: cv.t, rho: fit.rho, degenerate })
    };

    let mut results: Vec<VoxelResult> = (0..nvox).into_par_iter().map(|v| fit_voxel(v, None)).collect::<Result<_>>()?;

    if cfg.prewhiten && cfg.pooled_rho {
        let live: Vec<f64> = results.iter().filter(|r| !r.degenerate).map(|r| r.rho).collect();
        let pooled = if live.is_empty() { 0.0 } else { live.iter().sum::<f64>() / live.len() as f64 };
        results = (0..nvox).into_par_iter().map(|v| fit_voxel(v, Some(pooled))).collect::<Result<_>>()?;
    }

    let dims = bold.dims();
    let t_pos: Vec<f64> = results.iter().map(|r| if r.t > 0.0 { r.t } else { 0.0 }).collect();
    let t_neg: Vec<f64> = results.iter().map(|r| if r.t < 0.0 { -r.t } else { 0.0 }).collect();
    let contrast: Vec<f64> = results.iter().map(|r| r.contrast).collect();
    let rho: Vec<f64> = results.iter().map(|r| r.rho).collect();
    let degenerate: Vec<bool> = results.iter().map(|r| r.degenerate).collect();

    let mut hist = vec![0usize; 19];
    let mut rho_sum = 0.0;
    let mut live = 0usize;
    for r in results.iter().filter(|r| !r.degenerate) {
        let bin = (((r.rho + RHO_CLAMP) / 0.1).floor() as isize).clamp(0, 18) as usize;
        hist[bin] += 1;
        rho_sum += r.rho;
        live += 1;
    }
    let summary = GlmSummary {
        dof: solver.dof(),
        rank: solver.rank(),
        n_columns: solver.ncols(),
        n_voxels: nvox,
        n_degenerate: degenerate.iter().filter(|&&d| d).count(),
        rho_mean: if live > 0 { rho_sum / live as f64 } else { 0.0 },
        rho_histogram: hist,
    };
    Ok(TMapPair {
        speech_gt_silence: ScalarMap::new(dims, MapKind::TmapSpeechGtSilence, t_pos)?,
        silence_gt_speech: ScalarMap::new(dims, MapKind::TmapSilenceGtSpeech, t_neg)?,
        contrast: ScalarMap::new(dims, MapKind::Contrast, contrast)?,
        rho,
        degenerate,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_col() -> DesignMatrix {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        DesignMatrix::from_columns(x, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn hand_solved_two_column_system() {
        let fit = fit_ols(&[1.0, 2.0, 3.0], &two_col()).unwrap();
        assert!((fit.betas[0] - 1.0).abs() < 1e-12);
        assert!((fit.betas[1] - 2.0).abs() < 1e-12);
        assert!(fit.sigma2 < 1e-24);
        assert_eq!(fit.dof, 1);
        // (X'X)^-1 = [[2,-1],[-1,2]] / 3
        assert!((fit.xtx_inv[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((fit.xtx_inv[(0, 1)] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hand_t_on_three_scans() {
        // y = [1, 2, 4]: X'y = [5, 6], beta = [4/3, 7/3], residuals = [-1/3, -1/3, 1/3],
        // RSS = 1/3, dof = 1; c = [1, -1]: c'(X'X)^-1 c = (2 + 2 + 2) / 3 = 2.
        let fit = fit_ols(&[1.0, 2.0, 4.0], &two_col()).unwrap();
        assert!((fit.sigma2 - 1.0 / 3.0).abs() < 1e-14);
        let c = Contrast { name: "d".into(), weights: vec![1.0, -1.0] };
        let cv = contrast_value(&fit, &c).unwrap();
        let expected = (4.0 / 3.0 - 7.0 / 3.0) / (1.0f64 / 3.0 * 2.0).sqrt();
        assert!((cv.t - expected).abs() < 1e-12);
        // C < 0: positive-part map stores zero; the reversed contrast is positive.
        assert_eq!(cv.positive_part(), (0.0, 0.0));
        let rev = Contrast { name: "r".into(), weights: vec![-1.0, 1.0] };
        let (c2, t2) = contrast_tmap(&fit, &rev).unwrap();
        assert!((c2 - 1.0).abs() < 1e-12);
        assert!((t2 + expected).abs() < 1e-12);
    }

    #[test]
    fn unit_sigma_t_matches_closed_form() {
        // sigma2 forced to 1: t = C / sqrt(c'(X'X)^-1 c).
        let mut fit = fit_ols(&[1.0, 2.0, 4.0], &two_col()).unwrap();
        fit.sigma2 = 1.0;
        let c = Contrast { name: "d".into(), weights: vec![1.0, -1.0] };
        let cv = contrast_value(&fit, &c).unwrap();
        assert!((cv.t - (-1.0 / 2.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn constant_series_on_intercept() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let d = DesignMatrix::from_columns(x, vec!["intercept".into()]).unwrap();
        let fit = fit_ols(&[5.0; 10], &d).unwrap();
        assert!((fit.betas[0] - 5.0).abs() < 1e-12);
        assert!(fit.sigma2 < 1e-24);
    }

    #[test]
    fn dof_error_when_saturated() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let d = DesignMatrix::from_columns(x, vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(fit_ols(&[1.0, 2.0], &d), Err(Error::Dof { nt: 2, rank: 2 })));
    }

    #[test]
    fn zero_rho_refit_is_bitwise_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(50, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = DesignMatrix::from_columns(x, (0..4).map(|i| format!("c{i}")).collect()).unwrap();
        let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let a = fit_ols(&y, &d).unwrap();
        let b = prewhiten_and_refit(&y, &d, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ar1_estimates() {
        assert_eq!(estimate_ar1(&[0.0; 20]), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = vec![0.0; 736];
        for t in 0..736 {
            let eta: f64 = rng.sample(StandardNormal);
            e[t] = if t == 0 { eta / (1.0f64 - 0.09).sqrt() } else { 0.3 * e[t - 1] + eta };
        }
        assert!((estimate_ar1(&e) - 0.3).abs() < 0.05);
        assert_eq!(estimate_ar1(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 0.0);
        let alternating: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(estimate_ar1(&alternating), -RHO_CLAMP);
    }

    #[test]
    fn white_noise_ar1_is_small() {
        let mut fails = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..736).map(|_| rng.sample(StandardNormal)).collect();
            if estimate_ar1(&e).abs() >= 0.08 {
                fails += 1;
            }
        }
        assert!(fails <= 2, "{fails} of 200 seeds exceeded 0.08");
    }

    #[test]
    fn whitening_exact_ar1_sequence_gives_white_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nt = 736;
        let rho: f64 = 0.5;
        let mut e = vec![0.0; nt];
        for t in 0..nt {
            let eta: f64 = rng.sample(StandardNormal);
            e[t] = if t == 0 { eta / (1.0 - rho * rho).sqrt() } else { rho * e[t - 1] + eta };
        }
        let whitened: Vec<f64> = (1..nt).map(|t| e[t] - rho * e[t - 1]).collect();
        let r1 = estimate_ar1(&whitened);
        assert!(r1.abs() < 0.05, "lag-1 autocorrelation {r1}");
    }

    #[test]
    fn scaling_y_scales_contrast_not_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(60, 3, |_, j| if j == 2 { 1.0 } else { rng.sample(StandardNormal) });
        let d = DesignMatrix::from_columns(x, vec!["a".into(), "b".into(), "i".into()]).unwrap();
        let y: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let c = Contrast { name: "d".into(), weights: vec![1.0, -1.0, 0.0] };
        let solver = GlmSolver::new(&d).unwrap();
        let base = contrast_value(&solver.fit_prewhitened(&y).unwrap(), &c).unwrap();
        let k = 7.5;
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        let scaled = contrast_value(&solver.fit_prewhitened(&ys).unwrap(), &c).unwrap();
        assert!((scaled.value - k * base.value).abs() < 1e-10 * k * base.value.abs().max(1.0));
        assert!((scaled.t - base.t).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_uses_min_norm_solution() {
        // Duplicate column: min-norm solution splits the weight equally.
        let x = DMatrix::from_fn(20, 3, |t, j| if j == 2 { 1.0 } else { (t as f64).sin() });
        let d = DesignMatrix::from_columns(x, vec!["a".into(), "a2".into(), "i".into()]).unwrap();
        assert_eq!(d.rank(), 2);
        let y: Vec<f64> = (0..20).map(|t| 4.0 * (t as f64).sin() + 1.0).collect();
        let fit = fit_ols(&y, &d).unwrap();
        assert!((fit.betas[0] - 2.0).abs() < 1e-10);
        assert!((fit.betas[1] - 2.0).abs() < 1e-10);
        assert_eq!(fit.dof, 18);
    }

    #[test]
    fn ar1_correction_traces_match_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nt = 40;
        let x = DMatrix::from_fn(nt, 4, |_, j| if j == 3 { 1.0 } else { rng.sample(StandardNormal) });
        let solver = GlmSolver::from_matrix(x.clone()).unwrap();
        let c = solver.ar1_correction();
        let pinv = x.clone().pseudo_inverse(1e-12).unwrap();
        let r = DMatrix::identity(nt, nt) - &x * pinv;
        let a = DMatrix::from_fn(nt, nt, |i, j| if i.abs_diff(j) == 1 { 0.5 } else { 0.0 });
        let ra = &r * &a;
        assert!((c.tr_r - r.trace()).abs() < 1e-9);
        assert!((c.tr_ra - ra.trace()).abs() < 1e-9);
        assert!((c.tr_rara - (&ra * &ra).trace()).abs() < 1e-9);
    }

    #[test]
    fn ar1_correction_removes_small_sample_bias() {
        // white noise residuals read about -rank/nt before correction
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let nt = 80;
        let x = DMatrix::from_fn(nt, 8, |t, j| if j == 7 { 1.0 } else { ((t * (j + 1)) as f64 * 0.04).sin() });
        let solver = GlmSolver::from_matrix(x).unwrap();
        let c = solver.ar1_correction();
        let (mut raw, mut fixed) = (0.0, 0.0);
        let reps = 400;
        for _ in 0..reps {
            let y: Vec<f64> = (0..nt).map(|_| rng.sample(StandardNormal)).collect();
            let r = estimate_ar1(&solver.fit_ols(&y).unwrap().residuals);
            raw += r;
            fixed += c.apply(r);
        }
        let (raw, fixed) = (raw / reps as f64, fixed / reps as f64);
        assert!(raw < -0.06, "{raw}");
        // the correction is first order, so a small remainder is allowed
        assert!(fixed.abs() < raw.abs() / 3.0, "raw {raw}, corrected {fixed}");
    }
}
