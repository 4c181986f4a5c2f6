//! Soft-margin SVC solved in the dual by SMO with second-order working-set
//! selection.
//!
//! Dual: `min 0.5 a'Qa - e'a` s.t. `0 <= a_i <= C`, `y'a = 0`, with
//! `Q_ij = y_i y_j K(x_i, x_j)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_two_classes, signed_labels};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `gamma = None` uses `1 / (n_features * var(X))`.
    Rbf {
        gamma: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvcConfig {
    pub c: f64,
    pub kernel: Kernel,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self { c: 1.0, kernel: Kernel::Linear, tol: 1e-4, max_iter: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvcModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Resolved rbf width; unused for the linear kernel.
    pub gamma: f64,
    /// `alpha_i * y_i` for every training row.
    pub dual_coef: Vec<f64>,
    pub alpha: Vec<f64>,
    pub support: DMatrix<f64>,
    pub bias: f64,
    /// Explicit primal weights (linear kernel only).
    pub weights: Option<Vec<f64>>,
    pub iterations: usize,
    pub dual_objective: f64,
}

fn kernel_value(kind: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Kernel::Rbf { .. } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            (-gamma * d2).exp()
        }
    }
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn resolve_gamma(kernel: Kernel, x: &DMatrix<f64>) -> f64 {
    match kernel {
        Kernel::Linear => 0.0,
        Kernel::Rbf { gamma: Some(g) } => g,
        Kernel::Rbf { gamma: None } => {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let denom = x.ncols() as f64 * var;
            if denom > 0.0 {
                1.0 / denom
            } else {
                1.0
            }
        }
    }
}

pub fn svc_fit(x: &DMatrix<f64>, y: &[bool], cfg: &SvcConfig) -> Result<SvcModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dims(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    check_two_classes(y)?;
    if !(cfg.c > 0.0) {
        return Err(Error::Config(format!("SVC C must be positive, got {}", cfg.c)));
    }
    let n = x.nrows();
    let ys = signed_labels(y);
    let gamma = resolve_gamma(cfg.kernel, x);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(x, i)).collect();
    let q = DMatrix::from_fn(n, n, |i, j| ys[i] * ys[j] * kernel_value(cfg.kernel, gamma, &rows[i], &rows[j]));
    let c = cfg.c;

    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: Q a - e
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // i: maximal violating index in I_up
        let mut i_sel = None;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], ys[t]) {
                let v = -ys[t] * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(alpha[t], ys[t]) {
                    continue;
                }
                let v = -ys[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let a = q[(i, i)] + q[(t, t)] - 2.0 * ys[i] * ys[t] * q[(i, t)];
                    let a = if a > 0.0 { a } else { TAU };
                    let obj = -(b * b) / a;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = g_max - g_min;
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if gap <= cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::Convergence { iterations, gap });
        }
        iterations += 1;

        // two-variable subproblem (LIBSVM update)
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let quad = (q[(i, i)] + q[(j, j)] + 2.0 * q[(i, j)]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q[(i, i)] + q[(j, j)] - 2.0 * q[(i, j)]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += q[(t, i)] * di + q[(t, j)] * dj;
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let bias = -rho;

    let dual_objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] - 1.0)).sum::<f64>();
    let dual_coef: Vec<f64> = (0..n).map(|t| alpha[t] * ys[t]).collect();
    let weights = matches!(cfg.kernel, Kernel::Linear)
        .then(|| (0..x.ncols()).map(|f| (0..n).map(|t| dual_coef[t] * x[(t, f)]).sum()).collect());
    Ok(SvcModel {
        kernel: cfg.kernel,
        c,
        gamma,
        dual_coef,
        alpha,
        support: x.clone(),
        bias,
        weights,
        iterations,
        dual_objective,
    })
}

impl SvcModel {
    /// Signed decision values `sum_i a_i y_i K(x_i, x) + b`.
    pub fn decision(&self, x: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(x.ncols(), self.support.ncols(), "feature width mismatch");
        (0..x.nrows())
            .map(|r| {
                let xr = row(x, r);
                match &self.weights {
                    Some(w) => w.iter().zip(&xr).map(|(a, b)| a * b).sum::<f64>() + self.bias,
                    None => {
                        (0..self.support.nrows())
                            .filter(|&t| self.dual_coef[t] != 0.0)
                            .map(|t| {
                                self.dual_coef[t] * kernel_value(self.kernel, self.gamma, &row(&self.support, t), &xr)
                            })
                            .sum::<f64>()
                            + self.bias
                    }
                }
            })
            .collect()
    }

    /// Sum of hinge losses on labelled data.
    pub fn hinge_loss(&self, x: &DMatrix<f64>, y: &[bool]) -> f64 {
        self.decision(x).iter().zip(signed_labels(y)).map(|(f, yi)| (1.0 - yi * f).max(0.0)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_pair() {
        let x = DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let m = svc_fit(&x, &[false, true], &SvcConfig::default()).unwrap();
        let d = m.decision(&DMatrix::from_element(1, 1, 0.0));
        assert!(d[0].abs() < 1e-12);
        assert!((m.weights.as_ref().unwrap()[0] - 1.0).abs() < 1e-9);
        assert!((m.alpha[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn hard_margin_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = DMatrix::zeros(30, 2);
        let mut y = vec![false; 30];
        for i in 0..30 {
            y[i] = i % 2 == 0;
            let shift = if y[i] { 2.0 } else { -2.0 };
            x[(i, 0)] = shift + rng.random_range(-1.0..1.0);
            x[(i, 1)] = rng.random_range(-3.0..3.0);
        }
        // the residual loss is bounded by the stopping gap
        let m = svc_fit(&x, &y, &SvcConfig { c: 1e6, ..Default::default() }).unwrap();
        assert!(m.hinge_loss(&x, &y) < 30.0 * 1e-4);
        let m = svc_fit(&x, &y, &SvcConfig { c: 1e6, tol: 1e-12, ..Default::default() }).unwrap();
        assert!(m.hinge_loss(&x, &y) < 1e-9);
    }

    #[test]
    fn zero_feature_leaves_decision_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<bool> = (0..12).map(|i| x[(i, 0)] + 0.3 * x[(i, 1)] > 0.0).collect();
        let mut padded = DMatrix::zeros(12, 4);
        padded.columns_mut(0, 3).copy_from(&x);
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: Some(0.5) }] {
            let cfg = SvcConfig { kernel, ..Default::default() };
            let a = svc_fit(&x, &y, &cfg).unwrap().decision(&x);
            let b = svc_fit(&padded, &y, &cfg).unwrap().decision(&padded);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let x = DMatrix::from_column_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let cfg = SvcConfig { max_iter: 0, ..Default::default() };
        match svc_fit(&x, &[false, false, true, true], &cfg) {
            Err(Error::Convergence { gap, .. }) => assert!(gap > 0.0),
            other => panic!("{other:?}"),
        }
    }
}
