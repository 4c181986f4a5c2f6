//! L1-penalized linear SVM with squared hinge loss, solved by coordinate
//! descent with a one-dimensional Newton step and Armijo backtracking.
//!
//! Objective: `|w|_1 + C * sum_i max(0, 1 - y_i (w . x_i + b))^2`, with the
//! bias `b` left unpenalized.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_two_classes, signed_labels};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L1SvcConfig {
    pub c: f64,
    pub tol: f64,
    pub threshold: f64,
    pub max_sweeps: usize,
}

impl Default for L1SvcConfig {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-4, threshold: 1e-5, max_sweeps: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct L1SvcModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub sweeps: usize,
}

impl L1SvcModel {
    pub fn objective(&self, x: &DMatrix<f64>, y: &[bool], c: f64) -> f64 {
        let ys = signed_labels(y);
        let l1: f64 = self.weights.iter().map(|w| w.abs()).sum();
        let loss: f64 = (0..x.nrows())
            .map(|i| {
                let f = (0..x.ncols()).map(|j| x[(i, j)] * self.weights[j]).sum::<f64>() + self.bias;
                (1.0 - ys[i] * f).max(0.0).powi(2)
            })
            .sum();
        l1 + c * loss
    }
}

const SIGMA: f64 = 0.01;
const BETA: f64 = 0.5;
const MAX_BACKTRACK: usize = 30;
const MAX_INNER: usize = 10;

/// Change in `C * sum max(0, b_i)^2` when margins move by `-step * y_i x_i`.
fn loss_delta(b: &[f64], ys: &[f64], col: &[f64], step: f64, c: f64) -> f64 {
    let mut d = 0.0;
    for i in 0..b.len() {
        let old = b[i].max(0.0);
        let new = (b[i] - step * ys[i] * col[i]).max(0.0);
        d += new * new - old * old;
    }
    c * d
}

fn grad_hess(b: &[f64], ys: &[f64], col: &[f64], c: f64) -> (f64, f64) {
    let (mut g, mut h) = (0.0, 0.0);
    for i in 0..b.len() {
        if b[i] > 0.0 {
            g -= ys[i] * col[i] * b[i];
            h += col[i] * col[i];
        }
    }
    (2.0 * c * g, (2.0 * c * h).max(1e-12))
}

fn violation(w: f64, g: f64) -> f64 {
    if w > 0.0 {
        (g + 1.0).abs()
    } else if w < 0.0 {
        (g - 1.0).abs()
    } else {
        (g.abs() - 1.0).max(0.0)
    }
}

pub fn l1svc_fit(x: &DMatrix<f64>, y: &[bool], cfg: &L1SvcConfig) -> Result<L1SvcModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dims(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    check_two_classes(y)?;
    if !(cfg.c > 0.0) {
        return Err(Error::Config(format!("L1 selection C must be positive, got {}", cfg.c)));
    }
    let n = x.nrows();
    let p = x.ncols();
    let ys = signed_labels(y);
    let ones = vec![1.0; n];
    let mut w = vec![0.0; p];
    let mut bias = 0.0;
    // b_i = 1 - y_i f(x_i)
    let mut b = vec![1.0; n];

    let mut initial_violation = None;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_violation: f64 = 0.0;

        // Unpenalized bias: plain Newton step with backtracking.
        let (g, h) = grad_hess(&b, &ys, &ones, cfg.c);
        max_violation = max_violation.max(g.abs());
        let d = -g / h;
        if d != 0.0 {
            let mut step = d;
            for _ in 0..MAX_BACKTRACK {
                if loss_delta(&b, &ys, &ones, step, cfg.c) <= SIGMA * step * g {
                    break;
                }
                step *= BETA;
            }
            bias += step;
            for i in 0..n {
                b[i] -= step * ys[i];
            }
        }

        for j in 0..p {
            let col = x.column(j);
            let col = col.as_slice();
            // several Newton steps per coordinate so duplicated columns stay at zero
            for inner in 0..MAX_INNER {
                let (g, h) = grad_hess(&b, &ys, col, cfg.c);
                let wj = w[j];
                let v = violation(wj, g);
                if inner == 0 {
                    max_violation = max_violation.max(v);
                }
                if v <= 1e-12 {
                    break;
                }
                let d = if g + 1.0 <= h * wj {
                    -(g + 1.0) / h
                } else if g - 1.0 >= h * wj {
                    -(g - 1.0) / h
                } else {
                    -wj
                };
                if d.abs() < 1e-14 {
                    break;
                }
                let mut lambda = 1.0;
                let mut accepted = false;
                for _ in 0..MAX_BACKTRACK {
                    let step = lambda * d;
                    let reg = (wj + step).abs() - wj.abs();
                    let bound = SIGMA * lambda * (g * d + (wj + d).abs() - wj.abs());
                    if reg + loss_delta(&b, &ys, col, step, cfg.c) <= bound {
                        accepted = true;
                        break;
                    }
                    lambda *= BETA;
                }
                if !accepted {
                    break;
                }
                let step = lambda * d;
                w[j] += step;
                for i in 0..n {
                    b[i] -= step * ys[i] * col[i];
                }
            }
        }

        let init = *initial_violation.get_or_insert(max_violation.max(1e-12));
        if max_violation <= cfg.tol * init {
            break;
        }
    }
    Ok(L1SvcModel { weights: w, bias, sweeps })
}

/// Columns with `|w| >= threshold`; when none survive, the column with the
/// largest `|r|` is returned instead.
pub fn l1svc_select(x: &DMatrix<f64>, y: &[bool], cfg: &L1SvcConfig, abs_r: &[f64]) -> Result<Vec<usize>> {
    if abs_r.len() != x.ncols() {
        return Err(Error::Dims(format!("{} columns vs {} correlations", x.ncols(), abs_r.len())));
    }
    if x.ncols() == 0 {
        return Err(Error::Training("no candidate columns for selection".into()));
    }
    let model = l1svc_fit(x, y, cfg)?;
    let selected: Vec<usize> = (0..x.ncols()).filter(|&j| model.weights[j].abs() >= cfg.threshold).collect();
    if !selected.is_empty() {
        return Ok(selected);
    }
    let best = (0..x.ncols()).fold(0, |best, j| if abs_r[j] > abs_r[best] { j } else { best });
    Ok(vec![best])
}
