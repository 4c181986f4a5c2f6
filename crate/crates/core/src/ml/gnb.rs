use nalgebra::DMatrix;

use super::check_two_classes;
use crate::error::{Error, Result};

/// Two-class Gaussian naive Bayes; index 0 is the negative class.
#[derive(Clone, Debug, PartialEq)]
pub struct GnbModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub var_smoothing: f64,
}

pub fn gnb_fit(x: &DMatrix<f64>, y: &[bool]) -> Result<GnbModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dims(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    check_two_classes(y)?;
    let p = x.ncols();
    let n = x.nrows() as f64;
    let max_var = x
        .column_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    let eps = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };

    let mut priors = [0.0; 2];
    let mut means = [vec![0.0; p], vec![0.0; p]];
    let mut variances = [vec![0.0; p], vec![0.0; p]];
    for k in 0..2 {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == (k == 1)).collect();
        let nk = rows.len() as f64;
        priors[k] = nk / n;
        for j in 0..p {
            let m = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / nk;
            let v = rows.iter().map(|&i| (x[(i, j)] - m).powi(2)).sum::<f64>() / nk;
            means[k][j] = m;
            variances[k][j] = v + eps;
        }
    }
    Ok(GnbModel { priors, means, variances, var_smoothing: eps })
}

impl GnbModel {
    fn joint_log_likelihood(&self, x: &[f64], k: usize) -> f64 {
        let mut ll = self.priors[k].ln();
        for (j, &v) in x.iter().enumerate() {
            let var = self.variances[k][j];
            ll -= 0.5 * (2.0 * std::f64::consts::PI * var).ln();
            ll -= (v - self.means[k][j]).powi(2) / (2.0 * var);
        }
        ll
    }

    /// Posterior probabilities `[P(negative | x), P(positive | x)]` per row.
    pub fn posteriors(&self, x: &DMatrix<f64>) -> Vec<[f64; 2]> {
        assert_eq!(x.ncols(), self.means[0].len(), "feature width mismatch");
        (0..x.nrows())
            .map(|r| {
                let xr: Vec<f64> = x.row(r).iter().copied().collect();
                let l0 = self.joint_log_likelihood(&xr, 0);
                let l1 = self.joint_log_likelihood(&xr, 1);
                let m = l0.max(l1);
                let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                [e0 / (e0 + e1), e1 / (e0 + e1)]
            })
            .collect()
    }

    /// Positive-class posterior per row.
    pub fn scores(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.posteriors(x).into_iter().map(|p| p[1]).collect()
    }
}
