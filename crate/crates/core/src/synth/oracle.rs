//! Reference GLM on plain row-major arrays: normal equations, explicit
//! inverse by Gauss-Jordan, Jacobi-eigen pseudoinverse when singular. Meant
//! for small problems only and deliberately independent of `glm`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleFit {
    /// One coefficient vector per voxel.
    pub betas: Vec<Vec<f64>>,
    /// Contrast t per voxel (0 where the standard error is 0).
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub rank: usize,
}

type Mat = Vec<Vec<f64>>;

fn gram(x: &Mat) -> Mat {
    let p = x[0].len();
    let mut g = vec![vec![0.0; p]; p];
    for row in x {
        for i in 0..p {
            for j in 0..p {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    g
}

/// Inverse by Gauss-Jordan with partial pivoting; `None` if a pivot is tiny.
fn gauss_jordan_inverse(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-11 * scale {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Moore-Penrose inverse of a symmetric PSD matrix and its rank.
fn eigen_pinv(a: &Mat) -> (Mat, usize) {
    let n = a.len();
    let (vals, vecs) = jacobi_eigen(a);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..n).filter(|&k| vals[k] > 1e-10 * top).collect();
    let mut out = vec![vec![0.0; n]; n];
    for &k in &keep {
        for i in 0..n {
            for j in 0..n {
                out[i][j] += vecs[i][k] * vecs[j][k] / vals[k];
            }
        }
    }
    (out, keep.len())
}

fn inverse_and_rank(g: &Mat) -> (Mat, usize) {
    match gauss_jordan_inverse(g) {
        Some(inv) => (inv, g.len()),
        None => eigen_pinv(g),
    }
}

struct Solved {
    beta: Vec<f64>,
    resid: Vec<f64>,
    sigma2: f64,
    inv: Mat,
}

fn solve(x: &Mat, y: &[f64]) -> Result<(Solved, usize)> {
    let n = x.len();
    let p = x[0].len();
    let (inv, rank) = inverse_and_rank(&gram(x));
    if n <= rank {
        return Err(Error::Dof { nt: n, rank });
    }
    let xty: Vec<f64> = (0..p).map(|j| (0..n).map(|t| x[t][j] * y[t]).sum()).collect();
    let beta: Vec<f64> = (0..p).map(|i| (0..p).map(|j| inv[i][j] * xty[j]).sum()).collect();
    let resid: Vec<f64> = (0..n).map(|t| y[t] - (0..p).map(|j| x[t][j] * beta[j]).sum::<f64>()).collect();
    let sigma2 = resid.iter().map(|r| r * r).sum::<f64>() / (n - rank) as f64;
    Ok((Solved { beta, resid, sigma2, inv }, rank))
}

fn lag1(resid: &[f64]) -> f64 {
    let n = resid.len() as f64;
    let m = resid.iter().sum::<f64>() / n;
    let d: Vec<f64> = resid.iter().map(|r| r - m).collect();
    let den: f64 = d.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
    (num / den).clamp(-0.95, 0.95)
}

fn whiten(rows: &[Vec<f64>], rho: f64) -> Mat {
    let s = (1.0 - rho * rho).sqrt();
    (0..rows.len())
        .map(|t| {
            if t == 0 {
                rows[0].iter().map(|v| v * s).collect()
            } else {
                rows[t].iter().zip(&rows[t - 1]).map(|(a, b)| a - rho * b).collect()
            }
        })
        .collect()
}

/// How the oracle picks each voxel's AR(1) coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleAr1 {
    /// Plain OLS.
    Off,
    /// Lag-1 autocorrelation of the OLS residuals.
    Raw,
    /// The same estimate with the residual-projector bias removed.
    Corrected,
}

/// `(tr R, tr RA, tr RARA)` with `R = I - X (X'X)^+ X'` built explicitly.
fn projector_traces(x: &Mat) -> (f64, f64, f64) {
    let n = x.len();
    let p = x[0].len();
    let (inv, _) = inverse_and_rank(&gram(x));
    let xi: Mat = (0..n).map(|t| (0..p).map(|j| (0..p).map(|k| x[t][k] * inv[k][j]).sum()).collect()).collect();
    let r: Mat = (0..n)
        .map(|s| {
            (0..n)
                .map(|t| {
                    let h: f64 = (0..p).map(|j| xi[s][j] * x[t][j]).sum();
                    if s == t {
                        1.0 - h
                    } else {
                        -h
                    }
                })
                .collect()
        })
        .collect();
    // (RA)[s][t] = (R[s][t-1] + R[s][t+1]) / 2
    let ra: Mat = (0..n)
        .map(|s| {
            (0..n)
                .map(|t| {
                    let a = if t > 0 { r[s][t - 1] } else { 0.0 };
                    let b = if t + 1 < n { r[s][t + 1] } else { 0.0 };
                    0.5 * (a + b)
                })
                .collect()
        })
        .collect();
    let tr_r: f64 = (0..n).map(|i| r[i][i]).sum();
    let tr_ra: f64 = (0..n).map(|i| ra[i][i]).sum();
    let tr_rara: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ra[i][j] * ra[j][i]).sum();
    (tr_r, tr_ra, tr_rara)
}

/// Per-voxel betas and contrast t for `series` (one vector per voxel) under
/// design rows `x`. Unless `ar1` is `Off`, each voxel is refitted after an
/// AR(1) transform whose coefficient comes from its OLS residuals.
pub fn oracle_glm(series: &[Vec<f64>], x: &[Vec<f64>], contrast: &[f64], ar1: OracleAr1) -> Result<OracleFit> {
    if x.is_empty() || x[0].len() != contrast.len() {
        return Err(Error::Dims("contrast length must match design columns".into()));
    }
    let traces = (ar1 == OracleAr1::Corrected).then(|| projector_traces(&x.to_vec()));
    let mut out = OracleFit { betas: Vec::new(), t: Vec::new(), rho: Vec::new(), sigma2: Vec::new(), rank: 0 };
    for y in series {
        if y.len() != x.len() {
            return Err(Error::Dims(format!("series of {} vs design of {} rows", y.len(), x.len())));
        }
        let (ols, rank) = solve(&x.to_vec(), y)?;
        let rho = match (ar1, traces) {
            (OracleAr1::Off, _) => 0.0,
            (OracleAr1::Corrected, Some((a, b, c))) => {
                // solve r = (b + 2 rho c) / (a + 2 rho b) for rho
                let r = lag1(&ols.resid);
                ((r * a - b) / (2.0 * c - 2.0 * r * b)).clamp(-0.95, 0.95)
            }
            _ => lag1(&ols.resid),
        };
        let (fit, rank) = if rho != 0.0 {
            let yw: Vec<f64> =
                whiten(&y.iter().map(|v| vec![*v]).collect::<Vec<_>>(), rho).into_iter().map(|r| r[0]).collect();
            solve(&whiten(x, rho), &yw)?
        } else {
            (ols, rank)
        };
        let p = contrast.len();
        let effect: f64 = (0..p).map(|j| contrast[j] * fit.beta[j]).sum();
        let q: f64 = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| contrast[i] * fit.inv[i][j] * contrast[j])
            .sum();
        let se = (fit.sigma2 * q.max(0.0)).sqrt();
        out.t.push(if se > 0.0 { effect / se } else { 0.0 });
        out.betas.push(fit.beta);
        out.rho.push(rho);
        out.sigma2.push(fit.sigma2);
        out.rank = rank;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_solved_two_columns() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let f = oracle_glm(&[vec![1.0, 2.0, 3.0]], &x, &[1.0, -1.0], OracleAr1::Off).unwrap();
        assert!((f.betas[0][0] - 1.0).abs() < 1e-12);
        assert!((f.betas[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_design_uses_min_norm() {
        // duplicated column: min-norm splits the effect evenly
        let x: Mat = (0..6).map(|t| vec![t as f64, t as f64, 1.0]).collect();
        let y: Vec<f64> = (0..6).map(|t| 2.0 * t as f64 + 1.0).collect();
        let f = oracle_glm(&[y], &x, &[1.0, 0.0, 0.0], OracleAr1::Off).unwrap();
        assert_eq!(f.rank, 2);
        assert!((f.betas[0][0] - 1.0).abs() < 1e-9);
        assert!((f.betas[0][1] - 1.0).abs() < 1e-9);
        assert!((f.betas[0][2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_traces() {
        // R = I - J/n for an intercept-only design
        let n = 5;
        let x: Mat = (0..n).map(|_| vec![1.0]).collect();
        let (a, b, _) = projector_traces(&x);
        assert!((a - 4.0).abs() < 1e-12);
        // tr(A) - 1'A1/n = 0 - (n-1)/n
        assert!((b + 0.8).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]];
        let (vals, vecs) = jacobi_eigen(&a);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs[i][k] * vals[k] * vecs[j][k]).sum();
                assert!((r - a[i][j]).abs() < 1e-12);
            }
        }
    }
}
