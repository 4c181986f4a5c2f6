//! Distribution helpers shared by the group test, the correlation filter
//! and null-calibration checks.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

fn student(dof: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, dof).expect("dof must be positive")
}

/// `P(T > t)` for Student t with `dof` degrees of freedom.
pub fn t_sf(t: f64, dof: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    student(dof).sf(t)
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    (2.0 * t_sf(t.abs(), dof)).min(1.0)
}

/// Quantile of Student t, refined by Newton steps on the CDF.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability {p} outside (0, 1)");
    let dist = student(dof);
    let mut x = dist.inverse_cdf(p);
    for _ in 0..4 {
        // F(x) - p, evaluated on the tail that keeps precision.
        let err = if p > 0.5 { (1.0 - p) - dist.sf(x) } else { dist.cdf(x) - p };
        let dens = statrs::distribution::Continuous::pdf(&dist, x);
        if dens <= 0.0 || !err.is_finite() {
            break;
        }
        let step = err / dens;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Upper critical value for a one-sided test at level `alpha`.
pub fn t_critical_one_sided(alpha: f64, dof: f64) -> f64 {
    t_quantile(1.0 - alpha, dof)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Pearson correlation; `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation over `n` pairs via `t = r sqrt(n-2) / sqrt(1-r^2)`.
pub fn pearson_p(r: f64, n: usize) -> f64 {
    let dof = n as f64 - 2.0;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    t_two_sided_p(r * dof.sqrt() / denom.sqrt(), dof)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn sd_population(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
