use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal_cdf;

/// Midranks (1-based) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney rank sum; ties count 1/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dims(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

pub const WILCOXON_EXACT_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// `min(W+, W-)`.
    pub w: f64,
    pub p: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Paired two-sided Wilcoxon signed-rank test on `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!("{} vs {} paired values", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("identical paired samples".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).fold(0.0, |acc, (r, _)| acc + r);
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX_N {
        // distribution of W+ over the 2^n sign patterns, on doubled ranks so
        // midranks stay integral
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let target = (w * 2.0).round() as usize;
        let tail: u64 = counts[..=target].iter().sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(Wilcoxon { w, p, n, exact: true });
    }
    Ok(Wilcoxon { w, p: normal_approx_p(w, &ranks), n, exact: false })
}

/// Normal approximation with tie and continuity corrections.
pub(crate) fn normal_approx_p(w: f64, ranks: &[f64]) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean + 0.5).min(0.0) / var.sqrt();
    (2.0 * normal_cdf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        let l = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &l).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::AucUndefined)));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            scores in prop::collection::vec(0u8..5, 8),
            labels in prop::collection::vec(any::<bool>(), 8),
        ) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(roc_auc(&s, &labels).unwrap(), brute_auc(&s, &labels));
        }

        #[test]
        fn negated_scores_complement(
            scores in prop::collection::hash_set(-1000i32..1000, 6),
            labels in prop::collection::vec(any::<bool>(), 6),
        ) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let a = roc_auc(&s, &labels).unwrap();
            prop_assert!((a + roc_auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wilcoxon_five_positive() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.w, 0.0);
        assert!((r.p - 0.0625).abs() < 1e-15);
        assert!(r.exact);
        let approx = normal_approx_p(0.0, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((approx - r.p).abs() < 0.02, "{approx}");
    }

    #[test]
    fn wilcoxon_identical_is_degenerate() {
        let a = [0.5, 0.7, 0.9];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn wilcoxon_large_sample_reference() {
        // scipy.stats.wilcoxon(d, method="approx", correction=True) for
        // d_i = (i % 7) - 2.5 + 0.01 i, i = 0..40
        let d: Vec<f64> = (0..40).map(|i| (i % 7) as f64 - 2.5 + 0.01 * i as f64).collect();
        let r = wilcoxon_signed_rank(&d, &vec![0.0; 40]).unwrap();
        assert!(!r.exact);
        assert_eq!(r.w, WILCOXON_LARGE_REF.0);
        assert!((r.p - WILCOXON_LARGE_REF.1).abs() < 1e-9, "{}", r.p);
    }

    #[test]
    fn wilcoxon_tied_reference() {
        // scipy.stats.wilcoxon(d, method="approx", correction=True,
        // zero_method="wilcox"), d_i = (i % 5) - 1.5 + 0.5 [i % 3 == 0]
        let d: Vec<f64> = (0..30).map(|i| (i % 5) as f64 - 1.5 + if i % 3 == 0 { 0.5 } else { 0.0 }).collect();
        let r = wilcoxon_signed_rank(&d, &vec![0.0; 30]).unwrap();
        assert_eq!(r.n, 28);
        assert_eq!(r.w, 105.0);
        assert!((r.p - 0.025_482_241_876_370_007).abs() < 1e-9, "{}", r.p);
    }

    const WILCOXON_LARGE_REF: (f64, f64) = (279.0, 0.079_415_207_024_136_38);
}
