use nalgebra::DMatrix;

use crate::stats::{pearson, pearson_p};

/// Pearson r of every column against `scores`; `None` for constant columns.
pub fn pearson_columns(x: &DMatrix<f64>, scores: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(x.nrows(), scores.len(), "row count mismatch");
    x.column_iter().map(|c| pearson(c.as_slice(), scores)).collect()
}

/// Columns whose correlation with `scores` has two-sided p < `alpha`.
pub fn pearson_filter(x: &DMatrix<f64>, scores: &[f64], alpha: f64) -> Vec<usize> {
    let n = scores.len();
    if n < 4 {
        return Vec::new();
    }
    pearson_columns(x, scores)
        .into_iter()
        .enumerate()
        .filter_map(|(j, r)| r.filter(|&r| pearson_p(r, n) < alpha).map(|_| j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_and_constant_columns() {
        let scores = [18.0, 22.0, 25.0, 12.0, 29.0, 20.0];
        let mut x = DMatrix::from_element(6, 2, 3.0);
        x.column_mut(0).copy_from_slice(&scores);
        assert_eq!(pearson_filter(&x, &scores, 0.01), vec![0]);
    }

    proptest! {
        #[test]
        fn affine_rescaling_of_scores_keeps_selection(
            data in prop::collection::vec(-5.0f64..5.0, 8 * 12),
            scores in prop::collection::vec(0.0f64..30.0, 8),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let mut x = DMatrix::from_vec(8, 12, data);
            // make a couple of columns correlated so the selected set is not always empty
            for j in 0..3 {
                for i in 0..8 {
                    x[(i, j)] += scores[i] * (j as f64 + 1.0);
                }
            }
            let scaled: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            prop_assert_eq!(pearson_filter(&x, &scores, 0.01), pearson_filter(&x, &scaled, 0.01));
        }
    }
}
