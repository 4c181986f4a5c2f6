use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TmapSpeech,
    TmapSilence,
    Demographic,
}

/// Subjects × features, with a name and a source for every column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
    provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>, provenance: Vec<Provenance>) -> Result<Self> {
        if names.len() != values.ncols() || provenance.len() != values.ncols() {
            return Err(Error::Dims(format!(
                "{} columns, {} names, {} provenance tags",
                values.ncols(),
                names.len(),
                provenance.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {}, column {}",
                bad % values.nrows(),
                bad / values.nrows()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Validation(format!("duplicate feature name {dup}")));
        }
        Ok(Self { values, names, provenance })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Column-wise concatenation; both sides must have the same rows.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.nrows() != other.nrows() {
            return Err(Error::Dims(format!("{} vs {} rows", self.nrows(), other.nrows())));
        }
        let mut values = DMatrix::zeros(self.nrows(), self.ncols() + other.ncols());
        values.columns_mut(0, self.ncols()).copy_from(&self.values);
        values.columns_mut(self.ncols(), other.ncols()).copy_from(&other.values);
        let names = self.names.iter().chain(&other.names).cloned().collect();
        let provenance = self.provenance.iter().chain(&other.provenance).copied().collect();
        FeatureMatrix::new(values, names, provenance)
    }
}

/// Per-column centering and scaling learned from training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Population mean and sd over `rows` of `x`; sd = 0 is stored as 1.
    pub fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("standardizer needs at least one row".into()));
        }
        let n = rows.len() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = rows.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = rows.iter().map(|&r| (col[r] - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            sd.push(if s > 0.0 { s } else { 1.0 });
        }
        Ok(Self { mean, sd })
    }

    /// Transforms the selected rows of `x`, in the given order.
    pub fn apply_rows(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        assert_eq!(x.ncols(), self.mean.len(), "standardizer width mismatch");
        DMatrix::from_fn(rows.len(), x.ncols(), |i, j| (x[(rows[i], j)] - self.mean[j]) / self.sd[j])
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        self.apply_rows(x, &rows)
    }
}
