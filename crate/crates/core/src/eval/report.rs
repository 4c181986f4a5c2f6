use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::AucDistribution;
use super::metrics::wilcoxon_signed_rank;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub combo: String,
    pub classifier: String,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub n_effective: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    /// `classifier:combo`.
    pub combo_a: String,
    pub combo_b: String,
    pub w: f64,
    pub p: f64,
    /// Set when the test could not run and `p = 1` is a marker.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub n_iter: usize,
    pub rows: Vec<ReportRow>,
    pub pairwise: Vec<PairwiseRow>,
}

/// Mean/sd per distribution plus all pairwise Wilcoxon tests over
/// iterations where both runs produced an AUC.
pub fn summarize(dists: &[AucDistribution]) -> Result<Report> {
    let first = dists.first().ok_or_else(|| Error::Validation("no distributions".into()))?;
    for d in dists {
        if d.seed != first.seed || d.n_iter != first.n_iter || d.test_fraction != first.test_fraction {
            return Err(Error::Pairing(format!(
                "{} (seed {}, n_iter {}) vs {} (seed {}, n_iter {})",
                d.label(),
                d.seed,
                d.n_iter,
                first.label(),
                first.seed,
                first.n_iter
            )));
        }
        let same = d.iterations.iter().zip(&first.iterations).all(|(a, b)| a.fingerprint == b.fingerprint);
        if !same || d.iterations.len() != first.iterations.len() {
            return Err(Error::Pairing(format!("{} has different splits", d.label())));
        }
    }
    let rows = dists
        .iter()
        .map(|d| ReportRow {
            combo: d.combo.as_str().to_string(),
            classifier: d.classifier.as_str().to_string(),
            mean_auc: d.mean(),
            sd_auc: d.sd(),
            n_effective: d.n_effective(),
        })
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            let (a, b): (Vec<f64>, Vec<f64>) = dists[i]
                .iterations
                .iter()
                .zip(&dists[j].iterations)
                .filter_map(|(x, y)| Some((x.auc?, y.auc?)))
                .unzip();
            let (w, p, note) = match wilcoxon_signed_rank(&a, &b) {
                Ok(t) => (t.w, t.p, None),
                Err(Error::Degenerate(m)) => (0.0, 1.0, Some(m)),
                Err(e) => return Err(e),
            };
            pairwise.push(PairwiseRow { combo_a: dists[i].label(), combo_b: dists[j].label(), w, p, note });
        }
    }
    Ok(Report { seed: first.seed, n_iter: first.n_iter, rows, pairwise })
}

impl Report {
    pub fn report_csv(&self) -> String {
        let mut out = String::from("combo,classifier,mean_auc,sd_auc,n_effective\n");
        for r in &self.rows {
            writeln!(out, "{},{},{:.6},{:.6},{}", r.combo, r.classifier, r.mean_auc, r.sd_auc, r.n_effective).unwrap();
        }
        out
    }

    pub fn pairwise_csv(&self) -> String {
        let mut out = String::from("combo_a,combo_b,W,p\n");
        for r in &self.pairwise {
            writeln!(out, "{},{},{},{:.6e}", r.combo_a, r.combo_b, r.w, r.p).unwrap();
        }
        out
    }

    /// Bar chart of mean AUC per row with sd whiskers.
    pub fn svg(&self) -> String {
        let bar = 36.0;
        let gap = 14.0;
        let left = 60.0;
        let top = 20.0;
        let height = 260.0;
        let width = left + self.rows.len() as f64 * (bar + gap) + 20.0;
        let y = |v: f64| top + height * (1.0 - v.clamp(0.0, 1.0));
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="10">"#,
            w = width,
            h = top + height + 120.0
        )
        .unwrap();
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            writeln!(
                s,
                r##"<line x1="{l}" x2="{r:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{tx}" y="{ty:.1}" text-anchor="end">{tick:.2}</text>"##,
                l = left,
                r = width - 10.0,
                y = y(tick),
                tx = left - 6.0,
                ty = y(tick) + 3.0
            )
            .unwrap();
        }
        for (i, r) in self.rows.iter().enumerate() {
            let x = left + gap / 2.0 + i as f64 * (bar + gap);
            let fill = if r.classifier == "svc" { "#4c72b0" } else { "#dd8452" };
            let m = if r.mean_auc.is_finite() { r.mean_auc } else { 0.0 };
            let sd = if r.sd_auc.is_finite() { r.sd_auc } else { 0.0 };
            let cx = x + bar / 2.0;
            writeln!(
                s,
                r#"<rect x="{x:.1}" y="{ry:.1}" width="{bar}" height="{rh:.1}" fill="{fill}"/>"#,
                ry = y(m),
                rh = y(0.0) - y(m)
            )
            .unwrap();
            writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{a:.1}" y2="{b:.1}" stroke="black"/>"#,
                a = y(m - sd),
                b = y(m + sd)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text transform="translate({tx:.1},{ty:.1}) rotate(60)">{}:{}</text>"#,
                r.classifier,
                r.combo,
                tx = cx - 3.0,
                ty = y(0.0) + 8.0
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">mean AUC</text>"#,
            top + height / 2.0,
            top + height / 2.0
        )
        .unwrap();
        s.push_str("</svg>\n");
        s
    }
}
