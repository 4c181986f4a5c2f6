use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    /// Numeric encoding used as a classifier feature: male = 1, female = 0.
    pub fn code(&self) -> f64 {
        match self {
            Gender::Male => 1.0,
            Gender::Female => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Normal,
    Decline,
}

impl Label {
    /// Binary target: DECLINE is the positive class.
    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Decline)
    }
}

/// How MoCA scores map to labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LabelRule {
    /// NORMAL iff moca > threshold.
    Fixed { threshold: u8 },
    /// NORMAL iff moca > median of the cohort's scores.
    CohortMedian,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::Fixed { threshold: 20 }
    }
}

impl LabelRule {
    fn threshold(&self, scores: &[u8]) -> f64 {
        match *self {
            LabelRule::Fixed { threshold } => threshold as f64,
            LabelRule::CohortMedian => {
                let mut s: Vec<u8> = scores.to_vec();
                s.sort_unstable();
                let n = s.len();
                if n == 0 {
                    return 0.0;
                }
                if n % 2 == 1 {
                    s[n / 2] as f64
                } else {
                    (s[n / 2 - 1] as f64 + s[n / 2] as f64) / 2.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub subject_id: String,
    pub age: f64,
    pub gender: Gender,
    pub education: f64,
    pub moca: u8,
    pub bold_path: PathBuf,
    pub motion_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<Label>,
}

impl CohortRecord {
    pub fn label(&self) -> Label {
        self.label.expect("labels are assigned when the manifest is read")
    }

    /// Demographic features in fixed order: age, education, gender.
    pub fn demographics(&self) -> [f64; 3] {
        [self.age, self.education, self.gender.code()]
    }
}

pub const DEMOGRAPHIC_NAMES: [&str; 3] = ["age", "education", "gender"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    subject_id: String,
    age: f64,
    gender: Gender,
    education: f64,
    moca: i64,
    bold_path: PathBuf,
    motion_path: PathBuf,
    #[serde(default)]
    #[allow(dead_code)]
    label: Option<serde_json::Value>,
}

/// Parses and validates a manifest, assigning labels. Relative paths are
/// resolved against `base_dir`.
pub fn parse_cohort_manifest(text: &str, base_dir: &Path, rule: LabelRule) -> Result<Vec<CohortRecord>> {
    let raw: Vec<RawRecord> =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("cohort manifest: {e}")))?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let at = format!("subject {i} ('{}')", r.subject_id);
        if r.subject_id.trim().is_empty() {
            return Err(Error::Validation(format!("subject {i}: empty subject_id")));
        }
        if !seen.insert(r.subject_id.clone()) {
            return Err(Error::Validation(format!("{at}: duplicate subject_id")));
        }
        if !(0..=30).contains(&r.moca) {
            return Err(Error::Validation(format!("{at}: moca {} outside [0, 30]", r.moca)));
        }
        if !(r.age > 0.0 && r.age.is_finite()) {
            return Err(Error::Validation(format!("{at}: age {} must be > 0", r.age)));
        }
        if !(r.education >= 0.0 && r.education.is_finite()) {
            return Err(Error::Validation(format!("{at}: education {} must be >= 0", r.education)));
        }
        for (name, p) in [("bold_path", &r.bold_path), ("motion_path", &r.motion_path)] {
            if p.as_os_str().is_empty() {
                return Err(Error::Validation(format!("{at}: {name} is empty")));
            }
        }
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        records.push(CohortRecord {
            subject_id: r.subject_id,
            age: r.age,
            gender: r.gender,
            education: r.education,
            moca: r.moca as u8,
            bold_path: resolve(r.bold_path),
            motion_path: resolve(r.motion_path),
            label: None,
        });
    }
    assign_labels(&mut records, rule);
    Ok(records)
}

pub fn assign_labels(records: &mut [CohortRecord], rule: LabelRule) {
    let scores: Vec<u8> = records.iter().map(|r| r.moca).collect();
    let threshold = rule.threshold(&scores);
    for r in records {
        r.label = Some(if r.moca as f64 > threshold { Label::Normal } else { Label::Decline });
    }
}

pub fn read_cohort_manifest(path: impl AsRef<Path>, rule: LabelRule) -> Result<Vec<CohortRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_cohort_manifest(&text, base, rule)
}

/// Writes records without labels, with paths as given.
pub fn write_cohort_manifest(path: impl AsRef<Path>, records: &[CohortRecord]) -> Result<()> {
    let path = path.as_ref();
    let stripped: Vec<CohortRecord> = records.iter().cloned().map(|r| CohortRecord { label: None, ..r }).collect();
    let text = serde_json::to_string_pretty(&stripped).map_err(|e| Error::Json { path: path.into(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(entries: &[(&str, i64)]) -> String {
        let items: Vec<String> = entries
            .iter()
            .map(|(id, moca)| {
                format!(
                    r#"{{"subject_id":"{id}","age":70.0,"gender":"female","education":9,"moca":{moca},"bold_path":"{id}_bold.nii","motion_path":"{id}_motion.tsv"}}"#
                )
            })
            .collect();
        format!("[{}]", items.join(","))
    }

    #[test]
    fn threshold_labels() {
        let recs = parse_cohort_manifest(&manifest(&[("a", 21), ("b", 20)]), Path::new("/data"), LabelRule::default())
            .unwrap();
        assert_eq!(recs[0].label(), Label::Normal);
        assert_eq!(recs[1].label(), Label::Decline);
        assert_eq!(recs[0].bold_path, Path::new("/data/a_bold.nii"));
    }

    #[test]
    fn out_of_range_and_duplicates() {
        let base = Path::new(".");
        assert!(parse_cohort_manifest(&manifest(&[("a", 31)]), base, LabelRule::default()).is_err());
        assert!(parse_cohort_manifest(&manifest(&[("a", -1)]), base, LabelRule::default()).is_err());
        assert!(parse_cohort_manifest(&manifest(&[("a", 3), ("a", 4)]), base, LabelRule::default()).is_err());
        let missing = r#"[{"subject_id":"a","age":70,"gender":"male","education":9,"moca":20,"motion_path":"m.tsv"}]"#;
        assert!(matches!(parse_cohort_manifest(missing, base, LabelRule::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn order_stable_and_median_mode() {
        let recs = parse_cohort_manifest(
            &manifest(&[("z", 18), ("y", 25), ("x", 22)]),
            Path::new("."),
            LabelRule::CohortMedian,
        )
        .unwrap();
        let ids: Vec<&str> = recs.iter().map(|r| r.subject_id.as_str()).collect();
        assert_eq!(ids, ["z", "y", "x"]);
        let labels: Vec<Label> = recs.iter().map(|r| r.label()).collect();
        assert_eq!(labels, [Label::Decline, Label::Normal, Label::Decline]);
    }
}
