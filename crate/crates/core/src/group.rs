//! Cross-subject statistics: significance mask, selection-probability maps,
//! connected clusters and atlas overlap.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::t_critical_one_sided;
use crate::volume::{BrainMask, Dims3, MapKind, ScalarMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MaskMethod {
    /// One-sided one-sample t-test of subject values against 0.
    GroupTTest,
    /// Voxel kept where at least `min_subjects` subjects exceed `tau`.
    Intersection { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupMaskConfig {
    pub alpha: f64,
    /// Used by the intersection method; `None` means every subject.
    pub min_subjects: Option<usize>,
    pub method: MaskMethod,
}

impl Default for GroupMaskConfig {
    fn default() -> Self {
        Self { alpha: 0.001, min_subjects: None, method: MaskMethod::GroupTTest }
    }
}

impl GroupMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("mask alpha {} outside (0, 0.5)", self.alpha)));
        }
        Ok(())
    }
}

/// Group mask over per-subject contrast maps (positive effects only).
pub fn group_mask(maps: &[&ScalarMap], cfg: &GroupMaskConfig) -> Result<BrainMask> {
    cfg.validate()?;
    let n = maps.len();
    if n < 3 {
        return Err(Error::Validation(format!("group mask needs >= 3 subjects, got {n}")));
    }
    let dims = maps[0].dims();
    if let Some(m) = maps.iter().find(|m| m.dims() != dims) {
        return Err(Error::Dims(format!("subject map {} vs {}", m.dims(), dims)));
    }
    let nvox = dims.len();
    let included: Vec<bool> = match cfg.method {
        MaskMethod::GroupTTest => {
            let crit = t_critical_one_sided(cfg.alpha, (n - 1) as f64);
            let nf = n as f64;
            (0..nvox)
                .map(|v| {
                    let mean = maps.iter().map(|m| m.data()[v]).sum::<f64>() / nf;
                    let ss = maps.iter().map(|m| (m.data()[v] - mean).powi(2)).sum::<f64>();
                    let sd = (ss / (nf - 1.0)).sqrt();
                    if sd == 0.0 {
                        mean > 0.0
                    } else {
                        mean / (sd / nf.sqrt()) > crit
                    }
                })
                .collect()
        }
        MaskMethod::Intersection { tau } => {
            let need = cfg.min_subjects.unwrap_or(n).min(n);
            (0..nvox).map(|v| maps.iter().filter(|m| m.data()[v] > tau).count() >= need).collect()
        }
    };
    BrainMask::from_included(dims, included)
}

/// Per-voxel fraction of iterations in which the voxel was selected.
pub fn selection_probability_map(selected_sets: &[Vec<usize>], mask: &BrainMask, n_iter: usize) -> Result<ScalarMap> {
    if n_iter == 0 {
        return Err(Error::Validation("n_iter must be >= 1".into()));
    }
    if selected_sets.len() > n_iter {
        return Err(Error::Validation(format!("{} selection sets for {n_iter} iterations", selected_sets.len())));
    }
    let mut counts = vec![0usize; mask.dims().len()];
    for (it, set) in selected_sets.iter().enumerate() {
        let mut seen = std::collections::HashSet::new();
        for &voxel in set {
            if !mask.is_included(voxel) {
                return Err(Error::Index(format!("iteration {it}: voxel {voxel} is outside the mask")));
            }
            if seen.insert(voxel) {
                counts[voxel] += 1;
            }
        }
    }
    let data = counts.iter().map(|&c| c as f64 / n_iter as f64).collect();
    ScalarMap::new(mask.dims(), MapKind::Probability, data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub peak_voxel: usize,
    pub peak_coords: (usize, usize, usize),
    pub peak_value: f64,
    pub size: usize,
    pub mean_value: f64,
    pub voxels: Vec<usize>,
}

fn neighbors26(dims: Dims3, v: usize) -> impl Iterator<Item = usize> {
    let (x, y, z) = dims.coordinates(v).expect("voxel within grid");
    let (x, y, z) = (x as isize, y as isize, z as isize);
    let (nx, ny, nz) = (dims.nx as isize, dims.ny as isize, dims.nz as isize);
    (-1isize..=1).flat_map(move |dz| {
        (-1isize..=1).flat_map(move |dy| {
            (-1isize..=1).filter_map(move |dx| {
                if dx == 0 && dy == 0 && dz == 0 {
                    return None;
                }
                let (a, b, c) = (x + dx, y + dy, z + dz);
                if a < 0 || b < 0 || c < 0 || a >= nx || b >= ny || c >= nz {
                    return None;
                }
                Some((a + nx * (b + ny * c)) as usize)
            })
        })
    })
}

/// 26-connected components of the positive part of `map`, ranked by peak
/// value, then size, then smallest peak index; the first `k` are returned.
pub fn top_clusters(map: &ScalarMap, k: usize) -> Result<Vec<Cluster>> {
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let dims = map.dims();
    let data = map.data();
    let mut label = vec![usize::MAX; data.len()];
    let mut clusters = Vec::new();
    for seed in 0..data.len() {
        if data[seed] <= 0.0 || label[seed] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut stack = vec![seed];
        let mut members = Vec::new();
        label[seed] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for u in neighbors26(dims, v) {
                if data[u] > 0.0 && label[u] == usize::MAX {
                    label[u] = id;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        let peak = *members
            .iter()
            .fold(None, |best: Option<&usize>, v| match best {
                Some(b) if data[*b] >= data[*v] => Some(b),
                _ => Some(v),
            })
            .expect("non-empty cluster");
        let mean = members.iter().map(|&v| data[v]).sum::<f64>() / members.len() as f64;
        clusters.push(Cluster {
            peak_voxel: peak,
            peak_coords: dims.coordinates(peak)?,
            peak_value: data[peak],
            size: members.len(),
            mean_value: mean,
            voxels: members,
        });
    }
    clusters.sort_by(|a, b| {
        b.peak_value.total_cmp(&a.peak_value).then(b.size.cmp(&a.size)).then(a.peak_voxel.cmp(&b.peak_voxel))
    });
    clusters.truncate(k);
    Ok(clusters)
}

/// `|mask ∩ {atlas > threshold}| / |{atlas > threshold}|`.
pub fn atlas_overlap(mask: &BrainMask, atlas_prob: &ScalarMap, p_threshold: f64) -> Result<f64> {
    if mask.dims() != atlas_prob.dims() {
        return Err(Error::Dims(format!("mask {} vs atlas {}", mask.dims(), atlas_prob.dims())));
    }
    let mut atlas = 0usize;
    let mut both = 0usize;
    for (v, &p) in atlas_prob.data().iter().enumerate() {
        if p > p_threshold {
            atlas += 1;
            if mask.is_included(v) {
                both += 1;
            }
        }
    }
    if atlas == 0 {
        return Err(Error::Division(format!("no atlas voxels above P > {p_threshold}")));
    }
    Ok(both as f64 / atlas as f64)
}

/// Fraction of mask voxels per atlas region; label 0 counts as unlabeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDistribution {
    pub fractions: BTreeMap<i64, f64>,
    pub unlabeled: f64,
    pub n_voxels: usize,
}

pub fn region_distribution(mask: &BrainMask, labels: &ScalarMap) -> Result<RegionDistribution> {
    if mask.dims() != labels.dims() {
        return Err(Error::Dims(format!("mask {} vs labels {}", mask.dims(), labels.dims())));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::Division("mask has no voxels".into()));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let mut unlabeled = 0usize;
    for &v in mask.voxel_index() {
        let code = labels.data()[v];
        if code.fract() != 0.0 {
            return Err(Error::Validation(format!("label {code} at voxel {v} is not an integer")));
        }
        let code = code as i64;
        if code == 0 {
            unlabeled += 1;
        } else {
            *counts.entry(code).or_default() += 1;
        }
    }
    Ok(RegionDistribution {
        fractions: counts.into_iter().map(|(c, k)| (c, k as f64 / n as f64)).collect(),
        unlabeled: unlabeled as f64 / n as f64,
        n_voxels: n,
    })
}

impl RegionDistribution {
    /// CSV with columns `region_code,region_name,fraction`; unlabeled voxels
    /// appear as region code 0.
    pub fn to_csv(&self, names: &HashMap<i64, String>) -> String {
        let mut out = String::from("region_code,region_name,fraction\n");
        for (code, frac) in &self.fractions {
            let name = names.get(code).map(String::as_str).unwrap_or("");
            writeln!(out, "{code},{name},{frac:.6}").unwrap();
        }
        writeln!(out, "0,unlabeled,{:.6}", self.unlabeled).unwrap();
        out
    }
}
