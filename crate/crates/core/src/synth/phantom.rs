use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::cohort::{assign_labels, write_cohort_manifest, CohortRecord, Gender, LabelRule};
use crate::dataio::{
    write_events_tsv, write_motion_tsv, write_volume, Condition, Event, EventTimeline, MotionRegressors,
};
use crate::design::{build_design, DesignConfig, DesignMatrix};
use crate::error::{Error, Result};
use crate::eval::{ExperimentData, SubjectData, SubjectMaps};
use crate::glm::{subject_tmaps_with, GlmConfig};
use crate::volume::{Dims3, Volume4D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegion {
    pub center: [usize; 3],
    /// Voxels within this Euclidean distance of `center` (in voxels).
    pub radius: f64,
    pub base_amplitude: f64,
    pub score_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub nt: usize,
    pub tr: f64,
    pub voxel_size_mm: f64,
    pub planted_regions: Vec<PlantedRegion>,
    /// Marginal sd of the AR(1) noise.
    pub noise_sd: f64,
    pub ar_rho: f64,
    pub drift_amplitude: f64,
    /// Per-scan step sd of the motion random walks.
    pub motion_sd: f64,
    pub motion_loading_sd: f64,
    /// Response shared by both conditions in every brain voxel.
    pub common_amplitude: f64,
    pub baseline: f64,
    pub score_range: [f64; 2],
    pub speech_block_s: f64,
    pub silence_block_s: f64,
    pub gap_s: f64,
    pub design: DesignConfig,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let region =
            |center, base, slope| PlantedRegion { center, radius: 2.0, base_amplitude: base, score_slope: slope };
        Self {
            n_subjects: 40,
            dims: [20, 20, 20],
            nt: 200,
            tr: 0.9,
            voxel_size_mm: 3.0,
            planted_regions: vec![
                region([6, 10, 10], 1.5, 0.15),
                region([13, 10, 10], 1.5, 0.15),
                region([10, 14, 7], 1.5, 0.15),
                region([10, 5, 12], -1.5, -0.15),
            ],
            noise_sd: 1.0,
            ar_rho: 0.3,
            drift_amplitude: 2.0,
            motion_sd: 0.05,
            motion_loading_sd: 0.5,
            common_amplitude: 1.0,
            baseline: 100.0,
            score_range: [10.0, 28.0],
            speech_block_s: 20.0,
            silence_block_s: 15.0,
            gap_s: 5.0,
            design: DesignConfig::default(),
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn dims3(&self) -> Dims3 {
        Dims3::new(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn score_midpoint(&self) -> f64 {
        (self.score_range[0] + self.score_range[1]) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects < 4 {
            return bad(format!("n_subjects {} < 4", self.n_subjects));
        }
        if self.dims.iter().any(|&d| d < 3) {
            return bad(format!("grid {:?} too small", self.dims));
        }
        if !(self.tr > 0.0) || self.nt < 20 {
            return bad(format!("need tr > 0 and nt >= 20, got {} and {}", self.tr, self.nt));
        }
        if !(self.noise_sd >= 0.0) || !(self.ar_rho.abs() < 1.0) {
            return bad(format!("noise_sd {} / ar_rho {} out of range", self.noise_sd, self.ar_rho));
        }
        if !(self.motion_sd >= 0.0 && self.drift_amplitude >= 0.0 && self.motion_loading_sd >= 0.0) {
            return bad("nuisance scales must be >= 0".into());
        }
        let [lo, hi] = self.score_range;
        if !(lo < hi && lo >= 0.0 && hi <= 30.0) {
            return bad(format!("score range {:?} must lie in [0, 30]", self.score_range));
        }
        if !(self.speech_block_s > 0.0 && self.silence_block_s > 0.0 && self.gap_s >= 0.0) {
            return bad("block lengths must be positive".into());
        }
        let dims = self.dims3();
        let brain = brain_mask(dims);
        let mut owner = vec![usize::MAX; dims.len()];
        for (k, r) in self.planted_regions.iter().enumerate() {
            let fits = (0..3).all(|a| {
                r.center[a] as f64 - r.radius >= 0.0 && r.center[a] as f64 + r.radius <= (self.dims[a] - 1) as f64
            });
            if !fits || r.radius < 0.0 {
                return bad(format!("planted region {k} at {:?} r={} exceeds the grid", r.center, r.radius));
            }
            for v in region_voxels(dims, r) {
                if !brain[v] {
                    return bad(format!("planted region {k} leaves the brain at voxel {v}"));
                }
                if owner[v] != usize::MAX {
                    return bad(format!("planted regions {} and {k} overlap", owner[v]));
                }
                owner[v] = k;
            }
        }
        Ok(())
    }
}

fn region_voxels(dims: Dims3, r: &PlantedRegion) -> Vec<usize> {
    (0..dims.len())
        .filter(|&v| {
            let (x, y, z) = dims.coordinates(v).expect("in range");
            let d2 = [x, y, z].iter().zip(r.center).map(|(&a, c)| (a as f64 - c as f64).powi(2)).sum::<f64>();
            d2 <= r.radius * r.radius + 1e-9
        })
        .collect()
}

fn brain_geometry(dims: Dims3) -> ([f64; 3], [f64; 3]) {
    let n = [dims.nx, dims.ny, dims.nz];
    (n.map(|k| (k as f64 - 1.0) / 2.0), n.map(|k| 0.45 * k as f64))
}

/// Ellipsoid centered in the grid with semi-axes 0.45 of each extent.
fn brain_mask(dims: Dims3) -> Vec<bool> {
    let (c, r) = brain_geometry(dims);
    (0..dims.len())
        .map(|v| {
            let (x, y, z) = dims.coordinates(v).expect("in range");
            [x, y, z].iter().enumerate().map(|(a, &p)| ((p as f64 - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
        })
        .collect()
}

fn block_timeline(cfg: &PhantomConfig) -> Result<EventTimeline> {
    let total = cfg.nt as f64 * cfg.tr;
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        for (cond, len) in [(Condition::Speech, cfg.speech_block_s), (Condition::Silence, cfg.silence_block_s)] {
            if t + len > total {
                return EventTimeline::new(events, total);
            }
            events.push(Event { onset: t, duration: len, condition: cond });
            t += len + cfg.gap_s;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedVoxel {
    pub voxel: usize,
    pub region: usize,
    pub beta_diff: f64,
}

/// Everything needed to rebuild one subject's noise-free signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub score: f64,
    pub moca: u8,
    pub age: f64,
    pub education: f64,
    pub gender: Gender,
    pub rho: f64,
    pub noise_sd: f64,
    pub baseline: f64,
    pub common_amplitude: f64,
    /// Coefficients on the drift columns of the design.
    pub drift_coefficients: Vec<f64>,
    /// Linear spatial gain of the drift across the grid.
    pub drift_gradient: [f64; 3],
    pub motion_loadings: [f64; 6],
    pub planted: Vec<PlantedVoxel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dims: [usize; 3],
    pub nt: usize,
    pub tr: f64,
    pub voxel_size_mm: f64,
    pub brain_center: [f64; 3],
    pub brain_semi_axes: [f64; 3],
    pub score_midpoint: f64,
    pub design: DesignConfig,
    pub regions: Vec<PlantedRegion>,
    pub subjects: Vec<SubjectTruth>,
}

/// Cohort-level draws; voxel data are generated per subject on demand.
#[derive(Clone, Debug)]
pub struct CohortPlan {
    pub events: EventTimeline,
    pub brain: Vec<bool>,
    pub truth: GroundTruth,
}

fn subject_rng(seed: u64, subject: usize, part: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * subject as u64 + part);
    rng
}

pub fn plan_cohort(cfg: &PhantomConfig) -> Result<CohortPlan> {
    cfg.validate()?;
    let dims = cfg.dims3();
    let events = block_timeline(cfg)?;
    let brain = brain_mask(dims);
    let k_drift = crate::design::dct_order(cfg.nt, cfg.tr, cfg.design.highpass_cutoff_seconds);
    let region_vox: Vec<Vec<usize>> = cfg.planted_regions.iter().map(|r| region_voxels(dims, r)).collect();
    let mid = cfg.score_midpoint();
    let subjects: Vec<SubjectTruth> = (0..cfg.n_subjects)
        .map(|i| {
            let mut rng = subject_rng(cfg.seed, i, 0);
            let score = rng.random_range(cfg.score_range[0]..cfg.score_range[1]);
            let age = rng.random_range(60.0..85.0f64);
            let education = rng.random_range(6.0..20.0f64).round();
            let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
            let drift_coefficients =
                (0..k_drift).map(|_| cfg.drift_amplitude * rng.sample::<f64, _>(StandardNormal)).collect();
            let drift_gradient = [0; 3].map(|_| rng.random_range(-0.5..0.5));
            let motion_loadings = [0; 6].map(|_| cfg.motion_loading_sd * rng.sample::<f64, _>(StandardNormal));
            let planted = region_vox
                .iter()
                .enumerate()
                .flat_map(|(k, vox)| {
                    let r = &cfg.planted_regions[k];
                    let beta = r.base_amplitude + r.score_slope * (score - mid);
                    vox.iter().map(move |&voxel| PlantedVoxel { voxel, region: k, beta_diff: beta })
                })
                .collect();
            SubjectTruth {
                subject_id: format!("sub-{:03}", i + 1),
                score,
                moca: score.round() as u8,
                age,
                education,
                gender,
                rho: cfg.ar_rho,
                noise_sd: cfg.noise_sd,
                baseline: cfg.baseline,
                common_amplitude: cfg.common_amplitude,
                drift_coefficients,
                drift_gradient,
                motion_loadings,
                planted,
            }
        })
        .collect();
    let (brain_center, brain_semi_axes) = brain_geometry(dims);
    Ok(CohortPlan {
        events,
        brain,
        truth: GroundTruth {
            dims: cfg.dims,
            nt: cfg.nt,
            tr: cfg.tr,
            voxel_size_mm: cfg.voxel_size_mm,
            brain_center,
            brain_semi_axes,
            score_midpoint: mid,
            design: cfg.design,
            regions: cfg.planted_regions.clone(),
            subjects,
        },
    })
}

/// Design used for generation; identical to what the first-level stage
/// rebuilds from `events.tsv` and the motion table.
pub fn phantom_design(truth: &GroundTruth, events: &EventTimeline, motion: &MotionRegressors) -> Result<DesignMatrix> {
    build_design(events, motion, truth.nt, truth.tr, &truth.design)
}

/// Noise-free BOLD implied by the ground truth and a subject's motion.
fn noise_free(truth: &GroundTruth, subject: &SubjectTruth, design: &DesignMatrix) -> Result<Vec<f64>> {
    let dims = Dims3::new(truth.dims[0], truth.dims[1], truth.dims[2]);
    let nvox = dims.len();
    let nt = truth.nt;
    let x = design.values();
    let k = subject.drift_coefficients.len();
    if x.ncols() != 2 + 6 + k + 1 {
        return Err(Error::Dims(format!("design has {} columns, truth implies {}", x.ncols(), 9 + k)));
    }
    let mut diff = vec![0.0; nvox];
    for p in &subject.planted {
        diff[p.voxel] = p.beta_diff;
    }
    let mut data = vec![0.0; nvox * nt];
    let mut beta = DVector::zeros(x.ncols());
    for v in 0..nvox {
        let (px, py, pz) = dims.coordinates(v)?;
        let coords = [px, py, pz];
        let rel: [f64; 3] =
            std::array::from_fn(|a| (coords[a] as f64 - truth.brain_center[a]) / truth.brain_semi_axes[a]);
        if rel.iter().map(|r| r * r).sum::<f64>() > 1.0 {
            continue;
        }
        let gain = 1.0 + rel.iter().zip(subject.drift_gradient).map(|(r, g)| r * g).sum::<f64>();
        beta[0] = subject.common_amplitude + diff[v] / 2.0;
        beta[1] = subject.common_amplitude - diff[v] / 2.0;
        for m in 0..6 {
            beta[2 + m] = subject.motion_loadings[m];
        }
        for d in 0..k {
            beta[8 + d] = gain * subject.drift_coefficients[d];
        }
        beta[8 + k] = subject.baseline;
        let y = x * &beta;
        for t in 0..nt {
            data[v + nvox * t] = y[t];
        }
    }
    Ok(data)
}

fn truth_volume(truth: &GroundTruth, data: Vec<f64>) -> Result<Volume4D> {
    let dims = Dims3::new(truth.dims[0], truth.dims[1], truth.dims[2]);
    Volume4D::new(dims, truth.nt, [truth.voxel_size_mm; 3], truth.tr, data)
}

pub fn reconstruct_noise_free(
    truth: &GroundTruth,
    subject: usize,
    events: &EventTimeline,
    motion: &MotionRegressors,
) -> Result<Volume4D> {
    let st = truth
        .subjects
        .get(subject)
        .ok_or_else(|| Error::Index(format!("subject {subject} of {}", truth.subjects.len())))?;
    let design = phantom_design(truth, events, motion)?;
    truth_volume(truth, noise_free(truth, st, &design)?)
}

pub struct GeneratedSubject {
    pub bold: Volume4D,
    pub motion: MotionRegressors,
    /// AR(1) noise added to the noise-free signal, same layout as `bold`.
    pub noise: Option<Vec<f64>>,
}

pub fn generate_subject(
    cfg: &PhantomConfig,
    plan: &CohortPlan,
    i: usize,
    keep_noise: bool,
) -> Result<GeneratedSubject> {
    let truth = &plan.truth;
    let subject =
        truth.subjects.get(i).ok_or_else(|| Error::Index(format!("subject {i} of {}", truth.subjects.len())))?;
    let mut rng = subject_rng(cfg.seed, i, 1);
    let nt = cfg.nt;
    let step = Normal::new(0.0, cfg.motion_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = vec![[0.0; 6]; nt];
    for t in 1..nt {
        for m in 0..6 {
            rows[t][m] = rows[t - 1][m] + step.sample(&mut rng);
        }
    }
    let motion = MotionRegressors::new(rows);
    let design = phantom_design(truth, &plan.events, &motion)?;
    let mut data = noise_free(truth, subject, &design)?;

    let nvox = cfg.dims3().len();
    let innovation_sd = cfg.noise_sd * (1.0 - cfg.ar_rho * cfg.ar_rho).sqrt();
    let mut noise = vec![0.0; if keep_noise { nvox * nt } else { 0 }];
    for v in (0..nvox).filter(|&v| plan.brain[v]) {
        let mut e = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
        for t in 0..nt {
            if t > 0 {
                e = cfg.ar_rho * e + innovation_sd * rng.sample::<f64, _>(StandardNormal);
            }
            data[v + nvox * t] += e;
            if keep_noise {
                noise[v + nvox * t] = e;
            }
        }
    }
    let bold = truth_volume(truth, data)?;
    Ok(GeneratedSubject { bold, motion, noise: keep_noise.then_some(noise) })
}

fn records_for(truth: &GroundTruth) -> Vec<CohortRecord> {
    let mut records: Vec<CohortRecord> = truth
        .subjects
        .iter()
        .map(|s| CohortRecord {
            subject_id: s.subject_id.clone(),
            age: s.age,
            gender: s.gender,
            education: s.education,
            moca: s.moca,
            bold_path: PathBuf::from(format!("bold/{}_bold.nii", s.subject_id)),
            motion_path: PathBuf::from(format!("motion/{}_motion.tsv", s.subject_id)),
            label: None,
        })
        .collect();
    assign_labels(&mut records, LabelRule::default());
    records
}

/// Writes `events.tsv`, `cohort.json`, `ground_truth.json`, and per-subject
/// `bold/*.nii` and `motion/*.tsv` under `out`.
pub fn write_phantom_cohort(cfg: &PhantomConfig, out: &Path) -> Result<GroundTruth> {
    let plan = plan_cohort(cfg)?;
    for dir in [out.to_path_buf(), out.join("bold"), out.join("motion")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    write_events_tsv(out.join("events.tsv"), &plan.events)?;
    let records = records_for(&plan.truth);
    (0..cfg.n_subjects).into_par_iter().try_for_each(|i| -> Result<()> {
        let g = generate_subject(cfg, &plan, i, false)?;
        write_volume(out.join(&records[i].bold_path), &g.bold)?;
        write_motion_tsv(out.join(&records[i].motion_path), &g.motion)
    })?;
    write_cohort_manifest(out.join("cohort.json"), &records)?;
    let path = out.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&plan.truth).map_err(|e| Error::Json { path: path.clone(), source: e })?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(plan.truth)
}

impl CohortPlan {
    /// Runs the first-level stage in memory for every subject and returns
    /// harness input, without touching disk.
    pub fn experiment_data(&self, cfg: &PhantomConfig, glm: &GlmConfig) -> Result<ExperimentData> {
        let records = records_for(&self.truth);
        let maps: Vec<SubjectMaps> = (0..cfg.n_subjects)
            .into_par_iter()
            .map(|i| -> Result<SubjectMaps> {
                let g = generate_subject(cfg, self, i, false)?;
                let design = phantom_design(&self.truth, &self.events, &g.motion)?;
                let tm = subject_tmaps_with(&g.bold, &design, glm)?;
                Ok(SubjectMaps {
                    contrast: tm.contrast,
                    speech_tmap: tm.speech_gt_silence,
                    silence_tmap: tm.silence_gt_speech,
                })
            })
            .collect::<Result<_>>()?;
        let subjects = records
            .iter()
            .zip(maps)
            .map(|(r, m)| SubjectData {
                subject_id: r.subject_id.clone(),
                label: r.label().is_positive(),
                moca: r.moca as f64,
                demographics: r.demographics(),
                maps: Some(m),
            })
            .collect();
        ExperimentData::new(subjects)
    }

    /// Linear indices of all planted voxels.
    pub fn planted_voxels(&self) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.truth.subjects.first().map_or(Vec::new(), |s| s.planted.iter().map(|p| p.voxel).collect());
        v.sort_unstable();
        v
    }
}
