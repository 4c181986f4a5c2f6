use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::roc_auc;
use super::split::{stratified_shuffle_split, Split};
use crate::dataio::CohortRecord;
use crate::error::{Error, Result};
use crate::group::{group_mask, GroupMaskConfig};
use crate::ml::{
    gnb_fit, l1svc_select, pearson_columns, pearson_filter, svc_fit, L1SvcConfig, Standardizer, SvcConfig,
};
use crate::stats::{mean, sd_population};
use crate::volume::{BrainMask, Dims3, MapKind, ScalarMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureCombo {
    #[serde(rename = "demographics")]
    Demographics,
    #[serde(rename = "speech_tmap")]
    SpeechTmap,
    #[serde(rename = "demographics+speech_tmap")]
    DemographicsSpeechTmap,
    #[serde(rename = "two_tmaps")]
    TwoTmaps,
    #[serde(rename = "all")]
    All,
}

impl FeatureCombo {
    pub const ALL: [FeatureCombo; 5] = [
        FeatureCombo::Demographics,
        FeatureCombo::SpeechTmap,
        FeatureCombo::DemographicsSpeechTmap,
        FeatureCombo::TwoTmaps,
        FeatureCombo::All,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureCombo::Demographics => "demographics",
            FeatureCombo::SpeechTmap => "speech_tmap",
            FeatureCombo::DemographicsSpeechTmap => "demographics+speech_tmap",
            FeatureCombo::TwoTmaps => "two_tmaps",
            FeatureCombo::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn uses_demographics(&self) -> bool {
        matches!(self, Self::Demographics | Self::DemographicsSpeechTmap | Self::All)
    }

    pub fn uses_speech(&self) -> bool {
        !matches!(self, Self::Demographics)
    }

    pub fn uses_silence(&self) -> bool {
        matches!(self, Self::TwoTmaps | Self::All)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svc,
    Gnb,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 2] = [ClassifierKind::Svc, ClassifierKind::Gnb];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Svc => "svc",
            ClassifierKind::Gnb => "gnb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Where the group significance mask is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    /// Training subjects of each split only.
    #[default]
    PerSplit,
    /// All subjects once, test subjects included.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_iter: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub combo: FeatureCombo,
    pub classifier: ClassifierKind,
    pub mask: GroupMaskConfig,
    pub mask_scope: MaskScope,
    pub pearson_alpha: f64,
    pub l1: L1SvcConfig,
    pub svc: SvcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_iter: 500,
            test_fraction: 0.05,
            seed: 0,
            combo: FeatureCombo::All,
            classifier: ClassifierKind::Svc,
            mask: GroupMaskConfig::default(),
            mask_scope: MaskScope::PerSplit,
            pearson_alpha: 0.01,
            l1: L1SvcConfig::default(),
            svc: SvcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 0.5) {
            return Err(Error::Config(format!("test_fraction {} outside (0, 0.5)", self.test_fraction)));
        }
        if !(self.pearson_alpha > 0.0 && self.pearson_alpha < 1.0) {
            return Err(Error::Config(format!("pearson_alpha {} outside (0, 1)", self.pearson_alpha)));
        }
        self.mask.validate()
    }
}

/// First-level maps of one subject.
#[derive(Clone, Debug)]
pub struct SubjectMaps {
    /// Signed `speech - silence` contrast estimate; the group mask input.
    pub contrast: ScalarMap,
    pub speech_tmap: ScalarMap,
    pub silence_tmap: ScalarMap,
}

#[derive(Clone, Debug)]
pub struct SubjectData {
    pub subject_id: String,
    /// `true` for the positive (DECLINE) class.
    pub label: bool,
    pub moca: f64,
    pub demographics: [f64; 3],
    pub maps: Option<SubjectMaps>,
}

/// Everything the harness needs, in cohort order.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    subjects: Vec<SubjectData>,
    dims: Option<Dims3>,
    negated: Vec<ScalarMap>,
}

impl ExperimentData {
    pub fn new(subjects: Vec<SubjectData>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::Validation("empty cohort".into()));
        }
        let with_maps = subjects.iter().filter(|s| s.maps.is_some()).count();
        if with_maps != 0 && with_maps != subjects.len() {
            return Err(Error::Validation(format!("t-maps present for {with_maps} of {} subjects", subjects.len())));
        }
        let dims = subjects[0].maps.as_ref().map(|m| m.contrast.dims());
        let mut negated = Vec::new();
        for s in &subjects {
            if let Some(m) = &s.maps {
                for map in [&m.contrast, &m.speech_tmap, &m.silence_tmap] {
                    if Some(map.dims()) != dims {
                        return Err(Error::Dims(format!(
                            "subject {}: map {} vs {}",
                            s.subject_id,
                            map.dims(),
                            dims.unwrap()
                        )));
                    }
                }
                let neg = m.contrast.data().iter().map(|v| -v).collect();
                negated.push(ScalarMap::new(m.contrast.dims(), MapKind::Contrast, neg)?);
            }
        }
        Ok(Self { subjects, dims, negated })
    }

    /// Builds subjects from manifest records and optional per-subject maps.
    pub fn from_cohort(records: &[CohortRecord], maps: Option<Vec<SubjectMaps>>) -> Result<Self> {
        let mut maps = maps.map(|m| m.into_iter());
        let subjects = records
            .iter()
            .map(|r| SubjectData {
                subject_id: r.subject_id.clone(),
                label: r.label().is_positive(),
                moca: r.moca as f64,
                demographics: r.demographics(),
                maps: maps.as_mut().and_then(|m| m.next()),
            })
            .collect();
        Self::new(subjects)
    }

    pub fn subjects(&self) -> &[SubjectData] {
        &self.subjects
    }

    pub fn dims(&self) -> Option<Dims3> {
        self.dims
    }

    pub fn labels(&self) -> Vec<bool> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    pub fn has_maps(&self) -> bool {
        self.dims.is_some()
    }

    /// Copy with (label, MoCA) pairs permuted across subjects.
    pub fn with_permuted_targets(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..self.subjects.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut out = self.clone();
        for (dst, &src) in out.subjects.iter_mut().zip(&order) {
            dst.label = self.subjects[src].label;
            dst.moca = self.subjects[src].moca;
        }
        out
    }

    fn mask_for(&self, rows: &[usize], silence: bool, cfg: &GroupMaskConfig) -> Result<BrainMask> {
        let maps: Vec<&ScalarMap> = rows
            .iter()
            .map(|&i| {
                if silence {
                    &self.negated[i]
                } else {
                    &self.subjects[i].maps.as_ref().expect("maps checked").contrast
                }
            })
            .collect();
        group_mask(&maps, cfg)
    }

    fn map_features(&self, mask: &BrainMask, silence: bool) -> DMatrix<f64> {
        let idx = mask.voxel_index();
        DMatrix::from_fn(self.subjects.len(), idx.len(), |i, j| {
            let m = self.subjects[i].maps.as_ref().expect("maps checked");
            let map = if silence { &m.silence_tmap } else { &m.speech_tmap };
            map.data()[idx[j]]
        })
    }

    fn demographic_features(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.subjects.len(), 3, |i, j| self.subjects[i].demographics[j])
    }
}

/// Statistics learned inside one iteration, exposed for leakage audits.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub speech_mask: Vec<usize>,
    pub silence_mask: Vec<usize>,
    pub map_standardizer: Option<Standardizer>,
    pub demographic_standardizer: Option<Standardizer>,
    /// Map-feature columns kept by the correlation filter (or its fallback).
    pub filter_selected: Vec<usize>,
    /// Map-feature columns kept by L1 selection.
    pub l1_selected: Vec<usize>,
    /// Final standardized training matrix.
    pub train_features: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct IterationOutput {
    /// One entry per requested classifier.
    pub aucs: Vec<std::result::Result<f64, String>>,
    pub selected_speech: Vec<usize>,
    pub selected_silence: Vec<usize>,
    pub trace: IterationTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fingerprint: String,
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucDistribution {
    pub combo: FeatureCombo,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub n_iter: usize,
    pub test_fraction: f64,
    pub iterations: Vec<IterationRecord>,
}

impl AucDistribution {
    /// AUCs of the iterations that were not skipped.
    pub fn values(&self) -> Vec<f64> {
        self.iterations.iter().filter_map(|r| r.auc).collect()
    }

    pub fn n_effective(&self) -> usize {
        self.iterations.iter().filter(|r| r.auc.is_some()).count()
    }

    pub fn mean(&self) -> f64 {
        let v = self.values();
        if v.is_empty() {
            f64::NAN
        } else {
            mean(&v)
        }
    }

    /// Population sd of the effective AUCs.
    pub fn sd(&self) -> f64 {
        let v = self.values();
        if v.is_empty() {
            f64::NAN
        } else {
            sd_population(&v)
        }
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.classifier.as_str(), self.combo.as_str())
    }
}

/// Per-iteration selected voxels, in the order written to `selections.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selections {
    pub combo: Option<FeatureCombo>,
    pub n_iter: usize,
    pub speech: Vec<Vec<usize>>,
    pub silence: Vec<Vec<usize>>,
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::AucUndefined | Error::Convergence { .. } | Error::Training(_) | Error::EmptyMask)
}

fn rows_of(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn columns_of(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

fn hstack(a: DMatrix<f64>, b: DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(&a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
    out
}

/// Masks used when `MaskScope::Global` is selected.
struct GlobalMasks {
    speech: Option<BrainMask>,
    silence: Option<BrainMask>,
}

fn global_masks(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<GlobalMasks> {
    let all: Vec<usize> = (0..data.subjects.len()).collect();
    let speech = match cfg.combo.uses_speech() {
        true => Some(data.mask_for(&all, false, &cfg.mask)?),
        false => None,
    };
    let silence = match cfg.combo.uses_silence() {
        true => Some(data.mask_for(&all, true, &cfg.mask)?),
        false => None,
    };
    Ok(GlobalMasks { speech, silence })
}

fn scoped_masks(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<Option<GlobalMasks>> {
    match cfg.mask_scope {
        MaskScope::Global if cfg.combo.uses_speech() => Ok(Some(global_masks(data, cfg)?)),
        _ => Ok(None),
    }
}

/// One split: masks, standardization, two-step selection, then each
/// requested classifier fitted on training rows and scored on test rows.
/// With [`MaskScope::Global`] the masks come from every subject.
pub fn run_iteration(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    split: &Split,
    classifiers: &[ClassifierKind],
) -> Result<IterationOutput> {
    let global = scoped_masks(data, cfg)?;
    run_iteration_inner(data, cfg, split, classifiers, global.as_ref())
}

fn run_iteration_inner(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    split: &Split,
    classifiers: &[ClassifierKind],
    global: Option<&GlobalMasks>,
) -> Result<IterationOutput> {
    let combo = cfg.combo;
    if combo.uses_speech() && !data.has_maps() {
        return Err(Error::Validation(format!("combo {} needs t-maps", combo.as_str())));
    }
    let train = &split.train;
    let test = &split.test;
    let y_train: Vec<bool> = train.iter().map(|&i| data.subjects[i].label).collect();
    let y_test: Vec<bool> = test.iter().map(|&i| data.subjects[i].label).collect();
    let moca_train: Vec<f64> = train.iter().map(|&i| data.subjects[i].moca).collect();

    // map features: (column source, voxel) per column
    let mut speech_mask = Vec::new();
    let mut silence_mask = Vec::new();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut origin: Vec<(bool, usize)> = Vec::new();
    for silence in [false, true] {
        let wanted = if silence { combo.uses_silence() } else { combo.uses_speech() };
        if !wanted {
            continue;
        }
        let mask = match global {
            Some(g) => {
                if silence { g.silence.clone() } else { g.speech.clone() }.expect("global mask computed for combo")
            }
            None => data.mask_for(train, silence, &cfg.mask)?,
        };
        debug!("{} mask: {} voxels", if silence { "silence" } else { "speech" }, mask.count());
        origin.extend(mask.voxel_index().iter().map(|&v| (silence, v)));
        blocks.push(data.map_features(&mask, silence));
        if silence {
            silence_mask = mask.voxel_index().to_vec();
        } else {
            speech_mask = mask.voxel_index().to_vec();
        }
    }

    let mut map_standardizer = None;
    let mut filter_selected = Vec::new();
    let mut l1_selected = Vec::new();
    let mut selected_cols = DMatrix::zeros(data.subjects.len(), 0);
    if !origin.is_empty() {
        let raw = blocks.into_iter().reduce(hstack).expect("at least one block");
        let st = Standardizer::fit(&raw, train)?;
        let z = st.apply(&raw);
        let z_train = rows_of(&z, train);
        let r = pearson_columns(&z_train, &moca_train);
        filter_selected = pearson_filter(&z_train, &moca_train, cfg.pearson_alpha);
        if filter_selected.is_empty() {
            let best = r.iter().enumerate().filter_map(|(j, r)| r.map(|r| (j, r.abs()))).fold(
                None,
                |acc: Option<(usize, f64)>, (j, a)| match acc {
                    Some((_, b)) if b >= a => acc,
                    _ => Some((j, a)),
                },
            );
            if let Some((j, _)) = best {
                filter_selected = vec![j];
            }
        }
        if !filter_selected.is_empty() {
            let candidates = columns_of(&z_train, &filter_selected);
            let abs_r: Vec<f64> = filter_selected.iter().map(|&j| r[j].map_or(0.0, f64::abs)).collect();
            let picked = l1svc_select(&candidates, &y_train, &cfg.l1, &abs_r)?;
            l1_selected = picked.iter().map(|&k| filter_selected[k]).collect();
            selected_cols = columns_of(&z, &l1_selected);
        }
        map_standardizer = Some(st);
    }

    let mut demographic_standardizer = None;
    let mut features = selected_cols;
    if combo.uses_demographics() {
        let raw = data.demographic_features();
        let st = Standardizer::fit(&raw, train)?;
        features = hstack(features, st.apply(&raw));
        demographic_standardizer = Some(st);
    }

    let selected_speech: Vec<usize> = l1_selected.iter().filter(|&&j| !origin[j].0).map(|&j| origin[j].1).collect();
    let selected_silence: Vec<usize> = l1_selected.iter().filter(|&&j| origin[j].0).map(|&j| origin[j].1).collect();

    let x_train = rows_of(&features, train);
    let x_test = rows_of(&features, test);
    let aucs = classifiers
        .iter()
        .map(|&kind| -> Result<f64> {
            if features.ncols() == 0 {
                return Err(Error::Training("no features survived selection".into()));
            }
            let scores = match kind {
                ClassifierKind::Svc => svc_fit(&x_train, &y_train, &cfg.svc)?.decision(&x_test),
                ClassifierKind::Gnb => gnb_fit(&x_train, &y_train)?.scores(&x_test),
            };
            roc_auc(&scores, &y_test)
        })
        .map(|r| match r {
            Ok(v) => Ok(Ok(v)),
            Err(e) if is_skippable(&e) => Ok(Err(e.to_string())),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(IterationOutput {
        aucs,
        selected_speech,
        selected_silence,
        trace: IterationTrace {
            speech_mask,
            silence_mask,
            map_standardizer,
            demographic_standardizer,
            filter_selected,
            l1_selected,
            train_features: x_train,
        },
    })
}

/// Runs `cfg.combo` once per split and fits every classifier in
/// `classifiers` on the shared selection. Iterations run on the current
/// rayon pool; results are independent of its size.
pub fn run_combo(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    classifiers: &[ClassifierKind],
) -> Result<(Vec<AucDistribution>, Selections)> {
    cfg.validate()?;
    let labels = data.labels();
    let splits = stratified_shuffle_split(&labels, cfg.n_iter, cfg.test_fraction, cfg.seed)?;
    let global = scoped_masks(data, cfg)?;
    let outputs: Vec<Result<IterationOutput>> =
        splits.par_iter().map(|s| run_iteration_inner(data, cfg, s, classifiers, global.as_ref())).collect();

    let mut dists: Vec<AucDistribution> = classifiers
        .iter()
        .map(|&classifier| AucDistribution {
            combo: cfg.combo,
            classifier,
            seed: cfg.seed,
            n_iter: cfg.n_iter,
            test_fraction: cfg.test_fraction,
            iterations: Vec::with_capacity(cfg.n_iter),
        })
        .collect();
    let mut selections = Selections { combo: Some(cfg.combo), n_iter: cfg.n_iter, ..Default::default() };
    for (it, (split, out)) in splits.iter().zip(outputs).enumerate() {
        let out = out?;
        for (dist, auc) in dists.iter_mut().zip(&out.aucs) {
            let (auc, skipped) = match auc {
                Ok(v) => (Some(*v), None),
                Err(cause) => {
                    warn!("{} iteration {it} skipped: {cause}", dist.label());
                    (None, Some(cause.clone()))
                }
            };
            dist.iterations.push(IterationRecord { iteration: it, fingerprint: split.fingerprint(), auc, skipped });
        }
        selections.speech.push(out.selected_speech);
        selections.silence.push(out.selected_silence);
    }
    Ok((dists, selections))
}

pub fn run_experiment(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<(AucDistribution, Selections)> {
    let (mut dists, sel) = run_combo(data, cfg, &[cfg.classifier])?;
    Ok((dists.remove(0), sel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Subjects whose speech map carries `signal * (moca - 20)` on the first
    /// `k` voxels, on top of a positive group effect, with independent noise.
    fn toy_data(seed: u64, n: usize, signal: f64) -> ExperimentData {
        let dims = Dims3::new(6, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects = (0..n)
            .map(|i| {
                let moca: f64 = rng.random_range(10.0..28.0f64).round();
                let mut contrast = vec![0.0; dims.len()];
                for (v, c) in contrast.iter_mut().enumerate() {
                    let planted = if v < 4 { 2.0 + signal * (moca - 20.0) * -0.1 } else { 0.0 };
                    *c = planted + 0.5 * rng.sample::<f64, _>(StandardNormal);
                }
                let speech: Vec<f64> = contrast.iter().map(|c| (c * 3.0).max(0.0)).collect();
                let silence: Vec<f64> = contrast.iter().map(|c| (-c * 3.0).max(0.0)).collect();
                SubjectData {
                    subject_id: format!("s{i:02}"),
                    label: moca <= 20.0,
                    moca,
                    demographics: [
                        rng.random_range(60.0..80.0),
                        rng.random_range(6.0..18.0f64).round(),
                        (i % 2) as f64,
                    ],
                    maps: Some(SubjectMaps {
                        contrast: ScalarMap::new(dims, MapKind::Contrast, contrast).unwrap(),
                        speech_tmap: ScalarMap::new(dims, MapKind::TmapSpeechGtSilence, speech).unwrap(),
                        silence_tmap: ScalarMap::new(dims, MapKind::TmapSilenceGtSpeech, silence).unwrap(),
                    }),
                }
            })
            .collect();
        ExperimentData::new(subjects).unwrap()
    }

    fn small_cfg(combo: FeatureCombo) -> ExperimentConfig {
        ExperimentConfig { n_iter: 20, test_fraction: 0.1, seed: 5, combo, ..Default::default() }
    }

    #[test]
    fn planted_signal_is_found() {
        let data = toy_data(1, 40, 1.0);
        let (dist, sel) = run_experiment(&data, &small_cfg(FeatureCombo::SpeechTmap)).unwrap();
        assert!(dist.mean() > 0.8, "{}", dist.mean());
        let hits = sel.speech.iter().flatten().filter(|&&v| v < 4).count();
        let total = sel.speech.iter().map(Vec::len).sum::<usize>();
        assert!(hits * 2 > total);
    }

    #[test]
    fn combos_share_splits() {
        let data = toy_data(2, 30, 1.0);
        let (a, _) = run_experiment(&data, &small_cfg(FeatureCombo::Demographics)).unwrap();
        let (b, _) = run_experiment(&data, &small_cfg(FeatureCombo::All)).unwrap();
        let fa: Vec<_> = a.iterations.iter().map(|r| &r.fingerprint).collect();
        let fb: Vec<_> = b.iterations.iter().map(|r| &r.fingerprint).collect();
        assert_eq!(fa, fb);
    }

    #[test]
    fn pool_size_does_not_change_results() {
        let data = toy_data(3, 30, 0.5);
        let cfg = small_cfg(FeatureCombo::All);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_combo(&data, &cfg, &ClassifierKind::ALL).unwrap())
        };
        let (d1, s1) = run(1);
        let (d4, s4) = run(4);
        assert_eq!(d1, d4);
        assert_eq!(s1, s4);
    }

    #[test]
    fn test_rows_do_not_influence_training_statistics() {
        let data = toy_data(4, 30, 1.0);
        let cfg = small_cfg(FeatureCombo::All);
        let split = &stratified_shuffle_split(&data.labels(), 1, 0.1, 9).unwrap()[0];
        let base = run_iteration(&data, &cfg, split, &ClassifierKind::ALL).unwrap();
        let mut perturbed = data.subjects.clone();
        for &i in &split.test {
            let s = &mut perturbed[i];
            s.moca = 30.0 - s.moca;
            s.demographics = [200.0, 0.0, 1.0 - s.demographics[2]];
            let m = s.maps.as_mut().unwrap();
            let dims = m.contrast.dims();
            m.contrast = ScalarMap::new(dims, MapKind::Contrast, vec![50.0; dims.len()]).unwrap();
            m.speech_tmap = ScalarMap::new(dims, MapKind::TmapSpeechGtSilence, vec![9.0; dims.len()]).unwrap();
        }
        let changed = ExperimentData::new(perturbed).unwrap();
        let other = run_iteration(&changed, &cfg, split, &ClassifierKind::ALL).unwrap();
        assert_eq!(base.trace, other.trace);
    }

    #[test]
    fn demographics_only_runs_without_maps() {
        let mut subjects = toy_data(5, 20, 0.0).subjects;
        for s in &mut subjects {
            s.maps = None;
        }
        let data = ExperimentData::new(subjects).unwrap();
        assert!(run_experiment(&data, &small_cfg(FeatureCombo::Demographics)).is_ok());
        assert!(run_experiment(&data, &small_cfg(FeatureCombo::SpeechTmap)).is_err());
    }
}
