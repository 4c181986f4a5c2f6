use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::{ensure_dir, read_json, write_json, write_provenance, write_text, InputManifest};
use crate::dataio::{read_cohort_manifest, read_events_tsv, read_motion_tsv, read_nifti, write_map, CohortRecord};
use crate::design::build_design;
use crate::error::{Error, Result};
use crate::eval::{run_combo, summarize, AucDistribution, ExperimentConfig, ExperimentData, Selections, SubjectMaps};
use crate::glm::{subject_tmaps_with, GlmSummary};
use crate::group::{atlas_overlap, group_mask, region_distribution, selection_probability_map, top_clusters, Cluster};
use crate::synth::write_phantom_cohort;
use crate::volume::{BrainMask, Dims3, MapKind, ScalarMap};

/// Index written by `tmap` next to the per-subject maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmapIndex {
    pub dims: Dims3,
    pub voxel_size_mm: [f64; 3],
    pub subjects: Vec<TmapEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmapEntry {
    pub subject_id: String,
    pub speech_tmap: PathBuf,
    pub silence_tmap: PathBuf,
    pub contrast: PathBuf,
    pub summary: GlmSummary,
}

/// `selections.json` as written by `classify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionsFile {
    pub dims: Option<Dims3>,
    pub voxel_size_mm: [f64; 3],
    pub combos: Vec<Selections>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub n_subjects: usize,
    pub speech_voxels: usize,
    pub silence_voxels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeSummary {
    pub combo: String,
    pub n_iter: usize,
    pub probability_threshold: f64,
    pub selected_voxels: Vec<usize>,
    pub clusters: Vec<Cluster>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atlas_overlap: Option<f64>,
}

fn load_cohort(path: &Path, cfg: &RunConfig, inputs: &mut InputManifest) -> Result<Vec<CohortRecord>> {
    inputs.add(path)?;
    read_cohort_manifest(path, cfg.label_rule)
}

pub fn simulate(cfg: &RunConfig, inputs: InputManifest, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let truth = write_phantom_cohort(&cfg.phantom, out)?;
    info!("wrote {} phantom subjects to {}", truth.subjects.len(), out.display());
    write_provenance(out, cfg, &inputs)
}

pub fn tmap(
    cfg: &RunConfig,
    mut inputs: InputManifest,
    cohort: &Path,
    events: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let records = load_cohort(cohort, cfg, &mut inputs)?;
    if records.is_empty() {
        return Err(Error::Validation(format!("{}: no subjects", cohort.display())));
    }
    let events_path = match events {
        Some(p) => p.to_path_buf(),
        None => cohort.parent().unwrap_or(Path::new(".")).join("events.tsv"),
    };
    inputs.add(&events_path)?;
    for r in &records {
        inputs.add(&r.bold_path)?;
        inputs.add(&r.motion_path)?;
    }
    ensure_dir(out)?;
    let first = read_nifti(&records[0].bold_path)?.into_volume()?;
    let (nt, tr, dims, vs) = (first.nt(), first.tr_seconds(), first.dims(), first.voxel_size_mm());
    drop(first);
    let timeline = read_events_tsv(&events_path, nt as f64 * tr)?;
    let entries = records
        .par_iter()
        .map(|r| -> Result<TmapEntry> {
            let bold = read_nifti(&r.bold_path)?.into_volume()?;
            if bold.nt() != nt || bold.dims() != dims || (bold.tr_seconds() - tr).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "{}: geometry {}x{} at TR {} differs from {}x{} at TR {}",
                    r.subject_id,
                    bold.dims(),
                    bold.nt(),
                    bold.tr_seconds(),
                    dims,
                    nt,
                    tr
                )));
            }
            let motion = read_motion_tsv(&r.motion_path, nt)?;
            let design = build_design(&timeline, &motion, nt, tr, &cfg.design)?;
            let tm = subject_tmaps_with(&bold, &design, &cfg.glm)?;
            let entry = TmapEntry {
                subject_id: r.subject_id.clone(),
                speech_tmap: format!("{}_speech_tmap.nii", r.subject_id).into(),
                silence_tmap: format!("{}_silence_tmap.nii", r.subject_id).into(),
                contrast: format!("{}_contrast.nii", r.subject_id).into(),
                summary: tm.summary.clone(),
            };
            write_map(out.join(&entry.speech_tmap), &tm.speech_gt_silence, vs)?;
            write_map(out.join(&entry.silence_tmap), &tm.silence_gt_speech, vs)?;
            write_map(out.join(&entry.contrast), &tm.contrast, vs)?;
            info!(
                "{}: rho mean {:.3}, {} degenerate voxels",
                r.subject_id, tm.summary.rho_mean, tm.summary.n_degenerate
            );
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let index = TmapIndex { dims, voxel_size_mm: vs, subjects: entries };
    write_json(&out.join("tmaps.json"), &index)?;
    write_provenance(out, cfg, &inputs)
}

fn read_map_checked(path: &Path, dims: Dims3, kind: MapKind, inputs: &mut InputManifest) -> Result<ScalarMap> {
    inputs.add(path)?;
    let map = read_nifti(path)?.into_map()?;
    if map.dims() != dims {
        return Err(Error::Dims(format!("{}: {} vs index {}", path.display(), map.dims(), dims)));
    }
    map.with_kind(kind)
}

/// Reads `tmaps.json` and every map it lists, keyed by subject id.
fn load_tmaps(dir: &Path, inputs: &mut InputManifest) -> Result<(TmapIndex, HashMap<String, SubjectMaps>)> {
    let index_path = dir.join("tmaps.json");
    inputs.add(&index_path)?;
    let index: TmapIndex = read_json(&index_path)?;
    let mut maps = HashMap::new();
    for e in &index.subjects {
        let m = SubjectMaps {
            contrast: read_map_checked(&dir.join(&e.contrast), index.dims, MapKind::Contrast, inputs)?,
            speech_tmap: read_map_checked(&dir.join(&e.speech_tmap), index.dims, MapKind::TmapSpeechGtSilence, inputs)?,
            silence_tmap: read_map_checked(
                &dir.join(&e.silence_tmap),
                index.dims,
                MapKind::TmapSilenceGtSpeech,
                inputs,
            )?,
        };
        maps.insert(e.subject_id.clone(), m);
    }
    Ok((index, maps))
}

pub fn mask(cfg: &RunConfig, mut inputs: InputManifest, tmaps: &Path, out: &Path) -> Result<()> {
    let (index, maps) = load_tmaps(tmaps, &mut inputs)?;
    let contrasts: Vec<&ScalarMap> = index.subjects.iter().map(|e| &maps[&e.subject_id].contrast).collect();
    let negated: Vec<ScalarMap> = contrasts
        .iter()
        .map(|m| ScalarMap::new(m.dims(), MapKind::Contrast, m.data().iter().map(|v| -v).collect()))
        .collect::<Result<_>>()?;
    let speech = group_mask(&contrasts, &cfg.experiment.mask)?;
    let silence = group_mask(&negated.iter().collect::<Vec<_>>(), &cfg.experiment.mask)?;
    if speech.count() == 0 || silence.count() == 0 {
        warn!("group mask is empty (speech {}, silence {})", speech.count(), silence.count());
    }
    ensure_dir(out)?;
    write_map(out.join("speech_mask.nii"), &speech.to_map(), index.voxel_size_mm)?;
    write_map(out.join("silence_mask.nii"), &silence.to_map(), index.voxel_size_mm)?;
    let summary =
        MaskSummary { n_subjects: contrasts.len(), speech_voxels: speech.count(), silence_voxels: silence.count() };
    write_json(&out.join("mask.json"), &summary)?;
    write_provenance(out, cfg, &inputs)
}

pub fn classify(
    cfg: &RunConfig,
    mut inputs: InputManifest,
    cohort: &Path,
    tmaps: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let records = load_cohort(cohort, cfg, &mut inputs)?;
    let needs_maps = cfg.combos.iter().any(|c| c.uses_speech());
    let default_dir;
    let tmaps = match tmaps {
        Some(p) => p,
        None => {
            default_dir = cohort.parent().unwrap_or(Path::new(".")).join("tmaps");
            default_dir.as_path()
        }
    };
    let (maps, dims, vs) = match needs_maps {
        false => (None, None, [1.0; 3]),
        true => {
            let dir = tmaps;
            let (index, mut by_id) = load_tmaps(dir, &mut inputs)?;
            let maps = records
                .iter()
                .map(|r| {
                    by_id
                        .remove(&r.subject_id)
                        .ok_or_else(|| Error::MissingInput(dir.join(format!("{}_contrast.nii", r.subject_id))))
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(maps), Some(index.dims), index.voxel_size_mm)
        }
    };
    let data = ExperimentData::from_cohort(&records, maps)?;
    let mut dists: Vec<AucDistribution> = Vec::new();
    let mut selections = Vec::new();
    for &combo in &cfg.combos {
        let ecfg = ExperimentConfig { combo, ..cfg.experiment.clone() };
        let (d, sel) = run_combo(&data, &ecfg, &cfg.classifiers)?;
        for dist in &d {
            info!(
                "{}: mean AUC {:.3} (sd {:.3}, {} of {} iterations)",
                dist.label(),
                dist.mean(),
                dist.sd(),
                dist.n_effective(),
                dist.n_iter
            );
        }
        dists.extend(d);
        selections.push(sel);
    }
    ensure_dir(out)?;
    write_json(&out.join("distributions.json"), &dists)?;
    write_json(&out.join("selections.json"), &SelectionsFile { dims, voxel_size_mm: vs, combos: selections })?;
    write_provenance(out, cfg, &inputs)
}

pub fn localize(
    cfg: &RunConfig,
    mut inputs: InputManifest,
    selections: &Path,
    mask_path: Option<&Path>,
    atlas: Option<&Path>,
    labels: Option<&Path>,
    out: &Path,
) -> Result<()> {
    inputs.add(selections)?;
    let file: SelectionsFile = read_json(selections)?;
    let lc = &cfg.localize;
    let sel = file
        .combos
        .iter()
        .find(|s| s.combo == Some(lc.combo))
        .ok_or_else(|| Error::Validation(format!("no selections for combo {}", lc.combo.as_str())))?;
    let dims = file.dims.ok_or_else(|| Error::Validation("selections carry no voxel grid".into()))?;
    let mask = match mask_path {
        Some(p) => {
            inputs.add(p)?;
            let m = read_nifti(p)?.into_map()?;
            if m.dims() != dims {
                return Err(Error::Dims(format!("mask {} vs selections {}", m.dims(), dims)));
            }
            BrainMask::from_map_positive(&m)
        }
        None => BrainMask::full(dims),
    };
    let vs = file.voxel_size_mm;
    // per-split masks differ from any single mask file, so selections outside it are dropped
    let mut dropped = 0usize;
    let mut restrict = |sets: &[Vec<usize>]| -> Vec<Vec<usize>> {
        sets.iter()
            .map(|set| {
                let kept: Vec<usize> = set.iter().copied().filter(|&v| mask.is_included(v)).collect();
                dropped += set.len() - kept.len();
                kept
            })
            .collect()
    };
    let speech_sets = restrict(&sel.speech);
    let silence_sets = restrict(&sel.silence);
    if dropped > 0 {
        info!("{dropped} selected voxels outside the mask ignored");
    }
    let combined: Vec<Vec<usize>> = (0..sel.n_iter)
        .map(|i| {
            let mut v: Vec<usize> =
                speech_sets.get(i).into_iter().chain(silence_sets.get(i)).flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let speech = selection_probability_map(&speech_sets, &mask, sel.n_iter)?;
    let silence = selection_probability_map(&silence_sets, &mask, sel.n_iter)?;
    let both = selection_probability_map(&combined, &mask, sel.n_iter)?;
    ensure_dir(out)?;
    write_map(out.join("selection_probability_speech.nii"), &speech, vs)?;
    write_map(out.join("selection_probability_silence.nii"), &silence, vs)?;
    write_map(out.join("selection_probability.nii"), &both, vs)?;
    let selected: Vec<usize> =
        both.data().iter().enumerate().filter(|(_, &p)| p >= lc.probability_threshold).map(|(i, _)| i).collect();
    let clusters = if both.data().iter().any(|&p| p > 0.0) { top_clusters(&both, lc.top_k)? } else { Vec::new() };
    let selected_mask = BrainMask::from_indices(dims, &selected)?;
    let overlap = match atlas {
        Some(p) => {
            inputs.add(p)?;
            let a = read_nifti(p)?.into_map()?.with_kind(MapKind::AtlasProbability)?;
            Some(atlas_overlap(&selected_mask, &a, lc.atlas_threshold)?)
        }
        None => None,
    };
    if let Some(p) = labels {
        inputs.add(p)?;
        let l = read_nifti(p)?.into_map()?.with_kind(MapKind::AtlasLabels)?;
        let dist = region_distribution(&selected_mask, &l)?;
        write_text(&out.join("regions.csv"), &dist.to_csv(&HashMap::new()))?;
    }
    let summary = LocalizeSummary {
        combo: lc.combo.as_str().to_string(),
        n_iter: sel.n_iter,
        probability_threshold: lc.probability_threshold,
        selected_voxels: selected,
        clusters,
        atlas_overlap: overlap,
    };
    write_json(&out.join("localization.json"), &summary)?;
    write_provenance(out, cfg, &inputs)
}

pub fn report(cfg: &RunConfig, mut inputs: InputManifest, results: &Path, out: &Path) -> Result<()> {
    let path = results.join("distributions.json");
    inputs.add(&path)?;
    let dists: Vec<AucDistribution> = read_json(&path)?;
    let report = summarize(&dists)?;
    ensure_dir(out)?;
    write_text(&out.join("report.csv"), &report.report_csv())?;
    write_text(&out.join("pairwise.csv"), &report.pairwise_csv())?;
    write_text(&out.join("report.svg"), &report.svg())?;
    write_json(&out.join("report.json"), &report)?;
    write_provenance(out, cfg, &inputs)
}
