//! wasm-bindgen entry points for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string. The `*_json` functions
//! hold the logic and are what the native tests call.

use neuroglm::dataio::Condition;
use neuroglm::design::{canonical_hrf, event_regressor};
use neuroglm::eval::roc_auc;
use neuroglm::glm::{subject_tmaps_with, GlmConfig};
use neuroglm::stats::t_two_sided_p;
use neuroglm::synth::{generate_subject, phantom_design, plan_cohort, PhantomConfig};
use neuroglm::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

/// Canonical HRF and the speech and silence regressors of a block design.
pub fn regressors_json(tr: f64, nt: usize, speech_block_s: f64, silence_block_s: f64, gap_s: f64) -> Result<Value> {
    let cfg = PhantomConfig { n_subjects: 4, nt, tr, speech_block_s, silence_block_s, gap_s, ..Default::default() };
    let plan = plan_cohort(&cfg)?;
    let bins = cfg.design.microtime_bins;
    let hrf = canonical_hrf(tr / bins as f64, cfg.design.hrf_duration_seconds)?;
    let speech = event_regressor(&plan.events, Condition::Speech, nt, tr, &hrf, bins)?;
    let silence = event_regressor(&plan.events, Condition::Silence, nt, tr, &hrf, bins)?;
    let blocks: Vec<Value> = plan
        .events
        .events()
        .iter()
        .map(|e| json!({ "onset": e.onset, "duration": e.duration, "condition": e.condition.as_str() }))
        .collect();
    Ok(json!({
        "tr": tr,
        "hrf_dt": hrf.dt_seconds,
        "hrf": hrf.samples,
        "hrf_peak_s": hrf.peak_time(),
        "speech": speech,
        "silence": silence,
        "events": blocks,
    }))
}

#[wasm_bindgen]
pub fn regressors(
    tr: f64,
    nt: usize,
    speech_block_s: f64,
    silence_block_s: f64,
    gap_s: f64,
) -> std::result::Result<String, JsError> {
    to_js(regressors_json(tr, nt, speech_block_s, silence_block_s, gap_s))
}

/// Signed speech-vs-silence t for one axial slice of a single phantom
/// subject, plus the whole-volume false-positive rate outside planted voxels.
pub fn phantom_slice_json(
    seed: u64,
    ar_rho: f64,
    noise_sd: f64,
    prewhiten: bool,
    bias_correction: bool,
    z: usize,
) -> Result<Value> {
    let cfg = PhantomConfig { n_subjects: 4, ar_rho, noise_sd, seed, ..Default::default() };
    let dims = cfg.dims3();
    if z >= dims.nz {
        return Err(Error::Index(format!("slice {z} outside 0..{}", dims.nz)));
    }
    let plan = plan_cohort(&cfg)?;
    let g = generate_subject(&cfg, &plan, 0, false)?;
    let design = phantom_design(&plan.truth, &plan.events, &g.motion)?;
    let glm = GlmConfig { prewhiten, ar1_bias_correction: bias_correction, ..Default::default() };
    let tm = subject_tmaps_with(&g.bold, &design, &glm)?;
    let t = tm.signed_t();
    let dof = tm.summary.dof as f64;

    let mut planted = vec![false; dims.len()];
    for p in &plan.truth.subjects[0].planted {
        planted[p.voxel] = true;
    }
    let background: Vec<usize> = (0..dims.len()).filter(|&v| plan.brain[v] && !planted[v]).collect();
    let hits = background.iter().filter(|&&v| t_two_sided_p(t[v], dof) < 0.05).count();

    let mut slice_t = Vec::with_capacity(dims.nx * dims.ny);
    let mut slice_planted = Vec::with_capacity(dims.nx * dims.ny);
    let mut slice_brain = Vec::with_capacity(dims.nx * dims.ny);
    for y in 0..dims.ny {
        for x in 0..dims.nx {
            let v = dims.linear_index(x, y, z)?;
            slice_t.push(t[v]);
            slice_planted.push(planted[v]);
            slice_brain.push(plan.brain[v]);
        }
    }
    Ok(json!({
        "nx": dims.nx,
        "ny": dims.ny,
        "nz": dims.nz,
        "z": z,
        "t": slice_t,
        "planted": slice_planted,
        "brain": slice_brain,
        "dof": tm.summary.dof,
        "rho_mean": tm.summary.rho_mean,
        "background_voxels": background.len(),
        "false_positive_rate": hits as f64 / background.len().max(1) as f64,
    }))
}

#[wasm_bindgen]
pub fn phantom_slice(
    seed: u64,
    ar_rho: f64,
    noise_sd: f64,
    prewhiten: bool,
    bias_correction: bool,
    z: usize,
) -> std::result::Result<String, JsError> {
    to_js(phantom_slice_json(seed, ar_rho, noise_sd, prewhiten, bias_correction, z))
}

/// ROC curve and AUC for `n` positive scores from N(separation, 1) against
/// `n` negative scores from N(0, 1).
pub fn roc_json(seed: u64, n: usize, separation: f64) -> Result<Value> {
    if n == 0 {
        return Err(Error::Validation("need at least one score per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let positive = i < n;
        let z: f64 = rng.sample(StandardNormal);
        scores.push(if positive { z + separation } else { z });
        labels.push(positive);
    }
    let auc = roc_auc(&scores, &labels)?;

    // sweep thresholds from high to low, one point per distinct score
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = vec![[0.0, 0.0]];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push([fp as f64 / n as f64, tp as f64 / n as f64]);
    }
    Ok(json!({ "auc": auc, "curve": curve, "n": n, "separation": separation }))
}

#[wasm_bindgen]
pub fn roc(seed: u64, n: usize, separation: f64) -> std::result::Result<String, JsError> {
    to_js(roc_json(seed, n, separation))
}
