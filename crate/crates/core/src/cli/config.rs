use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::LabelRule;
use crate::design::DesignConfig;
use crate::error::{Error, Result};
use crate::eval::{ClassifierKind, ExperimentConfig, FeatureCombo};
use crate::glm::GlmConfig;
use crate::synth::PhantomConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    /// Which combo's selections to map.
    pub combo: FeatureCombo,
    /// Voxels at or above this selection probability form the reported set.
    pub probability_threshold: f64,
    pub top_k: usize,
    /// Threshold applied to an optional atlas probability map.
    pub atlas_threshold: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { combo: FeatureCombo::All, probability_threshold: 0.5, top_k: 3, atlas_threshold: 0.25 }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomConfig,
    pub design: DesignConfig,
    pub glm: GlmConfig,
    pub label_rule: LabelRule,
    pub experiment: ExperimentConfig,
    pub combos: Vec<FeatureCombo>,
    pub classifiers: Vec<ClassifierKind>,
    pub localize: LocalizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomConfig::default(),
            design: DesignConfig::default(),
            glm: GlmConfig::default(),
            label_rule: LabelRule::default(),
            experiment: ExperimentConfig::default(),
            combos: FeatureCombo::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            localize: LocalizeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    /// Applies a `--seed` override to every seeded stage.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.phantom.seed = s;
            self.experiment.seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.experiment.validate()?;
        if self.combos.is_empty() || self.classifiers.is_empty() {
            return Err(Error::Config("combos and classifiers must be non-empty".into()));
        }
        let mut c = self.combos.clone();
        c.sort();
        c.dedup();
        if c.len() != self.combos.len() {
            return Err(Error::Config("duplicate combo".into()));
        }
        let l = &self.localize;
        if !(l.probability_threshold > 0.0 && l.probability_threshold <= 1.0) {
            return Err(Error::Config(format!("probability_threshold {} outside (0, 1]", l.probability_threshold)));
        }
        if l.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"experiment": {"n_iter": 7}, "combos": ["all"]}"#).unwrap();
        assert_eq!(c.experiment.n_iter, 7);
        assert_eq!(c.experiment.test_fraction, 0.05);
        assert_eq!(c.combos, vec![FeatureCombo::All]);
        assert_eq!(c.classifiers.len(), 2);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"experiments": {}}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::default().with_seed(Some(9));
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.phantom.seed, 9);
    }
}
