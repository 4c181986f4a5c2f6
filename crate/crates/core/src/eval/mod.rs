//! Repeated stratified shuffle-split evaluation, AUC and Wilcoxon statistics,
//! and report aggregation.

mod experiment;
mod metrics;
mod report;
mod split;

pub use experiment::{
    run_combo, run_experiment, run_iteration, AucDistribution, ClassifierKind, ExperimentConfig, ExperimentData,
    FeatureCombo, IterationOutput, IterationRecord, IterationTrace, MaskScope, Selections, SubjectData, SubjectMaps,
};
pub use metrics::{roc_auc, wilcoxon_signed_rank, Wilcoxon, WILCOXON_EXACT_MAX_N};
pub use report::{summarize, PairwiseRow, Report, ReportRow};
pub use split::{split_fingerprint, stratified_shuffle_split, test_class_counts, Split};
