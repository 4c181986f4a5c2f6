//! On-disk artifacts: NIfTI-1 volumes, event and motion tables, cohort manifests.

pub mod cohort;
pub mod events;
pub mod motion;
pub mod nifti;

pub use cohort::{
    read_cohort_manifest, write_cohort_manifest, CohortRecord, Gender, Label, LabelRule, DEMOGRAPHIC_NAMES,
};
pub use events::{read_events_tsv, write_events_tsv, Condition, Event, EventTimeline};
pub use motion::{read_motion_tsv, write_motion_tsv, MotionRegressors};
pub use nifti::{read_nifti, write_map, write_volume, write_volume_as, NiftiDtype, NiftiImage};
