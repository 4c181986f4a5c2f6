//! Speech-contrast fMRI analysis: first-level GLM with AR(1) prewhitening,
//! positive-part t-maps, sparse voxel selection, SVC/GNB classification of
//! cognitive status, and a synthetic phantom cohort with known ground truth.

pub mod cli;
pub mod dataio;
pub mod design;
pub mod error;
pub mod eval;
pub mod glm;
pub mod group;
pub mod ml;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
