//! Phantom cohort with planted, score-linked speech effects and known ground
//! truth, for end-to-end verification.

mod oracle;
mod phantom;

pub use oracle::{oracle_glm, OracleAr1, OracleFit};
pub use phantom::{
    generate_subject, phantom_design, plan_cohort, reconstruct_noise_free, write_phantom_cohort, CohortPlan,
    GeneratedSubject, GroundTruth, PhantomConfig, PlantedRegion, PlantedVoxel, SubjectTruth,
};
