//! Feature pipeline and classifiers: standardization, correlation filter,
//! L1 selection, SVC and Gaussian naive Bayes.

mod features;
mod filter;
mod gnb;
mod l1svc;
mod svc;

pub use features::{FeatureMatrix, Provenance, Standardizer};
pub use filter::{pearson_columns, pearson_filter};
pub use gnb::{gnb_fit, GnbModel};
pub use l1svc::{l1svc_fit, l1svc_select, L1SvcConfig, L1SvcModel};
pub use svc::{svc_fit, Kernel, SvcConfig, SvcModel};

/// Maps boolean labels (true = positive class) to ±1.
pub(crate) fn signed_labels(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect()
}

pub(crate) fn check_two_classes(y: &[bool]) -> crate::Result<()> {
    let pos = y.iter().filter(|&&p| p).count();
    if pos == 0 || pos == y.len() {
        return Err(crate::Error::Training(format!("need both classes, got {pos} positive of {}", y.len())));
    }
    Ok(())
}
