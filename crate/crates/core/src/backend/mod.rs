//! Speaker-level back-ends: LDA, linear SVM, logistic regression, word and
//! phone level fusion, and evaluation metrics.

mod fusion;
mod lda;
mod logreg;
mod metrics;
mod model;
mod repr;
mod svm;

pub use fusion::{l1_distance, majority_vote, pairwise_compare, sample_pairs, stack_accuracies, AccuracyStack, MISSING_ACCURACY};
pub use lda::{lda_fit, LdaModel};
pub use logreg::{logreg_train, LogRegConfig, LogisticModel};
pub use metrics::{evaluate, Metrics};
pub use model::{BackendConfig, BackendModel, Classifier, ClassifierKind};
pub use repr::{parse_label, read_labels, write_labels, Representation, RepresentationArchive, RepresentationKind};
pub use svm::{svm_objective, svm_train, LinearSvmModel, SvmConfig};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub(crate) fn check_binary(x: ArrayView2<'_, f64>, labels: &[bool]) -> Result<()> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch { what: "labels", expected: x.nrows(), got: labels.len() });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels("binary classifier needs both classes".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classifier inputs"));
    }
    Ok(())
}
