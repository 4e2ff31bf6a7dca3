//! Subject-level screening for speech sound disorder in child speech.
//!
//! Word recordings of one child are concatenated into a long utterance, turned
//! into frame features (log-mel filter-bank, MFCC, or log-posterior ratios of
//! phone / articulatory-attribute classifiers) and summarised as an i-vector
//! drawn from a GMM-UBM total-variability model. A linear back-end (optional
//! LDA followed by a linear SVM or logistic regression) separates typically
//! developing children from disordered ones. Word-majority and phone-level
//! accuracy-stack fusion baselines, paralinguistic functionals, and a
//! speaker-disjoint cross-validation harness round out the pipeline.

pub mod attributes;
pub mod backend;
pub mod corpus;
pub mod error;
pub mod frontend;
pub mod ivector;
mod linalg;
pub mod paralinguistics;
pub mod pipeline;

pub use error::{Error, Result};
pub use frontend::{AudioBuffer, CmvnStats, FeatureArchive, FeatureKind, FeatureMatrix};
pub use ivector::{BaumWelchStats, DiagGmm, IVector, TotalVariability};
