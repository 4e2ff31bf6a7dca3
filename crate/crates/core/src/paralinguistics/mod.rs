//! Frame-level low-level descriptors (LLDs) and utterance-level statistical
//! functionals over them.

mod functionals;
mod lld;

pub use functionals::{apply_functionals, functional_names, percentile, FunctionalVector, FUNCTIONALS};
pub use lld::{compute_llds, LldConfig, LldTrack, LLD_NAMES};
