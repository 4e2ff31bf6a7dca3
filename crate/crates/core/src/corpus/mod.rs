//! Manifests, speaker-disjoint folds, subject-level assembly, frame
//! segmentations and the synthetic corpus generator.

mod assemble;
mod folds;
mod manifest;
mod segments;
mod synth;

pub use assemble::{assemble_subject_utterance, by_speaker, speaker_cmvn};
pub use folds::{make_folds, FoldPlan};
pub use manifest::{load_manifest, parse_manifest, speaker_labels, write_manifest, Diagnosis, ManifestEntry};
pub use segments::{frame_labels, read_segments, write_segments, Segment};
pub use synth::{synth_generate, SubstitutionRule, SyntheticCorpus, SyntheticSpec, DEFAULT_RULES};
