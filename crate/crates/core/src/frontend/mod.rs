//! Acoustic front-end: WAV ingestion, log-mel filter-bank and MFCC frames,
//! mean/variance normalisation, utterance concatenation and the binary
//! feature archive shared by every downstream stage.

pub(crate) mod archive;
mod audio;
pub(crate) mod fbank;
mod features;
mod mfcc;

pub use archive::FeatureArchive;
pub use audio::{load_wav, AudioBuffer};
pub use fbank::{compute_filterbank, frame_count, mel_band_centers, FbankConfig, MelFilterbank};
pub use features::{
    append_deltas, apply_cmvn, cmvn, cmvn_stats, concat_utterances, CmvnStats, FeatureKind,
    FeatureMatrix,
};
pub use mfcc::{compute_mfcc, dct_matrix};
