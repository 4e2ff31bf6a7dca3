//! Speech attributes, frame-level posterior extraction and log-posterior
//! ratio (LPR) features.

mod classifier;
mod lpr;
mod map;

pub use classifier::{predict_posteriors, train_frame_classifier, FrameClassifier, LabeledUtterance, TaskKind, TrainConfig};
pub use lpr::{ingest_posteriors, logit, lpr_transform, validate_posteriors, DEFAULT_LPR_CLAMP};
pub use map::{build_attribute_map, Attribute, AttributeCategory, AttributeMap, PhoneInventory, CANTONESE_TABLE};
pub(crate) use classifier::sigmoid;
