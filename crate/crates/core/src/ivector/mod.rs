//! GMM-UBM training, Baum-Welch statistics, total-variability training and
//! i-vector extraction for the super-vector model `mu = m + T w`.

mod gmm;
mod model_io;
mod stats;
mod tv;

pub use gmm::{train_ubm, DiagGmm, UbmConfig, UbmTraining};
pub use model_io::{read_model, write_model};
pub use stats::{accumulate_stats, BaumWelchStats};
pub use tv::{extract_ivector, train_tv, train_tv_from, IVector, TotalVariability, TvConfig, TvTraining};

/// Frames per work unit in parallel E-steps. Partial sums are combined in
/// chunk order, so results do not depend on the thread count.
pub(crate) const CHUNK_FRAMES: usize = 2048;
