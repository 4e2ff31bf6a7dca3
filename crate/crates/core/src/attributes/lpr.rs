use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::{FeatureArchive, FeatureKind, FeatureMatrix};

pub const DEFAULT_LPR_CLAMP: f64 = 1e-6;

/// `log(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Replaces every posterior `p` by `logit(clamp(p, eps, 1 - eps))`.
pub fn lpr_transform(posteriors: &FeatureMatrix, eps: f64) -> Result<FeatureMatrix> {
    if !posteriors.kind().is_posterior() {
        return Err(Error::KindMismatch {
            expected: "phone-posterior or attribute-posterior".into(),
            got: posteriors.kind().to_string(),
        });
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("LPR clamp {eps} outside (0, 0.5)")));
    }
    check_range(posteriors)?;
    let out = posteriors.frames().mapv(|p| logit(p.clamp(eps, 1.0 - eps)));
    posteriors.replace_frames(FeatureKind::Lpr, out)
}

fn check_range(m: &FeatureMatrix) -> Result<()> {
    for ((frame, class), &value) in m.frames().indexed_iter() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::PosteriorRange {
                utterance: m.utterance_id().to_string(),
                frame,
                class,
                value,
            });
        }
    }
    Ok(())
}

/// Entries in `[0, 1]`; softmax rows additionally sum to one within 1e-6.
pub fn validate_posteriors(m: &FeatureMatrix) -> Result<()> {
    if !m.kind().is_posterior() {
        return Err(Error::KindMismatch {
            expected: "phone-posterior or attribute-posterior".into(),
            got: m.kind().to_string(),
        });
    }
    check_range(m)?;
    if m.kind() == FeatureKind::PhonePosterior {
        for (frame, row) in m.frames().rows().into_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::PosteriorRowSum {
                    utterance: m.utterance_id().to_string(),
                    frame,
                    sum,
                });
            }
        }
    }
    Ok(())
}

/// Reads a posterior archive produced elsewhere and validates every entry.
pub fn ingest_posteriors(path: impl AsRef<Path>) -> Result<FeatureArchive> {
    let archive = FeatureArchive::read(path)?;
    for m in archive.values() {
        validate_posteriors(m)?;
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::classifier::sigmoid;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn post(frames: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new("u", FeatureKind::AttributePosterior, 0.01, frames).unwrap()
    }

    #[test]
    fn known_values() {
        let out = lpr_transform(&post(array![[0.5, 0.9, 1.0, 0.0]]), DEFAULT_LPR_CLAMP).unwrap();
        let f = out.frames();
        assert_eq!(f[[0, 0]], 0.0);
        // log(9) = 2.1972245773362196
        assert!((f[[0, 1]] - 2.197_224_577_336_219_6).abs() < 1e-5);
        let sat = ((1.0 - 1e-6) / 1e-6f64).ln();
        assert!((f[[0, 2]] - 13.8155).abs() < 1e-4);
        assert!((f[[0, 2]] - sat).abs() < 1e-9);
        assert!((f[[0, 3]] + sat).abs() < 1e-9);
        assert_eq!(out.kind(), FeatureKind::Lpr);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = lpr_transform(&post(array![[0.2, 0.3], [0.1, 1.3]]), 1e-6).unwrap_err();
        assert!(matches!(err, Error::PosteriorRange { frame: 1, class: 1, .. }), "{err}");
    }

    #[test]
    fn row_sum_checked_for_softmax_only() {
        let bad = FeatureMatrix::new("u", FeatureKind::PhonePosterior, 0.01, array![[0.5, 0.4]]).unwrap();
        assert!(matches!(validate_posteriors(&bad), Err(Error::PosteriorRowSum { .. })));
        assert!(validate_posteriors(&post(array![[0.5, 0.4]])).is_ok());
    }

    proptest! {
        #[test]
        fn odd_and_monotone(p in 1e-6f64..0.999_999, q in 1e-6f64..0.999_999) {
            let m = post(array![[p, 1.0 - p, q]]);
            let l = lpr_transform(&m, 1e-6).unwrap();
            let f = l.frames();
            prop_assert!((f[[0, 0]] + f[[0, 1]]).abs() < 1e-9);
            if p < q { prop_assert!(f[[0, 0]] < f[[0, 2]]); }
        }

        #[test]
        fn inverts_sigmoid(x in -10.0f64..10.0) {
            let l = lpr_transform(&post(array![[sigmoid(x)]]), 1e-6).unwrap();
            prop_assert!((l.frames()[[0, 0]] - x).abs() < 1e-9);
        }
    }
}
