use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LogisticModel;
use crate::error::{Error, Result};

/// Accuracy used for a tracked consonant with no test segments.
pub const MISSING_ACCURACY: f64 = 0.5;

/// Subject-level decision from word-level decisions. Ties go to the
/// positive (disordered) class.
pub fn majority_vote(decisions: &[bool]) -> Result<bool> {
    if decisions.is_empty() {
        return Err(Error::TooFew { what: "word decisions", need: 1, got: 0 });
    }
    let pos = decisions.iter().filter(|&&d| d).count();
    Ok(2 * pos >= decisions.len())
}

pub fn l1_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Compares every test segment of a consonant with every reference segment
/// of the same consonant. The pair classifier's positive class means
/// "different"; the returned accuracy per consonant is the fraction of pairs
/// it judges "same".
pub fn pairwise_compare(
    test: &BTreeMap<String, Vec<Array1<f64>>>,
    references: &BTreeMap<String, Vec<Array1<f64>>>,
    lr: &LogisticModel,
) -> Result<BTreeMap<String, f64>> {
    if lr.weights.len() != 1 {
        return Err(Error::DimensionMismatch { what: "pair classifier input", expected: 1, got: lr.weights.len() });
    }
    let mut out = BTreeMap::new();
    for (consonant, segments) in test {
        if segments.is_empty() {
            continue;
        }
        let refs = references
            .get(consonant)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("no reference embeddings for consonant {consonant}")))?;
        let mut same = 0usize;
        for s in segments {
            for r in refs {
                if s.len() != r.len() {
                    return Err(Error::DimensionMismatch { what: "segment embedding", expected: r.len(), got: s.len() });
                }
                if lr.weights[0] * l1_distance(s, r) + lr.bias < 0.0 {
                    same += 1;
                }
            }
        }
        out.insert(consonant.clone(), same as f64 / (segments.len() * refs.len()) as f64);
    }
    Ok(out)
}

/// Training pairs for the same/different classifier: `n_same` pairs of
/// segments sharing a consonant (from different speakers where possible) and
/// `n_different` pairs with different consonants. Returns the L1 distance
/// feature and `true` for "different".
pub fn sample_pairs(
    groups: &BTreeMap<String, Vec<(String, Array1<f64>)>>,
    n_same: usize,
    n_different: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<bool>)> {
    let pairable: Vec<&Vec<(String, Array1<f64>)>> = groups.values().filter(|g| g.len() >= 2).collect();
    let nonempty: Vec<&Vec<(String, Array1<f64>)>> = groups.values().filter(|g| !g.is_empty()).collect();
    if pairable.is_empty() || nonempty.len() < 2 {
        return Err(Error::TooFew { what: "consonant groups for pair sampling", need: 2, got: nonempty.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feats = Vec::with_capacity(n_same + n_different);
    let mut labels = Vec::with_capacity(n_same + n_different);
    for _ in 0..n_same {
        let g = pairable.choose(&mut rng).expect("non-empty");
        let i = rng.random_range(0..g.len());
        let mut j = rng.random_range(0..g.len() - 1);
        if j >= i {
            j += 1;
        }
        for _ in 0..8 {
            if g[j].0 != g[i].0 {
                break;
            }
            j = rng.random_range(0..g.len() - 1);
            if j >= i {
                j += 1;
            }
        }
        feats.push(l1_distance(&g[i].1, &g[j].1));
        labels.push(false);
    }
    for _ in 0..n_different {
        let a = rng.random_range(0..nonempty.len());
        let mut b = rng.random_range(0..nonempty.len() - 1);
        if b >= a {
            b += 1;
        }
        let x = &nonempty[a].choose(&mut rng).expect("non-empty").1;
        let y = &nonempty[b].choose(&mut rng).expect("non-empty").1;
        feats.push(l1_distance(x, y));
        labels.push(true);
    }
    let n = feats.len();
    Ok((Array2::from_shape_vec((n, 1), feats).expect("sized"), labels))
}

/// Per-consonant accuracies in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStack {
    pub values: Array1<f64>,
    /// Consonants that had no accuracy and were filled with
    /// [`MISSING_ACCURACY`].
    pub missing: Vec<String>,
}

pub fn stack_accuracies(per_consonant: &BTreeMap<String, f64>, order: &[String]) -> AccuracyStack {
    let mut missing = Vec::new();
    let values = order
        .iter()
        .map(|c| match per_consonant.get(c) {
            Some(&a) => a,
            None => {
                missing.push(c.clone());
                MISSING_ACCURACY
            }
        })
        .collect();
    if !missing.is_empty() {
        log::warn!("no accuracy for consonants {missing:?}; using {MISSING_ACCURACY}");
    }
    AccuracyStack { values, missing }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{logreg_train, LogRegConfig};
    use ndarray::array;

    #[test]
    fn votes() {
        assert!(majority_vote(&[true, true, false]).unwrap());
        assert!(!majority_vote(&[false, false, false, false, true]).unwrap());
        assert!(majority_vote(&[true, false]).unwrap());
        assert!(majority_vote(&[]).is_err());
    }

    fn lr_at(threshold: f64) -> LogisticModel {
        LogisticModel { weights: array![1.0], bias: -threshold, c_param: 1.0, loss_history: vec![] }
    }

    #[test]
    fn identical_embeddings_follow_zero_distance_decision() {
        let e = array![0.3, -1.0];
        let test = BTreeMap::from([("p".to_string(), vec![e.clone(), e.clone()])]);
        let refs = BTreeMap::from([("p".to_string(), vec![e.clone(); 3])]);
        assert_eq!(pairwise_compare(&test, &refs, &lr_at(1.0)).unwrap()["p"], 1.0);
        assert_eq!(pairwise_compare(&test, &refs, &lr_at(-1.0)).unwrap()["p"], 0.0);
    }

    #[test]
    fn far_test_segments_judged_different() {
        let mut groups = BTreeMap::new();
        for (c, center) in [("p", 0.0), ("t", 10.0), ("k", 20.0)] {
            let segs: Vec<_> = (0..6).map(|i| (format!("s{i}"), array![center + 0.01 * i as f64])).collect();
            groups.insert(c.to_string(), segs);
        }
        let (x, y) = sample_pairs(&groups, 50, 50, 1).unwrap();
        let lr = logreg_train(x.view(), &y, &LogRegConfig::default()).unwrap();
        let refs = BTreeMap::from([("p".to_string(), vec![array![0.0]; 4])]);
        let near = BTreeMap::from([("p".to_string(), vec![array![0.02]])]);
        let far = BTreeMap::from([("p".to_string(), vec![array![10.0]])]);
        assert!(pairwise_compare(&near, &refs, &lr).unwrap()["p"] > 0.99);
        assert!(pairwise_compare(&far, &refs, &lr).unwrap()["p"] < 0.01);
    }

    #[test]
    fn missing_reference_is_error() {
        let test = BTreeMap::from([("s".to_string(), vec![array![1.0]])]);
        assert!(pairwise_compare(&test, &BTreeMap::new(), &lr_at(1.0)).is_err());
    }

    #[test]
    fn l1_symmetric() {
        let a = array![1.0, -2.0, 0.5];
        let b = array![0.0, 3.0, 0.25];
        assert_eq!(l1_distance(&a, &b), l1_distance(&b, &a));
    }

    #[test]
    fn stacking_order_and_sentinel() {
        let order: Vec<String> = ["p", "t", "k"].iter().map(|s| s.to_string()).collect();
        let full = BTreeMap::from([("k".to_string(), 1.0), ("p".to_string(), 1.0), ("t".to_string(), 1.0)]);
        assert_eq!(stack_accuracies(&full, &order).values, array![1.0, 1.0, 1.0]);
        let partial = BTreeMap::from([("k".to_string(), 0.2), ("p".to_string(), 0.9)]);
        let s = stack_accuracies(&partial, &order);
        assert_eq!(s.values, array![0.9, 0.5, 0.2]);
        assert_eq!(s.missing, vec!["t".to_string()]);
    }
}
