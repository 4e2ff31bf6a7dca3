use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{speaker_labels, Diagnosis, ManifestEntry};
use crate::error::{Error, Result};

/// Speakers of each cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn test_speakers(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    /// Every speaker listed in another fold.
    pub fn train_speakers(&self, fold: usize) -> Vec<String> {
        let set: BTreeSet<&String> =
            self.folds.iter().enumerate().filter(|(k, _)| *k != fold).flat_map(|(_, f)| f).collect();
        set.into_iter().cloned().collect()
    }

    pub fn fold_of(&self, speaker: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|s| s == speaker))
    }

    /// Speakers appearing in more than one fold.
    pub fn duplicated_speakers(&self) -> Vec<String> {
        let mut seen = BTreeMap::<&str, usize>::new();
        for s in self.folds.iter().flatten() {
            *seen.entry(s).or_default() += 1;
        }
        seen.into_iter().filter(|(_, n)| *n > 1).map(|(s, _)| s.to_string()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let plan: Self = serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        if plan.folds.len() != plan.n_folds {
            return Err(Error::malformed("fold plan", format!("{} folds listed, n_folds = {}", plan.folds.len(), plan.n_folds)));
        }
        Ok(plan)
    }
}

/// Stratified speaker-disjoint folds. Each class is shuffled with the seed
/// and dealt round-robin; the SSD deal continues where the TD deal stopped so
/// fold sizes differ by at most one.
pub fn make_folds(entries: &[ManifestEntry], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    let speakers = speaker_labels(entries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); n_folds];
    let mut next = 0;
    for class in [Diagnosis::Td, Diagnosis::Ssd] {
        let mut ids: Vec<&String> = speakers.iter().filter(|(_, d)| **d == class).map(|(s, _)| s).collect();
        if ids.len() < n_folds {
            return Err(Error::TooFew { what: "speakers per class for the requested folds", need: n_folds, got: ids.len() });
        }
        ids.shuffle(&mut rng);
        for id in ids {
            folds[next % n_folds].push(id.clone());
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan { n_folds, folds })
}
