//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Relative paths are resolved
//! against the directory of the configuration file. Every key has a default
//! except `data.manifest`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::backend::{BackendConfig, ClassifierKind, LogRegConfig, SvmConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepresentationChoice {
    IvectorMfcc,
    IvectorPhoneLpr,
    IvectorAttributeLpr,
    Functional,
}

impl RepresentationChoice {
    pub const ALL: [Self; 4] = [Self::IvectorMfcc, Self::IvectorPhoneLpr, Self::IvectorAttributeLpr, Self::Functional];

    pub fn name(self) -> &'static str {
        match self {
            Self::IvectorMfcc => "ivector-mfcc",
            Self::IvectorPhoneLpr => "ivector-phone-lpr",
            Self::IvectorAttributeLpr => "ivector-attribute-lpr",
            Self::Functional => "functional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionChoice {
    Subject,
    WordMajority,
    PhoneStack,
}

impl FusionChoice {
    pub const ALL: [Self; 3] = [Self::Subject, Self::WordMajority, Self::PhoneStack];

    pub fn name(self) -> &'static str {
        match self {
            Self::Subject => "subject",
            Self::WordMajority => "word-majority",
            Self::PhoneStack => "phone-stack",
        }
    }
}

macro_rules! named_enum {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
                    let names: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                    Error::Config(format!(concat!("unknown ", $what, " {:?} (one of {})"), s, names.join(", ")))
                })
            }
        }
    };
}

named_enum!(RepresentationChoice, "representation");
named_enum!(FusionChoice, "fusion");

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    base_dir: PathBuf,
    values: BTreeMap<&'static str, String>,
}

/// Key, default value, description.
const KEYS: &[(&str, &str, &str)] = &[
    ("data.manifest", "", "manifest TSV"),
    ("data.features", "", "feature archive keyed by speaker/word (not needed for functional)"),
    ("data.segments", "", "phone segments, required for LPR representations and phone-stack"),
    ("data.embeddings", "", "optional per-segment embedding archive for phone-stack"),
    ("data.fold_plan", "", "optional JSON fold plan replacing the seeded split"),
    ("data.attribute_table", "", "optional attribute table replacing the built-in map"),
    ("experiment.representation", "ivector-attribute-lpr", "ivector-mfcc | ivector-phone-lpr | ivector-attribute-lpr | functional"),
    ("experiment.fusion", "subject", "subject | word-majority | phone-stack"),
    ("experiment.n_folds", "5", "cross-validation folds"),
    ("experiment.seed", "0", "seed for folds and every trained model"),
    ("experiment.cmvn", "true", "per-speaker mean/variance normalisation of frame features"),
    ("features.n_ceps", "20", "cepstra kept for ivector-mfcc"),
    ("features.lpr_clamp", "1e-6", "posterior clamp before the log ratio"),
    ("posterior.epochs", "100", "frame classifier epochs"),
    ("posterior.learning_rate", "1.0", "initial frame classifier step"),
    ("posterior.l2", "1e-4", "frame classifier weight decay"),
    ("posterior.batch_size", "0", "0 for full-batch descent"),
    ("ubm.components", "256", "UBM mixture components"),
    ("ubm.iterations", "20", "UBM EM iterations"),
    ("ubm.variance_floor", "1e-3", "variance floor relative to global variance"),
    ("ubm.init_frames", "100000", "frames sampled for k-means++"),
    ("tv.rank", "100", "i-vector dimension"),
    ("tv.iterations", "10", "total-variability EM iterations"),
    ("tv.length_norm", "false", "scale i-vectors to unit length"),
    ("backend.classifier", "svm", "svm | logreg"),
    ("backend.lda", "false", "LDA projection before the classifier"),
    ("backend.c", "1.0", "regularisation constant"),
    ("backend.balance_classes", "false", "inverse-frequency class weights"),
    ("backend.svm_iterations", "20000", "SVM subgradient iterations"),
    ("phone.same_pairs", "2000", "same-consonant training pairs for the pair classifier"),
    ("phone.pair_ratio", "1.0", "different-consonant pairs per same pair"),
];

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, found {v:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses configuration text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut values: BTreeMap<&'static str, String> = KEYS.iter().map(|(k, d, _)| (*k, d.to_string())).collect();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected section.key = value", i + 1)))?;
            let k = k.trim();
            let key = KEYS
                .iter()
                .map(|(name, _, _)| *name)
                .find(|name| *name == k)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key {k:?}", i + 1)))?;
            values.insert(key, v.trim().to_string());
        }
        let cfg = Self { base_dir: base_dir.into(), values };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Overrides one key, e.g. from the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = KEYS
            .iter()
            .map(|(name, _, _)| *name)
            .find(|name| *name == key)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        self.values.insert(key, value.to_string());
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if self.raw("data.manifest").is_empty() {
            return Err(Error::Config("data.manifest is required".into()));
        }
        let rep = self.representation()?;
        let fusion = self.fusion()?;
        if rep == RepresentationChoice::Functional && fusion != FusionChoice::Subject {
            return Err(Error::Config("functional representation supports only subject fusion".into()));
        }
        if rep != RepresentationChoice::Functional && self.raw("data.features").is_empty() && self.raw("data.embeddings").is_empty() {
            return Err(Error::Config(format!("{rep} needs data.features")));
        }
        let needs_segments = matches!(rep, RepresentationChoice::IvectorPhoneLpr | RepresentationChoice::IvectorAttributeLpr)
            || fusion == FusionChoice::PhoneStack;
        if needs_segments && self.raw("data.segments").is_empty() {
            return Err(Error::Config(format!("{rep} with {fusion} fusion needs data.segments")));
        }
        // parse everything once so errors surface before any work
        self.n_folds()?;
        self.seed()?;
        self.cmvn()?;
        self.n_ceps()?;
        self.lpr_clamp()?;
        self.posterior()?;
        self.ubm()?;
        self.tv()?;
        self.length_norm()?;
        self.backend()?;
        self.pairs()?;
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T> {
        self.raw(key).parse().map_err(|_| Error::Config(format!("{key}: cannot parse {:?}", self.raw(key))))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| self.base_dir.join(v))
    }

    pub fn manifest(&self) -> PathBuf {
        self.path("data.manifest").expect("validated")
    }

    pub fn features(&self) -> Option<PathBuf> {
        self.path("data.features")
    }

    pub fn segments(&self) -> Option<PathBuf> {
        self.path("data.segments")
    }

    pub fn embeddings(&self) -> Option<PathBuf> {
        self.path("data.embeddings")
    }

    pub fn fold_plan(&self) -> Option<PathBuf> {
        self.path("data.fold_plan")
    }

    pub fn attribute_table(&self) -> Option<PathBuf> {
        self.path("data.attribute_table")
    }

    pub fn representation(&self) -> Result<RepresentationChoice> {
        self.raw("experiment.representation").parse()
    }

    pub fn fusion(&self) -> Result<FusionChoice> {
        self.raw("experiment.fusion").parse()
    }

    pub fn n_folds(&self) -> Result<usize> {
        let n: usize = self.num("experiment.n_folds")?;
        if n < 2 {
            return Err(Error::Config("experiment.n_folds must be at least 2".into()));
        }
        Ok(n)
    }

    pub fn seed(&self) -> Result<u64> {
        self.num("experiment.seed")
    }

    pub fn cmvn(&self) -> Result<bool> {
        parse_bool("experiment.cmvn", self.raw("experiment.cmvn"))
    }

    pub fn n_ceps(&self) -> Result<usize> {
        self.num("features.n_ceps")
    }

    pub fn lpr_clamp(&self) -> Result<f64> {
        let eps: f64 = self.num("features.lpr_clamp")?;
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Config("features.lpr_clamp must be in (0, 0.5)".into()));
        }
        Ok(eps)
    }

    pub fn posterior(&self) -> Result<crate::attributes::TrainConfig> {
        let batch: usize = self.num("posterior.batch_size")?;
        Ok(crate::attributes::TrainConfig {
            learning_rate: self.num("posterior.learning_rate")?,
            epochs: self.num("posterior.epochs")?,
            l2: self.num("posterior.l2")?,
            seed: self.seed()?,
            batch_size: (batch > 0).then_some(batch),
        })
    }

    pub fn ubm(&self) -> Result<crate::ivector::UbmConfig> {
        Ok(crate::ivector::UbmConfig {
            n_components: self.num("ubm.components")?,
            n_iters: self.num("ubm.iterations")?,
            seed: self.seed()?,
            variance_floor: self.num("ubm.variance_floor")?,
            init_frames: self.num("ubm.init_frames")?,
            kmeans_iters: 10,
        })
    }

    pub fn tv(&self) -> Result<crate::ivector::TvConfig> {
        Ok(crate::ivector::TvConfig { rank: self.num("tv.rank")?, n_iters: self.num("tv.iterations")?, seed: self.seed()? })
    }

    pub fn length_norm(&self) -> Result<bool> {
        parse_bool("tv.length_norm", self.raw("tv.length_norm"))
    }

    pub fn backend(&self) -> Result<BackendConfig> {
        let classifier: ClassifierKind = self.raw("backend.classifier").parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let c: f64 = self.num("backend.c")?;
        if !(c > 0.0) {
            return Err(Error::Config("backend.c must be positive".into()));
        }
        let balance = parse_bool("backend.balance_classes", self.raw("backend.balance_classes"))?;
        Ok(BackendConfig {
            classifier,
            lda: parse_bool("backend.lda", self.raw("backend.lda"))?,
            svm: SvmConfig { c, iterations: self.num("backend.svm_iterations")?, balance_classes: balance },
            logreg: LogRegConfig { c, balance_classes: balance, ..LogRegConfig::default() },
        })
    }

    /// Same-consonant and different-consonant pair counts.
    pub fn pairs(&self) -> Result<(usize, usize)> {
        let same: usize = self.num("phone.same_pairs")?;
        let ratio: f64 = self.num("phone.pair_ratio")?;
        if same == 0 || !(ratio > 0.0) {
            return Err(Error::Config("phone.same_pairs and phone.pair_ratio must be positive".into()));
        }
        Ok((same, ((same as f64) * ratio).round().max(1.0) as usize))
    }

    /// Every key with its effective value, one `key = value` line each,
    /// sorted by key.
    pub fn canonical_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Annotated listing of every key and its default.
    pub fn template() -> String {
        let mut out = String::new();
        for (k, d, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{k} = {d}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_paths() {
        let cfg = ExperimentConfig::parse("data.manifest = m.tsv\ndata.features = f.ark # archive\ndata.segments=s.tsv\n", "/tmp/x").unwrap();
        assert_eq!(cfg.manifest(), PathBuf::from("/tmp/x/m.tsv"));
        assert_eq!(cfg.representation().unwrap(), RepresentationChoice::IvectorAttributeLpr);
        assert_eq!(cfg.ubm().unwrap().n_components, 256);
        assert_eq!(cfg.tv().unwrap().rank, 100);
        assert_eq!(cfg.pairs().unwrap(), (2000, 2000));
    }

    #[test]
    fn unknown_key_and_bad_value() {
        assert!(ExperimentConfig::parse("data.manifest = m\nfoo.bar = 1\n", ".").is_err());
        assert!(ExperimentConfig::parse("data.manifest = m\ndata.features = f\nexperiment.representation = ivector-mfcc\nubm.components = many\n", ".").is_err());
        assert!(ExperimentConfig::parse("data.features = f\n", ".").is_err());
        assert!(ExperimentConfig::parse("data.manifest = m\nexperiment.representation = ivector-mfcc\n", ".").is_err());
    }

    #[test]
    fn hash_covers_effective_values() {
        let a = ExperimentConfig::parse("data.manifest = m\ndata.features = f\ndata.segments = s\n", ".").unwrap();
        let b = ExperimentConfig::parse("data.segments = s\ndata.features = f\ndata.manifest = m\ntv.rank = 100\n", ".").unwrap();
        let c = ExperimentConfig::parse("data.manifest = m\ndata.features = f\ndata.segments = s\ntv.rank = 50\n", ".").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn template_parses() {
        let text = ExperimentConfig::template().replace("data.manifest = \n", "data.manifest = m\n").replace("data.features = \n", "data.features = f\n").replace("data.segments = \n", "data.segments = s\n");
        assert!(ExperimentConfig::parse(&text, ".").is_ok());
    }
}
