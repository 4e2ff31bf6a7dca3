use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{lda_fit, logreg_train, svm_train, LdaModel, LinearSvmModel, LogRegConfig, LogisticModel, SvmConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Svm,
    Logreg,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Self::Svm),
            "logreg" | "lr" => Ok(Self::Logreg),
            _ => Err(Error::InvalidArgument(format!("unknown classifier {s:?} (svm, logreg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub classifier: ClassifierKind,
    /// Project with LDA before classifying.
    pub lda: bool,
    pub svm: SvmConfig,
    pub logreg: LogRegConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { classifier: ClassifierKind::Svm, lda: false, svm: SvmConfig::default(), logreg: LogRegConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Classifier {
    Svm(LinearSvmModel),
    Logreg(LogisticModel),
}

/// Optional LDA projection followed by a linear classifier; stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendModel {
    pub lda: Option<LdaModel>,
    pub classifier: Classifier,
}

impl BackendModel {
    pub fn fit(x: ArrayView2<'_, f64>, labels: &[bool], config: &BackendConfig) -> Result<Self> {
        let lda = if config.lda {
            let classes: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
            Some(lda_fit(x, &classes, None)?)
        } else {
            None
        };
        let projected;
        let input = match &lda {
            Some(m) => {
                projected = m.transform(x)?;
                projected.view()
            }
            None => x,
        };
        let classifier = match config.classifier {
            ClassifierKind::Svm => Classifier::Svm(svm_train(input, labels, &config.svm)?),
            ClassifierKind::Logreg => Classifier::Logreg(logreg_train(input, labels, &config.logreg)?),
        };
        Ok(Self { lda, classifier })
    }

    pub fn input_dim(&self) -> usize {
        match (&self.lda, &self.classifier) {
            (Some(l), _) => l.projection.nrows(),
            (None, Classifier::Svm(m)) => m.weights.len(),
            (None, Classifier::Logreg(m)) => m.weights.len(),
        }
    }

    /// `true` = disordered.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { what: "backend input", expected: self.input_dim(), got: x.ncols() });
        }
        let projected;
        let input = match &self.lda {
            Some(m) => {
                projected = m.transform(x)?;
                projected.view()
            }
            None => x,
        };
        Ok(match &self.classifier {
            Classifier::Svm(m) => m.predict(input),
            Classifier::Logreg(m) => m.predict(input),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
    }
}
