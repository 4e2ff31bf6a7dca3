use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the columns of a [`FeatureMatrix`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Filterbank,
    Mfcc,
    /// Softmax posteriors; rows sum to one.
    PhonePosterior,
    /// Independent per-attribute detector outputs in `[0, 1]`.
    AttributePosterior,
    Lpr,
    Embedding,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Filterbank,
        FeatureKind::Mfcc,
        FeatureKind::PhonePosterior,
        FeatureKind::AttributePosterior,
        FeatureKind::Lpr,
        FeatureKind::Embedding,
    ];

    pub fn tag(self) -> u8 {
        match self {
            FeatureKind::Filterbank => 0,
            FeatureKind::Mfcc => 1,
            FeatureKind::PhonePosterior => 2,
            FeatureKind::AttributePosterior => 3,
            FeatureKind::Lpr => 4,
            FeatureKind::Embedding => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Filterbank => "filterbank",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::PhonePosterior => "phone-posterior",
            FeatureKind::AttributePosterior => "attribute-posterior",
            FeatureKind::Lpr => "lpr",
            FeatureKind::Embedding => "embedding",
        }
    }

    pub fn is_posterior(self) -> bool {
        matches!(self, FeatureKind::PhonePosterior | FeatureKind::AttributePosterior)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature kind {s:?}")))
    }
}

/// A `T x D` sequence of frame vectors for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: Array2<f64>,
    frame_shift: f64,
    kind: FeatureKind,
    utterance_id: String,
}

impl FeatureMatrix {
    pub fn new(
        utterance_id: impl Into<String>,
        kind: FeatureKind,
        frame_shift: f64,
        frames: Array2<f64>,
    ) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::TooFew { what: "frames", need: 1, got: 0 });
        }
        if frames.ncols() == 0 {
            return Err(Error::TooFew { what: "feature dimensions", need: 1, got: 0 });
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        if !(frame_shift.is_finite() && frame_shift > 0.0) {
            return Err(Error::InvalidArgument(format!("frame shift {frame_shift} must be positive")));
        }
        Ok(Self {
            frames,
            frame_shift,
            kind,
            utterance_id: utterance_id.into(),
        })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.utterance_id = id.into();
        self
    }

    /// Same metadata, new frames of the same row count.
    pub fn replace_frames(&self, kind: FeatureKind, frames: Array2<f64>) -> Result<Self> {
        Self::new(self.utterance_id.clone(), kind, self.frame_shift, frames)
    }

    /// Rows `start..end`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.num_frames() {
            return Err(Error::InvalidArgument(format!(
                "frame range {start}..{end} outside 0..{}",
                self.num_frames()
            )));
        }
        Self::new(
            format!("{}[{start}..{end}]", self.utterance_id),
            self.kind,
            self.frame_shift,
            self.frames.slice(ndarray::s![start..end, ..]).to_owned(),
        )
    }

    pub(crate) fn require_kind(&self, kind: FeatureKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.to_string(),
                got: self.kind.to_string(),
            });
        }
        Ok(())
    }
}

/// Per-dimension mean and (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn cmvn_stats(frames: ArrayView2<'_, f64>) -> Result<CmvnStats> {
    let t = frames.nrows();
    if t < 2 {
        return Err(Error::TooFew { what: "frames for cmvn", need: 2, got: t });
    }
    let mean = frames.mean_axis(Axis(0)).expect("non-empty");
    let variance = frames.var_axis(Axis(0), 0.0);
    Ok(CmvnStats {
        mean: mean.to_vec(),
        variance: variance.to_vec(),
    })
}

/// Normalises with externally computed statistics (e.g. a speaker's).
/// Dimensions with zero variance are only centred.
pub fn apply_cmvn(features: &FeatureMatrix, stats: &CmvnStats) -> Result<FeatureMatrix> {
    if stats.mean.len() != features.dim() || stats.variance.len() != features.dim() {
        return Err(Error::DimensionMismatch {
            what: "cmvn stats",
            expected: features.dim(),
            got: stats.mean.len(),
        });
    }
    let mean = Array1::from(stats.mean.clone());
    let scale = Array1::from_iter(
        stats
            .variance
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }),
    );
    let out = (features.frames() - &mean) * &scale;
    features.replace_frames(features.kind(), out)
}

/// Per-utterance mean and variance normalisation.
pub fn cmvn(features: &FeatureMatrix) -> Result<(FeatureMatrix, CmvnStats)> {
    let stats = cmvn_stats(features.frames().view())?;
    let out = apply_cmvn(features, &stats)?;
    Ok((out, stats))
}

/// Stacks utterances in the given order. The result's id joins the part ids
/// with `+`.
pub fn concat_utterances(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let first = parts
        .first()
        .ok_or(Error::TooFew { what: "utterances to concatenate", need: 1, got: 0 })?;
    for p in &parts[1..] {
        if p.kind != first.kind {
            return Err(Error::KindMismatch {
                expected: first.kind.to_string(),
                got: p.kind.to_string(),
            });
        }
        if p.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                what: "concatenated utterance",
                expected: first.dim(),
                got: p.dim(),
            });
        }
        if p.frame_shift != first.frame_shift {
            return Err(Error::InvalidArgument(format!(
                "frame shift {} of {} differs from {}",
                p.frame_shift, p.utterance_id, first.frame_shift
            )));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.frames.view()).collect();
    let frames = concatenate(Axis(0), &views).expect("shapes checked");
    let id = parts
        .iter()
        .map(|p| p.utterance_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    FeatureMatrix::new(id, first.kind, first.frame_shift, frames)
}

fn regression_deltas(x: &Array2<f64>, window: usize) -> Array2<f64> {
    let t = x.nrows() as isize;
    let denom: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros(x.raw_dim());
    for i in 0..t {
        let mut row = out.row_mut(i as usize);
        for n in 1..=window as isize {
            let fwd = x.row((i + n).clamp(0, t - 1) as usize);
            let back = x.row((i - n).clamp(0, t - 1) as usize);
            row.scaled_add(n as f64 / denom, &(&fwd - &back));
        }
    }
    out
}

/// Appends first and second order regression deltas (window 2, edge frames
/// replicated), tripling the dimension.
pub fn append_deltas(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let d1 = regression_deltas(features.frames(), 2);
    let d2 = regression_deltas(&d1, 2);
    let frames = concatenate(Axis(1), &[features.frames().view(), d1.view(), d2.view()])
        .expect("same row count");
    features.replace_frames(features.kind(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn fm(id: &str, frames: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(id, FeatureKind::Filterbank, 0.01, frames).unwrap()
    }

    #[test]
    fn rejects_nonfinite_and_empty() {
        assert!(FeatureMatrix::new("x", FeatureKind::Mfcc, 0.01, array![[f64::NAN]]).is_err());
        assert!(FeatureMatrix::new("x", FeatureKind::Mfcc, 0.01, Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn cmvn_two_frames() {
        let (out, stats) = cmvn(&fm("a", array![[0.0], [2.0]])).unwrap();
        assert_eq!(out.frames(), &array![[-1.0], [1.0]]);
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.variance, vec![1.0]);
    }

    #[test]
    fn cmvn_constant_dimension_centred() {
        let (out, stats) = cmvn(&fm("a", array![[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]])).unwrap();
        assert_eq!(stats.variance[0], 0.0);
        assert!(out.frames().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cmvn_needs_two_frames() {
        assert!(matches!(cmvn(&fm("a", array![[1.0]])), Err(Error::TooFew { .. })));
    }

    #[test]
    fn concat_stacks_in_order() {
        let a = fm("A", Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64));
        let b = fm("B", Array2::from_elem((2, 2), -1.0));
        let c = concat_utterances(&[a.clone(), b]).unwrap();
        assert_eq!(c.num_frames(), 5);
        assert_eq!(c.frames().slice(ndarray::s![0..3, ..]), a.frames());
        assert_eq!(c.utterance_id(), "A+B");
        assert_eq!(concat_utterances(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn concat_rejects_mixed_dims() {
        let a = fm("A", Array2::zeros((2, 80)));
        let b = fm("B", Array2::zeros((2, 20)));
        assert!(matches!(
            concat_utterances(&[a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn concat_rejects_mixed_kinds() {
        let a = fm("A", Array2::zeros((2, 3)));
        let b = FeatureMatrix::new("B", FeatureKind::Mfcc, 0.01, Array2::zeros((2, 3))).unwrap();
        assert!(matches!(concat_utterances(&[a, b]), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn deltas_of_ramp() {
        let x = fm("r", Array2::from_shape_fn((7, 1), |(i, _)| i as f64));
        let d = append_deltas(&x).unwrap();
        assert_eq!(d.dim(), 3);
        // interior frames of a unit ramp have delta 1 and delta-delta 0
        assert!((d.frames()[[3, 1]] - 1.0).abs() < 1e-12);
        assert!(d.frames()[[3, 2]].abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cmvn_idempotent(v in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let x = fm("p", Array2::from_shape_vec((6, 2), v).unwrap());
            prop_assume!(x.frames().var_axis(Axis(0), 0.0).iter().all(|&s| s > 1e-3));
            let (once, _) = cmvn(&x).unwrap();
            let (twice, _) = cmvn(&once).unwrap();
            for (a, b) in once.frames().iter().zip(twice.frames()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn concat_associative(ta in 1usize..5, tb in 1usize..5, tc in 1usize..5) {
            let mk = |id: &str, t: usize, off: f64| fm(id, Array2::from_shape_fn((t, 3), |(i, j)| off + (i * 3 + j) as f64));
            let (a, b, c) = (mk("a", ta, 0.0), mk("b", tb, 100.0), mk("c", tc, 200.0));
            let left = concat_utterances(&[concat_utterances(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
            let flat = concat_utterances(&[a, b, c]).unwrap();
            prop_assert_eq!(left, flat);
        }
    }
}
