use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::lld::{LldTrack, LLD_NAMES, VOICED_ONLY};
use crate::error::{Error, Result};

/// Per-descriptor statistics, in output order.
pub const FUNCTIONALS: [&str; 6] = ["mean", "std", "p20", "p50", "p80", "slope"];

/// Utterance-level vector: six functionals per descriptor followed by the
/// voiced-frame fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalVector {
    pub values: Array1<f64>,
}

impl FunctionalVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Names of the [`FunctionalVector`] entries, e.g. `pitch_hz.p50`.
pub fn functional_names() -> Vec<String> {
    let mut names: Vec<String> =
        LLD_NAMES.iter().flat_map(|l| FUNCTIONALS.iter().map(move |f| format!("{l}.{f}"))).collect();
    names.push("voiced_fraction".into());
    names
}

/// Percentile `q` in [0, 1] by linear interpolation between order
/// statistics: with `v` sorted and `h = q (n - 1)`,
/// `v[floor h] + (h - floor h) (v[floor h + 1] - v[floor h])`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() {
        return v[lo];
    }
    v[lo] + (h - lo as f64) * (v[lo + 1] - v[lo])
}

/// Least-squares slope of `values` against `times`.
fn slope(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let mv = values.iter().sum::<f64>() / n;
    let stt: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let stv: f64 = times.iter().zip(values).map(|(t, v)| (t - mt) * (v - mv)).sum();
    if stt > 0.0 {
        stv / stt
    } else {
        0.0
    }
}

fn summarize(times: &[f64], values: &[f64]) -> [f64; 6] {
    if values.is_empty() {
        return [0.0; 6];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    [
        mean,
        std,
        percentile(values, 0.2),
        percentile(values, 0.5),
        percentile(values, 0.8),
        slope(times, values),
    ]
}

/// Statistical functionals of an LLD track. Slopes are per frame. Pitch,
/// jitter and shimmer use voiced frames only and are all zero when no frame
/// is voiced.
pub fn apply_functionals(track: &LldTrack) -> Result<FunctionalVector> {
    let t = track.num_frames();
    if t < 2 {
        return Err(Error::TooFew { what: "frames for functionals", need: 2, got: t });
    }
    let mut out = Vec::with_capacity(LLD_NAMES.len() * FUNCTIONALS.len() + 1);
    for (j, col) in track.values.columns().into_iter().enumerate() {
        let (times, values): (Vec<f64>, Vec<f64>) = col
            .iter()
            .enumerate()
            .filter(|(i, _)| !VOICED_ONLY.contains(&j) || track.voiced[*i])
            .map(|(i, &v)| (i as f64, v))
            .unzip();
        out.extend(summarize(&times, &values));
    }
    out.push(track.voiced.iter().filter(|&&v| v).count() as f64 / t as f64);
    Ok(FunctionalVector { values: Array1::from(out) })
}
