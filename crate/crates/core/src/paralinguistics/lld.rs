use ndarray::Array2;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::fbank::{frame_count, Framer};
use crate::frontend::AudioBuffer;

/// Descriptor columns of an [`LldTrack`], in order.
///
/// * `log_energy`: `ln(max(sum x^2, floor))` of the raw frame.
/// * `pitch_hz`: normalised-autocorrelation pitch, 0 when unvoiced.
/// * `zcr`: sign changes per sample.
/// * `centroid_hz`: power-weighted mean frequency.
/// * `slope_db_per_khz`: least-squares slope of the dB power spectrum over 0-5 kHz.
/// * `alpha_ratio_db`: energy in 1-5 kHz over energy in 50 Hz-1 kHz, dB.
/// * `hammarberg_db`: strongest bin below 2 kHz minus strongest in 2-5 kHz, dB.
/// * `jitter`: `|P_t - P_{t-1}| / P_{t-1}` for pitch periods of consecutive voiced frames, else 0.
/// * `shimmer`: the same ratio for peak absolute amplitudes.
pub const LLD_NAMES: [&str; 9] = [
    "log_energy",
    "pitch_hz",
    "zcr",
    "centroid_hz",
    "slope_db_per_khz",
    "alpha_ratio_db",
    "hammarberg_db",
    "jitter",
    "shimmer",
];

/// Columns whose functionals are taken over voiced frames only.
pub(crate) const VOICED_ONLY: [usize; 3] = [1, 7, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LldConfig {
    pub frame_length: f64,
    pub frame_shift: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    /// Minimum normalised autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    pub energy_floor: f64,
}

impl Default for LldConfig {
    fn default() -> Self {
        Self {
            frame_length: 0.025,
            frame_shift: 0.010,
            pitch_min: 60.0,
            pitch_max: 500.0,
            voicing_threshold: 0.6,
            energy_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LldTrack {
    /// T x 9, columns as in [`LLD_NAMES`].
    pub values: Array2<f64>,
    pub voiced: Vec<bool>,
    pub frame_shift: f64,
}

impl LldTrack {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Normalised cross-correlation between the frame and its lag-`tau` shift.
fn nccf(x: &[f64], tau: usize) -> f64 {
    let n = x.len() - tau;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        xy += x[i] * x[i + tau];
        xx += x[i] * x[i];
        yy += x[i + tau] * x[i + tau];
    }
    let denom = (xx * yy).sqrt();
    if denom > 1e-12 {
        xy / denom
    } else {
        0.0
    }
}

/// Pitch period in samples, or `None` when unvoiced.
fn pitch_period(x: &[f64], min_lag: usize, max_lag: usize, threshold: f64) -> Option<f64> {
    if max_lag + 2 >= x.len() || min_lag < 2 {
        return None;
    }
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|tau| nccf(x, tau)).collect();
    // r[k] holds lag min_lag - 1 + k
    let peak = r[1..r.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak < threshold {
        return None;
    }
    // the smallest lag that is a local maximum close to the global one;
    // avoids picking a multiple of the true period
    let k = (1..r.len() - 1).find(|&k| r[k] >= 0.9 * peak && r[k] >= r[k - 1] && r[k] >= r[k + 1])?;
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let curvature = a - 2.0 * b + c;
    let offset = if curvature < 0.0 { (0.5 * (a - c) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
    Some((min_lag - 1 + k) as f64 + offset)
}

fn band_sum(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    power.iter().enumerate().filter(|(i, _)| (lo..hi).contains(&(*i as f64 * bin_hz))).map(|(_, p)| p).sum()
}

fn band_max(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    power
        .iter()
        .enumerate()
        .filter(|(i, _)| (lo..hi).contains(&(*i as f64 * bin_hz)))
        .map(|(_, &p)| p)
        .fold(0.0, f64::max)
}

fn db(v: f64, floor: f64) -> f64 {
    10.0 * v.max(floor).log10()
}

/// Frame-level descriptors of `audio`, framed like the filter-bank front end.
pub fn compute_llds(audio: &AudioBuffer, config: &LldConfig) -> Result<LldTrack> {
    let sr = audio.sample_rate() as f64;
    let frame = (config.frame_length * sr).round() as usize;
    let shift = (config.frame_shift * sr).round() as usize;
    if shift == 0 || frame < shift {
        return Err(Error::InvalidArgument(format!("need frame length >= frame shift > 0 (got {frame} and {shift} samples)")));
    }
    if !(config.pitch_min > 0.0 && config.pitch_max > config.pitch_min) {
        return Err(Error::InvalidArgument("pitch range must satisfy 0 < min < max".into()));
    }
    let samples = audio.samples();
    let t = frame_count(samples.len(), frame, shift).ok_or(Error::TooFew {
        what: "audio samples for one frame",
        need: frame,
        got: samples.len(),
    })?;
    let min_lag = (sr / config.pitch_max).floor().max(2.0) as usize;
    let max_lag = (sr / config.pitch_min).ceil() as usize;
    let framer = Framer::new(frame, shift, 0.0);
    let n_fft = framer.n_fft();
    let bin_hz = sr / n_fft as f64;
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n_fft);
    let mut power = vec![0.0; n_fft / 2 + 1];
    let floor = config.energy_floor;

    let mut values = Array2::zeros((t, LLD_NAMES.len()));
    let mut voiced = vec![false; t];
    let mut prev: Option<(f64, f64)> = None;
    let mut centered = vec![0.0; frame];
    for i in 0..t {
        let x = &samples[i * shift..i * shift + frame];
        let mean = x.iter().sum::<f64>() / frame as f64;
        for (c, &v) in centered.iter_mut().zip(x) {
            *c = v - mean;
        }
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let zcr = x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count() as f64 / (frame - 1).max(1) as f64;

        framer.power_spectrum(samples, i, &mut buf, &mut power);
        let total: f64 = power.iter().sum();
        let centroid = if total > floor {
            power.iter().enumerate().map(|(k, p)| k as f64 * bin_hz * p).sum::<f64>() / total
        } else {
            0.0
        };
        let slope = {
            let pts: Vec<(f64, f64)> = power
                .iter()
                .enumerate()
                .map(|(k, &p)| (k as f64 * bin_hz / 1000.0, db(p, floor)))
                .filter(|(f, _)| *f <= 5.0)
                .collect();
            let n = pts.len() as f64;
            let mf = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let md = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mf).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mf) * (p.1 - md)).sum();
            if sxx > 0.0 { sxy / sxx } else { 0.0 }
        };
        let alpha = db(band_sum(&power, bin_hz, 1000.0, 5000.0), floor) - db(band_sum(&power, bin_hz, 50.0, 1000.0), floor);
        let hammarberg = db(band_max(&power, bin_hz, 0.0, 2000.0), floor) - db(band_max(&power, bin_hz, 2000.0, 5000.0), floor);

        let period = pitch_period(&centered, min_lag, max_lag, config.voicing_threshold).filter(|_| energy > floor);
        let amplitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (pitch, jitter, shimmer) = match period {
            Some(p) => {
                voiced[i] = true;
                let (j, s) = match prev {
                    Some((pp, pa)) => ((p - pp).abs() / pp, if pa > 0.0 { (amplitude - pa).abs() / pa } else { 0.0 }),
                    None => (0.0, 0.0),
                };
                prev = Some((p, amplitude));
                (sr / p, j, s)
            }
            None => {
                prev = None;
                (0.0, 0.0, 0.0)
            }
        };
        let row = [energy.max(floor).ln(), pitch, zcr, centroid, slope, alpha, hammarberg, jitter, shimmer];
        for (o, v) in values.row_mut(i).iter_mut().zip(row) {
            *o = v;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("low-level descriptors"));
    }
    Ok(LldTrack { values, voiced, frame_shift: config.frame_shift })
}
