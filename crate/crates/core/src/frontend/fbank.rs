use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::audio::AudioBuffer;
use super::features::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbankConfig {
    /// Seconds.
    pub frame_length: f64,
    /// Seconds.
    pub frame_shift: f64,
    pub n_mels: usize,
    pub preemphasis: f64,
    pub log_floor: f64,
    /// Lower edge of the first mel filter, Hz. The upper edge is Nyquist.
    pub low_freq: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            frame_length: 0.025,
            frame_shift: 0.010,
            n_mels: 80,
            preemphasis: 0.97,
            log_floor: 1e-10,
            low_freq: 20.0,
        }
    }
}

impl FbankConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length * sample_rate as f64).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift * sample_rate as f64).round() as usize
    }

    pub(crate) fn validate(&self, sample_rate: u32) -> Result<(usize, usize)> {
        let frame = self.frame_samples(sample_rate);
        let shift = self.shift_samples(sample_rate);
        if shift == 0 || frame < shift {
            return Err(Error::InvalidArgument(format!(
                "need frame length >= frame shift > 0 (got {frame} and {shift} samples)"
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::InvalidArgument("n_mels must be at least 1".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidArgument("log floor must be positive".into()));
        }
        Ok((frame, shift))
    }
}

/// `1 + floor((n - frame) / shift)`, or `None` when the signal is shorter
/// than one frame.
pub fn frame_count(n_samples: usize, frame: usize, shift: usize) -> Option<usize> {
    (n_samples >= frame).then(|| 1 + (n_samples - frame) / shift)
}

pub(crate) fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub(crate) fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of `n_mels` triangular filters spaced uniformly on
/// the mel scale between `low` and `high`.
pub fn mel_band_centers(n_mels: usize, low: f64, high: f64) -> Vec<f64> {
    let (ml, mh) = (hz_to_mel(low), hz_to_mel(high));
    let step = (mh - ml) / (n_mels + 1) as f64;
    (1..=n_mels).map(|j| mel_to_hz(ml + j as f64 * step)).collect()
}

/// Triangular mel filters over the bins of a real FFT, each normalised to unit
/// area (weights sum to one). A filter narrower than the bin spacing collapses
/// onto the bin nearest its centre.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_fft: usize,
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, low: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(low >= 0.0 && low < nyquist) {
            return Err(Error::InvalidArgument(format!("low frequency {low} outside [0, {nyquist})")));
        }
        let (ml, mh) = (hz_to_mel(low), hz_to_mel(nyquist));
        let step = (mh - ml) / (n_mels + 1) as f64;
        let n_bins = n_fft / 2 + 1;
        let bin_mel: Vec<f64> = (0..n_bins)
            .map(|k| hz_to_mel(k as f64 * sample_rate as f64 / n_fft as f64))
            .collect();
        let filters = (0..n_mels)
            .map(|j| {
                let left = ml + j as f64 * step;
                let center = left + step;
                let right = center + step;
                let mut weights: Vec<(usize, f64)> = bin_mel
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &m)| {
                        let w = if m > left && m <= center {
                            (m - left) / (center - left)
                        } else if m > center && m < right {
                            (right - m) / (right - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                if weights.is_empty() {
                    let hz = mel_to_hz(center);
                    let k = ((hz * n_fft as f64 / sample_rate as f64).round() as usize).min(n_bins - 1);
                    weights.push((k, 1.0));
                }
                let area: f64 = weights.iter().map(|(_, w)| w).sum();
                let start = weights[0].0;
                let end = weights.last().unwrap().0;
                let mut dense = vec![0.0; end - start + 1];
                for (k, w) in weights {
                    dense[k - start] = w / area;
                }
                (start, dense)
            })
            .collect();
        Ok(Self { n_fft, filters })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((start, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Windowed, pre-emphasised power spectra of every frame.
pub(crate) struct Framer {
    frame: usize,
    shift: usize,
    window: Vec<f64>,
    preemphasis: f64,
    n_fft: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Framer {
    pub(crate) fn new(frame: usize, shift: usize, preemphasis: f64) -> Self {
        let n_fft = frame.next_power_of_two();
        let window = (0..frame)
            .map(|n| {
                if frame == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * PI * n as f64 / (frame - 1) as f64).cos()
                }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { frame, shift, window, preemphasis, n_fft, fft }
    }

    pub(crate) fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Pre-emphasis is applied within the frame (`y[0] = x[0] - a x[0]`), so
    /// every frame depends only on its own samples.
    pub(crate) fn power_spectrum(&self, samples: &[f64], index: usize, buf: &mut Vec<Complex<f64>>, power: &mut [f64]) {
        let start = index * self.shift;
        let x = &samples[start..start + self.frame];
        buf.clear();
        buf.extend((0..self.frame).map(|n| {
            let prev = if n == 0 { x[0] } else { x[n - 1] };
            Complex::new((x[n] - self.preemphasis * prev) * self.window[n], 0.0)
        }));
        buf.resize(self.n_fft, Complex::new(0.0, 0.0));
        self.fft.process(buf);
        for (p, c) in power.iter_mut().zip(buf.iter()) {
            *p = c.norm_sqr();
        }
    }
}

/// Log-mel filter-bank energies, one row per frame.
pub fn compute_filterbank(audio: &AudioBuffer, config: &FbankConfig) -> Result<FeatureMatrix> {
    let sr = audio.sample_rate();
    let (frame, shift) = config.validate(sr)?;
    let samples = audio.samples();
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("audio samples"));
    }
    let t = frame_count(samples.len(), frame, shift).ok_or(Error::TooFew {
        what: "audio samples for one frame",
        need: frame,
        got: samples.len(),
    })?;
    let framer = Framer::new(frame, shift, config.preemphasis);
    let bank = MelFilterbank::new(sr, framer.n_fft(), config.n_mels, config.low_freq)?;
    let mut out = Array2::zeros((t, config.n_mels));
    let mut buf = Vec::with_capacity(framer.n_fft());
    let mut power = vec![0.0; framer.n_fft() / 2 + 1];
    let mut energies = vec![0.0; config.n_mels];
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        framer.power_spectrum(samples, i, &mut buf, &mut power);
        bank.apply(&power, &mut energies);
        for (o, &e) in row.iter_mut().zip(&energies) {
            *o = e.max(config.log_floor).ln();
        }
    }
    FeatureMatrix::new("", FeatureKind::Filterbank, config.frame_shift, out)
}
