use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_segments, Diagnosis, ManifestEntry, Segment};
use crate::attributes::AttributeMap;
use crate::error::{Error, Result};
use crate::frontend::{FeatureArchive, FeatureKind, FeatureMatrix};

/// Default directed substitutions; each pair differs in exactly one
/// consonantal category of the built-in Cantonese map.
pub const DEFAULT_RULES: [(&str, &str); 10] = [
    ("t", "k"),
    ("tʰ", "kʰ"),
    ("pʰ", "p"),
    ("kʰ", "k"),
    ("kʷʰ", "kʷ"),
    ("kʷ", "k"),
    ("tsʰ", "ts"),
    ("ts", "t"),
    ("ŋ", "n"),
    ("s", "f"),
];

/// `from>to`, or just `from` to take its first confusable partner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRule {
    pub from: String,
    pub to: Option<String>,
}

impl FromStr for SubstitutionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (from, to) = match s.split_once('>') {
            Some((a, b)) => (a.trim(), Some(b.trim().to_string())),
            None => (s, None),
        };
        if from.is_empty() || to.as_deref() == Some("") {
            return Err(Error::InvalidArgument(format!("bad substitution rule {s:?}")));
        }
        Ok(Self { from: from.to_string(), to })
    }
}

impl SubstitutionRule {
    fn resolve(&self, map: &AttributeMap) -> Result<(String, String)> {
        match &self.to {
            None => Ok((self.from.clone(), map.confusable_partners(&self.from)?[0].to_string())),
            Some(to) => {
                if map.is_vowel(&self.from)? || map.is_vowel(to)? || map.category_distance(&self.from, to)? != 1 {
                    return Err(Error::NoConfusablePartner(format!("{} (requested {to})", self.from)));
                }
                Ok((self.from.clone(), to.clone()))
            }
        }
    }
}

/// Parameters of the synthetic feature-space corpus.
///
/// Each phone's mean is the sum of its attributes' embeddings plus a
/// phone-specific offset. Every speaker applies its own linear warp
/// `I + speaker_warp * G / sqrt(dim)` to the phone means and adds a global
/// offset and a per-phone deviation; every frame adds isotropic noise. SSD speakers
/// replace each rule's source phone by its target with
/// `substitution_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_td: usize,
    pub n_ssd: usize,
    pub n_words: usize,
    pub max_syllables: usize,
    pub substitution_rate: f64,
    pub td_substitution_rate: f64,
    pub rules: Vec<SubstitutionRule>,
    pub dim: usize,
    pub attribute_scale: f64,
    pub phone_scale: f64,
    pub speaker_scale: f64,
    pub speaker_phone_scale: f64,
    pub speaker_warp: f64,
    pub noise_scale: f64,
    pub consonant_frames: (usize, usize),
    pub vowel_frames: (usize, usize),
    pub frame_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_td: 40,
            n_ssd: 24,
            n_words: 30,
            max_syllables: 4,
            substitution_rate: 0.3,
            td_substitution_rate: 0.0,
            rules: DEFAULT_RULES.iter().map(|(a, b)| SubstitutionRule { from: a.to_string(), to: Some(b.to_string()) }).collect(),
            dim: 24,
            attribute_scale: 1.0,
            phone_scale: 0.1,
            speaker_scale: 1.0,
            speaker_phone_scale: 0.3,
            speaker_warp: 0.3,
            noise_scale: 1.0,
            consonant_frames: (3, 8),
            vowel_frames: (6, 14),
            frame_shift: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("substitution_rate", self.substitution_rate), ("td_substitution_rate", self.td_substitution_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.n_td == 0 || self.n_ssd == 0 || self.n_words == 0 || self.max_syllables == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument("speaker, word, syllable counts and dim must be positive".into()));
        }
        for (lo, hi) in [self.consonant_frames, self.vowel_frames] {
            if lo == 0 || hi < lo {
                return Err(Error::InvalidArgument(format!("bad duration range {lo}..={hi}")));
            }
        }
        let scales = [self.attribute_scale, self.phone_scale, self.speaker_scale, self.speaker_phone_scale, self.speaker_warp, self.noise_scale];
        if scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(self.frame_shift > 0.0) {
            return Err(Error::InvalidArgument("scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Generated manifest, frame features and phone segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub entries: Vec<ManifestEntry>,
    pub features: FeatureArchive,
    pub segments: Vec<Segment>,
}

impl SyntheticCorpus {
    /// Writes `manifest.tsv`, `features.ark` and `segments.tsv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_manifest(dir.join("manifest.tsv"), &self.entries)?;
        self.features.write(dir.join("features.ark"))?;
        write_segments(dir.join("segments.tsv"), &self.segments)
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize, scale: f64) -> Array2<f64> {
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    Array2::from_shape_simple_fn((rows, dim), || scale * g.sample(rng))
}

struct Speaker {
    id: String,
    diagnosis: Diagnosis,
    stream: u64,
}

pub fn synth_generate(spec: &SyntheticSpec, map: &AttributeMap) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let rules: Vec<(String, String)> = spec.rules.iter().map(|r| r.resolve(map)).collect::<Result<_>>()?;
    let phones = map.inventory().phones();
    let consonants: Vec<&str> = map.consonants();
    let vowels: Vec<&str> = phones.iter().map(String::as_str).filter(|p| map.is_vowel(p).unwrap_or(false)).collect();
    if consonants.is_empty() || vowels.is_empty() {
        return Err(Error::InvalidArgument("inventory needs consonants and vowels".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let attr = gaussian_rows(&mut rng, map.num_attributes(), d, spec.attribute_scale);
    let mut means = gaussian_rows(&mut rng, phones.len(), d, spec.phone_scale);
    for (pi, p) in phones.iter().enumerate() {
        for &a in map.attributes_of(p)? {
            let row = attr.row(a).to_owned();
            let mut m = means.row_mut(pi);
            m += &row;
        }
    }

    // every word starts with a rule source so each word can carry an error
    let sources: Vec<&str> = if rules.is_empty() { consonants.clone() } else { rules.iter().map(|r| r.0.as_str()).collect() };
    let words: Vec<(String, Vec<&str>)> = (0..spec.n_words)
        .map(|w| {
            let n_syl = rng.random_range(1..=spec.max_syllables);
            let mut seq = Vec::with_capacity(2 * n_syl);
            for s in 0..n_syl {
                let c = if s == 0 { sources[w % sources.len()] } else { *consonants.choose(&mut rng).expect("non-empty") };
                seq.push(c);
                seq.push(*vowels.choose(&mut rng).expect("non-empty"));
            }
            (format!("w{w:03}"), seq)
        })
        .collect();

    let speakers: Vec<Speaker> = (0..spec.n_td)
        .map(|i| (format!("td{i:03}"), Diagnosis::Td))
        .chain((0..spec.n_ssd).map(|i| (format!("ssd{i:03}"), Diagnosis::Ssd)))
        .enumerate()
        .map(|(k, (id, diagnosis))| Speaker { id, diagnosis, stream: k as u64 + 1 })
        .collect();

    let index_of = |p: &str| map.inventory().index_of(p).expect("inventory phone");
    let per_speaker: Vec<(Vec<ManifestEntry>, Vec<FeatureMatrix>, Vec<Segment>)> = speakers
        .par_iter()
        .map(|spk| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(spk.stream);
            let offset = gaussian_rows(&mut rng, 1, d, spec.speaker_scale).row(0).to_owned();
            let deviation = gaussian_rows(&mut rng, phones.len(), d, spec.speaker_phone_scale);
            let warp = Array2::<f64>::eye(d) + gaussian_rows(&mut rng, d, d, spec.speaker_warp / (d as f64).sqrt());
            let rate = if spk.diagnosis.is_disordered() { spec.substitution_rate } else { spec.td_substitution_rate };
            let noise = Normal::new(0.0, 1.0).expect("unit normal");
            let mut entries = Vec::new();
            let mut feats = Vec::new();
            let mut segs = Vec::new();
            for (word_id, seq) in &words {
                let utt = format!("{}/{word_id}", spk.id);
                let mut rows: Vec<f64> = Vec::new();
                let mut t = 0;
                let mut any_error = false;
                for &canonical in seq {
                    let produced = match rules.iter().find(|r| r.0 == canonical) {
                        Some(r) if rate > 0.0 && rng.random::<f64>() < rate => r.1.as_str(),
                        _ => canonical,
                    };
                    any_error |= produced != canonical;
                    let (lo, hi) = if vowels.contains(&canonical) { spec.vowel_frames } else { spec.consonant_frames };
                    let len = rng.random_range(lo..=hi);
                    let pi = index_of(produced);
                    let center: Array1<f64> = warp.dot(&(&means.row(pi) + &deviation.row(pi))) + &offset;
                    for _ in 0..len {
                        rows.extend(center.iter().map(|m| m + spec.noise_scale * noise.sample(&mut rng)));
                    }
                    segs.push(Segment {
                        utterance: utt.clone(),
                        start: t,
                        end: t + len,
                        canonical: canonical.to_string(),
                        produced: produced.to_string(),
                    });
                    t += len;
                }
                let frames = Array2::from_shape_vec((t, d), rows).expect("sized");
                feats.push(FeatureMatrix::new(utt, FeatureKind::Filterbank, spec.frame_shift, frames).expect("finite synthetic frames"));
                entries.push(ManifestEntry {
                    speaker_id: spk.id.clone(),
                    diagnosis: spk.diagnosis,
                    word_id: word_id.clone(),
                    path: "features.ark".into(),
                    annotation: Some(any_error),
                    age_band: None,
                });
            }
            (entries, feats, segs)
        })
        .collect();

    let mut corpus = SyntheticCorpus { entries: Vec::new(), features: FeatureArchive::new(), segments: Vec::new() };
    for (e, f, s) in per_speaker {
        corpus.entries.extend(e);
        for m in f {
            corpus.features.insert(m);
        }
        corpus.segments.extend(s);
    }
    Ok(corpus)
}
