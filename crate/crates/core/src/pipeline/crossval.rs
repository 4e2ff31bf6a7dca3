use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array1, Array2, Axis};
use rayon::prelude::*;

use super::config::{ExperimentConfig, FusionChoice, RepresentationChoice};
use super::report::{CrossvalReport, FoldResult};
use crate::attributes::{
    build_attribute_map, lpr_transform, predict_posteriors, train_frame_classifier, AttributeMap, LabeledUtterance,
    PhoneInventory, TaskKind,
};
use crate::backend::{
    evaluate, logreg_train, majority_vote, pairwise_compare, sample_pairs, stack_accuracies, BackendModel, LogRegConfig,
};
use crate::corpus::{frame_labels, load_manifest, make_folds, read_segments, speaker_labels, Diagnosis, FoldPlan, ManifestEntry, Segment};
use crate::error::{Error, Result};
use crate::frontend::{apply_cmvn, cmvn_stats, compute_mfcc, load_wav, AudioBuffer, FeatureArchive, FeatureKind, FeatureMatrix};
use crate::ivector::{accumulate_stats, train_tv, train_ubm, BaumWelchStats, DiagGmm};
use crate::paralinguistics::{apply_functionals, compute_llds, LldConfig};

/// Refuses training data from the held-out speakers of one fold.
pub struct LeakGuard {
    test: BTreeSet<String>,
}

impl LeakGuard {
    pub fn new<S: AsRef<str>>(test_speakers: &[S]) -> Self {
        Self { test: test_speakers.iter().map(|s| s.as_ref().to_string()).collect() }
    }

    pub fn check<'a>(&self, stage: &'static str, speakers: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for s in speakers {
            if self.test.contains(s) {
                return Err(Error::SpeakerLeak { stage, speaker: s.to_string() });
            }
        }
        Ok(())
    }
}

/// Consonant segment embeddings per speaker: `(consonant, embedding)`.
type Embeddings = BTreeMap<String, Vec<(String, Array1<f64>)>>;

/// One word utterance.
#[derive(Debug, Clone)]
struct Utt {
    id: String,
    speaker: String,
}

/// Inputs of an experiment, loaded once and shared by all folds.
pub struct ExperimentData {
    pub entries: Vec<ManifestEntry>,
    pub speakers: BTreeMap<String, Diagnosis>,
    pub features: Option<FeatureArchive>,
    pub segments: BTreeMap<String, Vec<Segment>>,
    pub embeddings: Option<FeatureArchive>,
    pub map: AttributeMap,
    manifest_dir: PathBuf,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let manifest = cfg.manifest();
        let entries = load_manifest(&manifest)?;
        let speakers = speaker_labels(&entries)?;
        let features = cfg.features().map(FeatureArchive::read).transpose()?;
        let mut segments: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        if let Some(p) = cfg.segments() {
            for s in read_segments(p)? {
                segments.entry(s.utterance.clone()).or_default().push(s);
            }
        }
        let embeddings = cfg.embeddings().map(FeatureArchive::read).transpose()?;
        let map = match cfg.attribute_table() {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                build_attribute_map(&text, &PhoneInventory::cantonese())?
            }
            None => AttributeMap::cantonese(),
        };
        Ok(Self {
            entries,
            speakers,
            features,
            segments,
            embeddings,
            map,
            manifest_dir: manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Builds the experiment inputs from in-memory parts.
    pub fn from_parts(entries: Vec<ManifestEntry>, features: Option<FeatureArchive>, segments: &[Segment], map: AttributeMap) -> Result<Self> {
        let speakers = speaker_labels(&entries)?;
        let mut by_utt: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        for s in segments {
            by_utt.entry(s.utterance.clone()).or_default().push(s.clone());
        }
        Ok(Self { entries, speakers, features, segments: by_utt, embeddings: None, map, manifest_dir: PathBuf::new() })
    }

    fn is_disordered(&self, speaker: &str) -> bool {
        self.speakers[speaker].is_disordered()
    }
}

/// Runs cross-validation with the seeded stratified split, or with the plan
/// named by `data.fold_plan`.
pub fn run_crossval(cfg: &ExperimentConfig) -> Result<CrossvalReport> {
    let data = ExperimentData::load(cfg)?;
    let plan = match cfg.fold_plan() {
        Some(p) => FoldPlan::load(p)?,
        None => make_folds(&data.entries, cfg.n_folds()?, cfg.seed()?)?,
    };
    run_crossval_with_plan(cfg, &data, &plan)
}

/// Cross-validation over an explicit fold plan. Every model is retrained
/// inside each fold from its training speakers only; a held-out speaker
/// reaching any training stage aborts the run with [`Error::SpeakerLeak`].
pub fn run_crossval_with_plan(cfg: &ExperimentConfig, data: &ExperimentData, plan: &FoldPlan) -> Result<CrossvalReport> {
    let listed: BTreeSet<&str> = plan.folds.iter().flatten().map(String::as_str).collect();
    for s in data.speakers.keys() {
        if !listed.contains(s.as_str()) {
            return Err(Error::Config(format!("speaker {s} is missing from the fold plan")));
        }
    }
    if let Some(s) = listed.iter().find(|s| !data.speakers.contains_key(**s)) {
        return Err(Error::Config(format!("fold plan lists unknown speaker {s}")));
    }
    let prepared = Prepared::new(cfg, data)?;
    let mut folds = Vec::with_capacity(plan.n_folds);
    for k in 0..plan.folds.len() {
        let test = plan.test_speakers(k).to_vec();
        let train = plan.train_speakers(k);
        let guard = LeakGuard::new(&test);
        log::info!("fold {k}: {} training and {} test speakers", train.len(), test.len());
        let predictions = prepared.run_fold(&train, &test, &guard)?;
        let truths: Vec<bool> = test.iter().map(|s| data.is_disordered(s)).collect();
        let m = evaluate(&predictions, &truths)?;
        folds.push(FoldResult::new(k, &m));
    }
    Ok(CrossvalReport::new(cfg.hash(), folds))
}

/// Fold-independent work: the utterance list, normalised frame features and,
/// for the functional representation, one vector per speaker.
struct Prepared<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a ExperimentData,
    representation: RepresentationChoice,
    fusion: FusionChoice,
    utts: Vec<Utt>,
    frames: BTreeMap<String, FeatureMatrix>,
    functionals: BTreeMap<String, Array1<f64>>,
}

/// Per-speaker mean/variance normalisation of every utterance.
fn speaker_cmvn(utts: &[Utt], frames: &BTreeMap<String, FeatureMatrix>) -> Result<BTreeMap<String, FeatureMatrix>> {
    let mut by_speaker: BTreeMap<&str, Vec<&Utt>> = BTreeMap::new();
    for u in utts {
        by_speaker.entry(&u.speaker).or_default().push(u);
    }
    let normalized: Vec<Vec<FeatureMatrix>> = by_speaker
        .into_par_iter()
        .map(|(_, list)| {
            let views: Vec<_> = list.iter().map(|u| frames[&u.id].frames().view()).collect();
            let all = concatenate(Axis(0), &views).map_err(|_| Error::DimensionMismatch { what: "speaker frames", expected: 0, got: 0 })?;
            let stats = cmvn_stats(all.view())?;
            list.iter().map(|u| apply_cmvn(&frames[&u.id], &stats)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(normalized.into_iter().flatten().map(|f| (f.utterance_id().to_string(), f)).collect())
}

impl<'a> Prepared<'a> {
    fn new(cfg: &'a ExperimentConfig, data: &'a ExperimentData) -> Result<Self> {
        let representation = cfg.representation()?;
        let fusion = cfg.fusion()?;
        let mut prepared = Self {
            cfg,
            data,
            representation,
            fusion,
            utts: Vec::new(),
            frames: BTreeMap::new(),
            functionals: BTreeMap::new(),
        };
        if representation == RepresentationChoice::Functional {
            prepared.functionals = functional_vectors(data)?;
            return Ok(prepared);
        }
        let archive = match (&data.features, &data.embeddings) {
            (Some(a), _) => a,
            (None, Some(_)) if fusion == FusionChoice::PhoneStack => return Ok(prepared),
            _ => return Err(Error::Config(format!("{representation} needs data.features"))),
        };
        let mut ids: BTreeMap<String, Utt> = BTreeMap::new();
        for e in &data.entries {
            let id = e.utterance_id();
            if archive.contains(&id) {
                ids.insert(id.clone(), Utt { id, speaker: e.speaker_id.clone() });
            }
        }
        for s in data.speakers.keys() {
            let have = ids.values().filter(|u| &u.speaker == s).count();
            let listed = data.entries.iter().filter(|e| &e.speaker_id == s).count();
            if have == 0 {
                return Err(Error::NoFeatures(s.clone()));
            }
            if have < listed {
                log::warn!("speaker {s}: {} of {listed} words have no features", listed - have);
            }
        }
        prepared.utts = ids.into_values().collect();
        let n_ceps = cfg.n_ceps()?;
        let raw: BTreeMap<String, FeatureMatrix> = prepared
            .utts
            .par_iter()
            .map(|u| {
                let f = archive.get(&u.id).expect("listed above");
                let f = match (representation, f.kind()) {
                    (RepresentationChoice::IvectorMfcc, FeatureKind::Filterbank) => compute_mfcc(f, n_ceps)?,
                    _ => f.clone(),
                };
                Ok((u.id.clone(), f))
            })
            .collect::<Result<_>>()?;
        prepared.frames = if cfg.cmvn()? { speaker_cmvn(&prepared.utts, &raw)? } else { raw };
        Ok(prepared)
    }

    fn run_fold(&self, train: &[String], test: &[String], guard: &LeakGuard) -> Result<Vec<bool>> {
        if self.representation == RepresentationChoice::Functional {
            return self.functional_fold(train, test, guard);
        }
        let frames = match self.representation {
            RepresentationChoice::IvectorPhoneLpr => self.lpr_frames(TaskKind::PhoneSoftmax, train, guard)?,
            RepresentationChoice::IvectorAttributeLpr => self.lpr_frames(TaskKind::AttributeMultitask, train, guard)?,
            _ => self.frames.clone(),
        };
        match self.fusion {
            FusionChoice::PhoneStack => self.phone_stack_fold(&frames, train, test, guard),
            _ => self.ivector_fold(&frames, train, test, guard),
        }
    }

    fn utts_of<'s>(&'s self, speakers: &'s BTreeSet<&str>) -> impl Iterator<Item = &'s Utt> + 's {
        self.utts.iter().filter(move |u| speakers.contains(u.speaker.as_str()))
    }

    /// Frame classifier trained on the fold's typical training speakers
    /// with canonical labels, then log posterior ratios for every utterance.
    fn lpr_frames(&self, task: TaskKind, train: &[String], guard: &LeakGuard) -> Result<BTreeMap<String, FeatureMatrix>> {
        let td: BTreeSet<&str> = train.iter().map(String::as_str).filter(|s| !self.data.is_disordered(s)).collect();
        let mut labeled = Vec::new();
        let mut skipped = 0;
        for u in self.utts_of(&td) {
            let f = &self.frames[&u.id];
            match self.data.segments.get(&u.id) {
                Some(segs) => {
                    let refs: Vec<&Segment> = segs.iter().collect();
                    labeled.push((u, LabeledUtterance { features: f, labels: frame_labels(&refs, f.num_frames(), false)? }));
                }
                None => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("{skipped} training utterances have no segments and were skipped");
        }
        guard.check("posterior", labeled.iter().map(|(u, _)| u.speaker.as_str()))?;
        let labeled: Vec<LabeledUtterance> = labeled.into_iter().map(|(_, l)| l).collect();
        let model = train_frame_classifier(&labeled, &self.data.map, task, &self.cfg.posterior()?)?;
        let eps = self.cfg.lpr_clamp()?;
        let lpr: BTreeMap<String, FeatureMatrix> = self
            .utts
            .par_iter()
            .map(|u| Ok((u.id.clone(), lpr_transform(&predict_posteriors(&model, &self.frames[&u.id])?, eps)?)))
            .collect::<Result<_>>()?;
        if self.cfg.cmvn()? {
            speaker_cmvn(&self.utts, &lpr)
        } else {
            Ok(lpr)
        }
    }

    fn ivector_fold(&self, frames: &BTreeMap<String, FeatureMatrix>, train: &[String], test: &[String], guard: &LeakGuard) -> Result<Vec<bool>> {
        let train_set: BTreeSet<&str> = train.iter().map(String::as_str).collect();
        let train_utts: Vec<&Utt> = self.utts_of(&train_set).collect();
        guard.check("ubm", train_utts.iter().map(|u| u.speaker.as_str()))?;
        let ubm_frames: Vec<&FeatureMatrix> = train_utts.iter().map(|u| &frames[&u.id]).collect();
        let ubm = train_ubm(&ubm_frames, &self.cfg.ubm()?)?.gmm;

        let utt_stats = utterance_stats(&ubm, &self.utts, frames)?;
        let subject = subject_stats(&ubm, &self.utts, &utt_stats);
        let train_stats: Vec<BaumWelchStats> = train.iter().map(|s| subject[s.as_str()].clone()).collect();
        guard.check("tv", train_stats.iter().map(|s| s.source_id.as_str()))?;
        let tv = train_tv(&ubm, &train_stats, &self.cfg.tv()?)?.model;
        let extractor = tv.extractor();
        let length_norm = self.cfg.length_norm()?;
        let ivector = |stats: &BaumWelchStats| -> Result<Array1<f64>> {
            let w = extractor.extract(stats)?;
            Ok(if length_norm { w.length_normalized().w } else { w.w })
        };
        let backend_cfg = self.cfg.backend()?;

        if self.fusion == FusionChoice::WordMajority {
            let (rows, labels, speakers): (Vec<Array1<f64>>, Vec<bool>, Vec<&str>) = {
                let mut rows = Vec::new();
                let mut labels = Vec::new();
                let mut spk = Vec::new();
                for u in &train_utts {
                    rows.push(ivector(&utt_stats[&u.id])?);
                    labels.push(self.data.is_disordered(&u.speaker));
                    spk.push(u.speaker.as_str());
                }
                (rows, labels, spk)
            };
            guard.check("backend", speakers)?;
            let model = BackendModel::fit(stack_rows(&rows)?.view(), &labels, &backend_cfg)?;
            let mut out = Vec::with_capacity(test.len());
            for s in test {
                let rows: Vec<Array1<f64>> =
                    self.utts.iter().filter(|u| &u.speaker == s).map(|u| ivector(&utt_stats[&u.id])).collect::<Result<_>>()?;
                out.push(majority_vote(&model.predict(stack_rows(&rows)?.view())?)?);
            }
            return Ok(out);
        }

        let train_x: Vec<Array1<f64>> = train.iter().map(|s| ivector(&subject[s.as_str()])).collect::<Result<_>>()?;
        let labels: Vec<bool> = train.iter().map(|s| self.data.is_disordered(s)).collect();
        guard.check("backend", train.iter().map(String::as_str))?;
        let model = BackendModel::fit(stack_rows(&train_x)?.view(), &labels, &backend_cfg)?;
        let test_x: Vec<Array1<f64>> = test.iter().map(|s| ivector(&subject[s.as_str()])).collect::<Result<_>>()?;
        model.predict(stack_rows(&test_x)?.view())
    }

    fn segment_embeddings(&self, frames: &BTreeMap<String, FeatureMatrix>) -> Result<Embeddings> {
        let mut out = Embeddings::new();
        for e in &self.data.entries {
            let id = e.utterance_id();
            let Some(segs) = self.data.segments.get(&id) else { continue };
            let consonant_segs: Vec<&Segment> =
                segs.iter().filter(|s| !self.data.map.is_vowel(&s.canonical).unwrap_or(true)).collect();
            let list = out.entry(e.speaker_id.clone()).or_default();
            if let Some(emb) = self.data.embeddings.as_ref() {
                let Some(m) = emb.get(&id) else { continue };
                if m.num_frames() != consonant_segs.len() {
                    return Err(Error::DimensionMismatch { what: "segment embeddings of an utterance", expected: consonant_segs.len(), got: m.num_frames() });
                }
                for (s, row) in consonant_segs.iter().zip(m.frames().rows()) {
                    list.push((s.canonical.clone(), row.to_owned()));
                }
            } else {
                let Some(f) = frames.get(&id) else { continue };
                for s in consonant_segs {
                    if s.end > f.num_frames() {
                        return Err(Error::InvalidArgument(format!("segment {}..{} exceeds utterance {id}", s.start, s.end)));
                    }
                    let mean = f.frames().slice(ndarray::s![s.start..s.end, ..]).mean_axis(Axis(0)).expect("non-empty segment");
                    list.push((s.canonical.clone(), mean));
                }
            }
        }
        Ok(out)
    }

    fn phone_stack_fold(&self, frames: &BTreeMap<String, FeatureMatrix>, train: &[String], test: &[String], guard: &LeakGuard) -> Result<Vec<bool>> {
        let embeddings = self.segment_embeddings(frames)?;
        let mut references = Embeddings::new();
        for s in train.iter().filter(|s| !self.data.is_disordered(s)) {
            for (c, e) in embeddings.get(s).into_iter().flatten() {
                references.entry(c.clone()).or_default().push((s.clone(), e.clone()));
            }
        }
        guard.check("pair-references", references.values().flatten().map(|(s, _)| s.as_str()))?;
        let (same, different) = self.cfg.pairs()?;
        let (px, py) = sample_pairs(&references, same, different, self.cfg.seed()?)?;
        let backend_cfg = self.cfg.backend()?;
        let lr = logreg_train(px.view(), &py, &LogRegConfig { c: backend_cfg.logreg.c, ..LogRegConfig::default() })?;

        let tracked: Vec<String> =
            self.data.map.consonants().into_iter().filter(|c| references.contains_key(*c)).map(str::to_string).collect();
        let stack = |speaker: &str| -> Result<Array1<f64>> {
            let mut accuracies = BTreeMap::new();
            for c in &tracked {
                let tests: Vec<Array1<f64>> =
                    embeddings.get(speaker).into_iter().flatten().filter(|(k, _)| k == c).map(|(_, e)| e.clone()).collect();
                let refs: Vec<Array1<f64>> = references[c].iter().filter(|(s, _)| s != speaker).map(|(_, e)| e.clone()).collect();
                if tests.is_empty() || refs.is_empty() {
                    continue;
                }
                let t = BTreeMap::from([(c.clone(), tests)]);
                let r = BTreeMap::from([(c.clone(), refs)]);
                accuracies.extend(pairwise_compare(&t, &r, &lr)?);
            }
            Ok(stack_accuracies(&accuracies, &tracked).values)
        };
        let train_x: Vec<Array1<f64>> = train.iter().map(|s| stack(s)).collect::<Result<_>>()?;
        let labels: Vec<bool> = train.iter().map(|s| self.data.is_disordered(s)).collect();
        guard.check("backend", train.iter().map(String::as_str))?;
        let model = BackendModel::fit(stack_rows(&train_x)?.view(), &labels, &backend_cfg)?;
        let test_x: Vec<Array1<f64>> = test.iter().map(|s| stack(s)).collect::<Result<_>>()?;
        model.predict(stack_rows(&test_x)?.view())
    }

    fn functional_fold(&self, train: &[String], test: &[String], guard: &LeakGuard) -> Result<Vec<bool>> {
        let rows = |ids: &[String]| -> Vec<Array1<f64>> { ids.iter().map(|s| self.functionals[s].clone()).collect() };
        let train_x = stack_rows(&rows(train))?;
        guard.check("normalizer", train.iter().map(String::as_str))?;
        let mean = train_x.mean_axis(Axis(0)).expect("non-empty");
        let std = train_x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        let z = |x: Array2<f64>| (x - &mean) / &std;
        let labels: Vec<bool> = train.iter().map(|s| self.data.is_disordered(s)).collect();
        guard.check("backend", train.iter().map(String::as_str))?;
        let model = BackendModel::fit(z(train_x).view(), &labels, &self.cfg.backend()?)?;
        model.predict(z(stack_rows(&rows(test))?).view())
    }
}

fn stack_rows(rows: &[Array1<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
    concatenate(Axis(0), &views).map_err(|_| Error::InvalidArgument("cannot stack representations of differing dimension".into()))
}

fn utterance_stats(ubm: &DiagGmm, utts: &[Utt], frames: &BTreeMap<String, FeatureMatrix>) -> Result<BTreeMap<String, BaumWelchStats>> {
    utts.par_iter().map(|u| Ok((u.id.clone(), accumulate_stats(ubm, &frames[&u.id])?))).collect()
}

/// Statistics of each speaker's concatenated words: by additivity, the sum of
/// the word statistics in word order.
fn subject_stats<'u>(ubm: &DiagGmm, utts: &'u [Utt], stats: &BTreeMap<String, BaumWelchStats>) -> BTreeMap<&'u str, BaumWelchStats> {
    let mut out: BTreeMap<&str, BaumWelchStats> = BTreeMap::new();
    for u in utts {
        let s = &stats[&u.id];
        out.entry(u.speaker.as_str())
            .or_insert_with(|| BaumWelchStats::zeros("", s.feature_kind, ubm.num_components(), ubm.dim()));
        *out.get_mut(u.speaker.as_str()).expect("inserted") += s;
    }
    for (speaker, s) in out.iter_mut() {
        s.source_id = speaker.to_string();
    }
    out
}

/// Paralinguistic functionals of each speaker's concatenated word audio.
fn functional_vectors(data: &ExperimentData) -> Result<BTreeMap<String, Array1<f64>>> {
    let by_speaker = crate::corpus::by_speaker(&data.entries);
    by_speaker
        .into_par_iter()
        .map(|(speaker, mut entries)| {
            entries.sort_by(|a, b| a.word_id.cmp(&b.word_id));
            let mut parts = Vec::new();
            for e in entries {
                let path = data.manifest_dir.join(&e.path);
                match load_wav(&path) {
                    Ok(a) => parts.push(a),
                    Err(Error::Io { .. }) => log::warn!("{}: audio {} not found", e.utterance_id(), path.display()),
                    Err(other) => return Err(other),
                }
            }
            if parts.is_empty() {
                return Err(Error::NoFeatures(speaker.to_string()));
            }
            let audio = AudioBuffer::concat(&parts)?;
            let v = apply_functionals(&compute_llds(&audio, &LldConfig::default())?)?;
            Ok((speaker.to_string(), v.values))
        })
        .collect()
}
