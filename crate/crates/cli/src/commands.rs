use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use ssd_core::attributes::{
    build_attribute_map, lpr_transform, predict_posteriors, train_frame_classifier, AttributeMap, FrameClassifier,
    LabeledUtterance, PhoneInventory, TaskKind, TrainConfig,
};
use ssd_core::backend::{
    evaluate as score, majority_vote, read_labels, BackendConfig, BackendModel, ClassifierKind, LogRegConfig,
    RepresentationArchive, RepresentationKind, SvmConfig,
};
use ssd_core::corpus::{
    assemble_subject_utterance, by_speaker, frame_labels, load_manifest, read_segments, speaker_cmvn, speaker_labels,
    synth_generate, Segment, SubstitutionRule, SyntheticSpec,
};
use ssd_core::frontend::{compute_filterbank, compute_mfcc, load_wav, FbankConfig, FeatureArchive};
use ssd_core::ivector::{accumulate_stats, read_model, train_tv as fit_tv, train_ubm as fit_ubm, write_model, BaumWelchStats, TvConfig, UbmConfig};
use ssd_core::pipeline::{run_crossval, ExperimentConfig};

use crate::{
    CrossvalArgs, EvaluateArgs, ExtractArgs, FeaturizeArgs, LabelSource, Level, LprArgs, SynthArgs, Task, TrainBackendArgs,
    TrainPosteriorArgs, TrainTvArgs, TrainUbmArgs,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn featurize(a: FeaturizeArgs) -> Result<()> {
    let entries = load_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let config = FbankConfig { n_mels: a.n_mels, ..FbankConfig::default() };
    let computed: Vec<Option<ssd_core::FeatureMatrix>> = entries
        .par_iter()
        .map(|e| {
            let path = base.join(&e.path);
            let audio = match load_wav(&path) {
                Ok(audio) => audio,
                Err(ssd_core::Error::Io { .. }) => {
                    log::warn!("{}: cannot read {}", e.utterance_id(), path.display());
                    return Ok(None);
                }
                Err(other) => return Err(other),
            };
            let fbank = compute_filterbank(&audio, &config)?.with_id(e.utterance_id());
            Ok(Some(match a.mfcc {
                Some(n) => compute_mfcc(&fbank, n)?,
                None => fbank,
            }))
        })
        .collect::<ssd_core::Result<_>>()?;
    let mut archive = FeatureArchive::new();
    for f in computed.into_iter().flatten() {
        archive.insert(f);
    }
    if archive.is_empty() {
        bail!("no audio could be read for {}", a.manifest.display());
    }
    if archive.len() < entries.len() {
        log::warn!("{} of {} utterances skipped", entries.len() - archive.len(), entries.len());
    }
    if a.cmvn {
        archive = speaker_cmvn(&entries, &archive)?;
    }
    archive.write(&a.out)?;
    println!("{} utterances -> {}", archive.len(), a.out.display());
    Ok(())
}

fn attribute_map(table: Option<&Path>) -> Result<AttributeMap> {
    match table {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(build_attribute_map(&text, &PhoneInventory::cantonese())?)
        }
        None => Ok(AttributeMap::cantonese()),
    }
}

pub fn train_posterior(a: TrainPosteriorArgs) -> Result<()> {
    let archive = FeatureArchive::read(&a.features)?;
    let mut segments: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for s in read_segments(&a.segments)? {
        segments.entry(s.utterance.clone()).or_default().push(s);
    }
    let allowed: Option<BTreeSet<String>> = match &a.manifest {
        Some(m) => Some(load_manifest(m)?.into_iter().filter(|e| !e.diagnosis.is_disordered()).map(|e| e.utterance_id()).collect()),
        None => None,
    };
    let mut data = Vec::new();
    for (id, f) in archive.iter() {
        if allowed.as_ref().is_some_and(|set| !set.contains(id)) {
            continue;
        }
        let Some(segs) = segments.get(id) else { continue };
        let refs: Vec<&Segment> = segs.iter().collect();
        data.push(LabeledUtterance { features: f, labels: frame_labels(&refs, f.num_frames(), false)? });
    }
    if data.is_empty() {
        bail!("no utterance has both features and segments");
    }
    let map = attribute_map(a.attribute_table.as_deref())?;
    let task = match a.task {
        Task::Attribute => TaskKind::AttributeMultitask,
        Task::Phone => TaskKind::PhoneSoftmax,
    };
    let config = TrainConfig { learning_rate: a.learning_rate, epochs: a.epochs, l2: a.l2, seed: a.seed, batch_size: a.batch_size };
    let model = train_frame_classifier(&data, &map, task, &config)?;
    write_text(&a.out, &serde_json::to_string(&model)?)?;
    println!(
        "{} utterances, final loss {:.5} -> {}",
        data.len(),
        model.loss_history.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

pub fn lpr(a: LprArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model: FrameClassifier = serde_json::from_str(&text).context("parsing posterior model")?;
    let archive = FeatureArchive::read(&a.features)?;
    let items: Vec<&ssd_core::FeatureMatrix> = archive.values().collect();
    let out: Vec<ssd_core::FeatureMatrix> = items
        .par_iter()
        .map(|f| {
            let p = predict_posteriors(&model, f)?;
            if a.posteriors {
                Ok(p)
            } else {
                lpr_transform(&p, a.clamp)
            }
        })
        .collect::<ssd_core::Result<_>>()?;
    let archive: FeatureArchive = out.into_iter().collect();
    archive.write(&a.out)?;
    println!("{} utterances -> {}", archive.len(), a.out.display());
    Ok(())
}

pub fn train_ubm(a: TrainUbmArgs) -> Result<()> {
    let archive = FeatureArchive::read(&a.features)?;
    let frames: Vec<&ssd_core::FeatureMatrix> = archive.values().collect();
    let config = UbmConfig {
        n_components: a.components,
        n_iters: a.iterations,
        seed: a.seed,
        variance_floor: a.variance_floor,
        ..UbmConfig::default()
    };
    let trained = fit_ubm(&frames, &config)?;
    write_model(&a.out, &trained.gmm, None)?;
    let ll = trained.log_likelihoods.last().copied().unwrap_or(f64::NAN);
    println!("{} components, final log-likelihood {ll:.4} -> {}", a.components, a.out.display());
    Ok(())
}

/// Statistics per utterance, or pooled per speaker when a manifest is given.
fn collect_stats(ubm: &ssd_core::DiagGmm, archive: &FeatureArchive, manifest: Option<&Path>) -> Result<Vec<BaumWelchStats>> {
    let items: Vec<&ssd_core::FeatureMatrix> = archive.values().collect();
    let per_utt: BTreeMap<String, BaumWelchStats> = items
        .par_iter()
        .map(|f| Ok((f.utterance_id().to_string(), accumulate_stats(ubm, f)?)))
        .collect::<ssd_core::Result<_>>()?;
    let Some(manifest) = manifest else {
        return Ok(per_utt.into_values().collect());
    };
    let entries = load_manifest(manifest)?;
    let mut pooled = Vec::new();
    for (speaker, list) in by_speaker(&entries) {
        let mut acc: Option<BaumWelchStats> = None;
        for e in list {
            if let Some(s) = per_utt.get(&e.utterance_id()) {
                match acc.as_mut() {
                    Some(total) => *total += s,
                    None => acc = Some(s.clone()),
                }
            }
        }
        match acc {
            Some(mut s) => {
                s.source_id = speaker.to_string();
                pooled.push(s);
            }
            None => log::warn!("speaker {speaker} has no features"),
        }
    }
    Ok(pooled)
}

pub fn train_tv(a: TrainTvArgs) -> Result<()> {
    let (ubm, _) = read_model(&a.model)?;
    let archive = FeatureArchive::read(&a.features)?;
    let stats = collect_stats(&ubm, &archive, a.manifest.as_deref())?;
    let config = TvConfig { rank: a.rank, n_iters: a.iterations, seed: a.seed };
    let trained = fit_tv(&ubm, &stats, &config)?;
    write_model(&a.out, &ubm, Some(&trained.model))?;
    println!("rank {} from {} statistic sets -> {}", a.rank, stats.len(), a.out.display());
    Ok(())
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let (ubm, tv) = read_model(&a.model)?;
    let tv = tv.context("model has no total variability matrix; run train-tv first")?;
    let archive = FeatureArchive::read(&a.features)?;
    let entries = load_manifest(&a.manifest)?;
    let extractor = tv.extractor();
    let units: Vec<(String, ssd_core::FeatureMatrix)> = match a.level {
        Level::Subject => by_speaker(&entries)
            .into_iter()
            .map(|(speaker, list)| {
                let m = assemble_subject_utterance(&list, &archive)?;
                Ok((speaker.to_string(), m))
            })
            .collect::<ssd_core::Result<_>>()?,
        Level::Word => entries
            .iter()
            .filter_map(|e| archive.get(&e.utterance_id()).map(|f| (e.utterance_id(), f.clone())))
            .collect(),
    };
    let vectors: Vec<(String, ndarray::Array1<f64>)> = units
        .par_iter()
        .map(|(id, m)| {
            let w = extractor.extract(&accumulate_stats(&ubm, m)?)?;
            Ok((id.clone(), if a.length_norm { w.length_normalized().w } else { w.w }))
        })
        .collect::<ssd_core::Result<_>>()?;
    let mut out = RepresentationArchive::new();
    for (id, w) in vectors {
        out.insert(id, RepresentationKind::IVector, w)?;
    }
    out.write(&a.out)?;
    println!("{} i-vectors -> {}", out.len(), a.out.display());
    Ok(())
}

/// Label of every id in the archive; word ids `speaker/word` fall back to
/// their speaker's label.
fn labels_for(reps: &RepresentationArchive, source: &LabelSource) -> Result<Vec<(String, bool)>> {
    let table: BTreeMap<String, bool> = match (&source.manifest, &source.labels) {
        (Some(m), _) => speaker_labels(&load_manifest(m)?)?.into_iter().map(|(s, d)| (s, d.is_disordered())).collect(),
        (None, Some(l)) => read_labels(l)?,
        (None, None) => bail!("either --manifest or --labels is required"),
    };
    reps.ids()
        .map(|id| {
            let label = table.get(id).or_else(|| id.split_once('/').and_then(|(s, _)| table.get(s)));
            match label {
                Some(&l) => Ok((id.to_string(), l)),
                None => bail!("no label for {id}"),
            }
        })
        .collect()
}

pub fn train_backend(a: TrainBackendArgs) -> Result<()> {
    let reps = RepresentationArchive::read(&a.representations)?;
    let labelled = labels_for(&reps, &a.source)?;
    let ids: Vec<&str> = labelled.iter().map(|(id, _)| id.as_str()).collect();
    let labels: Vec<bool> = labelled.iter().map(|(_, l)| *l).collect();
    let classifier: ClassifierKind = a.classifier.parse()?;
    let config = BackendConfig {
        classifier,
        lda: a.lda,
        svm: SvmConfig { c: a.c, iterations: a.svm_iterations, balance_classes: a.balance_classes },
        logreg: LogRegConfig { c: a.c, balance_classes: a.balance_classes, ..LogRegConfig::default() },
    };
    let model = BackendModel::fit(reps.matrix(&ids)?.view(), &labels, &config)?;
    model.save(&a.out)?;
    println!("{} training vectors -> {}", ids.len(), a.out.display());
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = BackendModel::load(&a.backend)?;
    let reps = RepresentationArchive::read(&a.representations)?;
    let labelled = labels_for(&reps, &a.source)?;
    let ids: Vec<&str> = labelled.iter().map(|(id, _)| id.as_str()).collect();
    let predictions = model.predict(reps.matrix(&ids)?.view())?;
    let (pred, truth): (Vec<bool>, Vec<bool>) = if a.majority {
        let mut per_speaker: BTreeMap<&str, (Vec<bool>, bool)> = BTreeMap::new();
        for ((id, label), p) in labelled.iter().zip(&predictions) {
            let speaker = id.split_once('/').map_or(id.as_str(), |(s, _)| s);
            per_speaker.entry(speaker).or_insert_with(|| (Vec::new(), *label)).0.push(*p);
        }
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for (votes, label) in per_speaker.values() {
            pred.push(majority_vote(votes)?);
            truth.push(*label);
        }
        (pred, truth)
    } else {
        (predictions, labelled.iter().map(|(_, l)| *l).collect())
    };
    let metrics = score(&pred, &truth)?;
    let json = serde_json::to_string_pretty(&metrics)? + "\n";
    if let Some(out) = &a.out {
        write_text(out, &json)?;
    }
    print!("{json}");
    Ok(())
}

pub fn crossval(a: CrossvalArgs) -> Result<()> {
    if a.template {
        print!("{}", ExperimentConfig::template());
        return Ok(());
    }
    let path = a.config.as_deref().context("--config is required")?;
    let mut config = ExperimentConfig::load(path)?;
    for o in &a.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        config.set(k.trim(), v.trim())?;
    }
    let report = run_crossval(&config)?;
    if let Some(out) = &a.out {
        write_text(out, &report.to_json()?)?;
    }
    if let Some(m) = &a.metrics {
        write_text(m, &report.metrics_jsonl()?)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec { n_td: a.n_td, n_ssd: a.n_ssd, n_words: a.n_words, substitution_rate: a.rate, dim: a.dim, seed: a.seed, ..SyntheticSpec::default() };
    if let Some(rules) = &a.rules {
        spec.rules = rules.split(',').filter(|r| !r.trim().is_empty()).map(|r| r.trim().parse()).collect::<ssd_core::Result<Vec<SubstitutionRule>>>()?;
    }
    let corpus = synth_generate(&spec, &AttributeMap::cantonese())?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    corpus.write(&a.out)?;
    println!("{} speakers, {} utterances -> {}", a.n_td + a.n_ssd, corpus.entries.len(), a.out.display());
    Ok(())
}
