//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use ssd_core::attributes::{lpr_transform, AttributeMap, DEFAULT_LPR_CLAMP};
use ssd_core::backend::{evaluate, lda_fit, svm_objective, svm_train, SvmConfig};
use ssd_core::corpus::{make_folds, synth_generate, FoldPlan, SyntheticSpec};
use ssd_core::frontend::{FeatureKind, FeatureMatrix};
use ssd_core::ivector::{extract_ivector, train_tv, train_ubm, BaumWelchStats, DiagGmm, TotalVariability, TvConfig, UbmConfig};
use ssd_core::pipeline::{run_crossval, run_crossval_with_plan, CrossvalReport, ExperimentConfig, ExperimentData};
use ssd_core::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let s = elapsed.as_secs_f64();
    if s < limit_s {
        Ok(format!("{detail}; {s:.2}s"))
    } else {
        Err(format!("{detail}; took {s:.2}s, limit {limit_s}s"))
    }
}

fn em_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..8).map(|_| (0..10).map(|_| 3.0 * g.sample(&mut rng)).collect()).collect();
    let frames = Array2::from_shape_fn((5000, 10), |(t, j)| centers[t % 8][j] + g.sample(&mut rng));
    let m = FeatureMatrix::new("em", FeatureKind::Mfcc, 0.01, frames).unwrap();
    let start = Instant::now();
    let cfg = UbmConfig { n_components: 8, n_iters: 20, ..UbmConfig::default() };
    let out = train_ubm(&[&m], &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ll = &out.log_likelihoods;
    for i in 1..ll.len() {
        if ll[i] < ll[i - 1] - 1e-8 * ll[i - 1].abs() {
            return Err(format!("log-likelihood fell at iteration {i}: {} -> {}", ll[i - 1], ll[i]));
        }
    }
    within(elapsed, 5.0, format!("{} values non-decreasing, final {:.4}", ll.len(), ll[ll.len() - 1]))
}

fn ivector_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let start = Instant::now();
    let (c, d, r) = (2, 2, 2);
    let t = Array2::from_shape_fn((c * d, r), |_| rng.sample::<f64, _>(StandardNormal));
    let sigma = Array1::from_shape_fn(c * d, |_| rng.random_range(0.5..2.0));
    let m = Array1::from_shape_fn(c * d, |_| rng.random_range(-1.0..1.0));
    let tv = TotalVariability::new(c, d, m, t.clone(), sigma.clone()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = Array1::from_shape_fn(c, |_| rng.random_range(0.5..30.0));
        let f = Array2::from_shape_fn((c, d), |(i, _)| n[i] * rng.random_range(-1.0..1.0));
        let stats = BaumWelchStats { n: n.clone(), f: f.clone(), total_frames: 0, source_id: format!("s{k}"), feature_kind: FeatureKind::Mfcc };
        let w = extract_ivector(&tv, &stats).map_err(|e| e.to_string())?.w;
        let oracle = support::ivector_oracle_2d(&n, &f, &t, &sigma);
        let err = (&w - &oracle).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = worst.max(err);
    }
    if worst > 1e-4 {
        return Err(format!("max deviation from posterior maximum {worst:.2e} > 1e-4"));
    }
    within(start.elapsed(), 10.0, format!("20 statistic sets, max deviation {worst:.2e}"))
}

/// Largest principal angle (degrees) between the column spaces of `a` and `b`.
fn max_principal_angle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let to_na = |x: &Array2<f64>| DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]]);
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    let s = (qa.transpose() * qb).singular_values();
    let smallest = s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    smallest.acos().to_degrees()
}

fn tv_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (c, d, r) = (2, 2, 2);
    let weights = Array1::from(vec![0.5, 0.5]);
    let means = Array2::from_shape_vec((c, d), vec![-6.0, -6.0, 6.0, 6.0]).unwrap();
    let variances = Array2::from_elem((c, d), 1.0);
    let ubm = DiagGmm::new(weights, means.clone(), variances).map_err(|e| e.to_string())?;
    let t_true = Array2::from_shape_fn((c * d, r), |_| rng.sample::<f64, _>(StandardNormal));
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut stats = Vec::new();
    for u in 0..200 {
        let w = Array1::from_shape_fn(r, |_| g.sample(&mut rng));
        let shift = t_true.dot(&w);
        let frames = Array2::from_shape_fn((300, d), |(i, j)| {
            let k = i % c;
            means[[k, j]] + shift[k * d + j] + g.sample(&mut rng)
        });
        let m = FeatureMatrix::new(format!("u{u}"), FeatureKind::Mfcc, 0.01, frames).unwrap();
        stats.push(ssd_core::ivector::accumulate_stats(&ubm, &m).map_err(|e| e.to_string())?);
    }
    let cfg = TvConfig { rank: r, n_iters: 20, seed: 1 };
    let trained = train_tv(&ubm, &stats, &cfg).map_err(|e| e.to_string())?;
    let angle = max_principal_angle(&t_true, trained.model.t_matrix());
    if angle >= 5.0 {
        return Err(format!("largest principal angle {angle:.2} deg >= 5"));
    }
    within(start.elapsed(), 30.0, format!("largest principal angle {angle:.3} deg"))
}

fn lpr_correctness() -> Outcome {
    let xs: Vec<f64> = (0..1000).map(|i| -10.0 + 20.0 * i as f64 / 999.0).collect();
    let p = Array2::from_shape_fn((1001, 1), |(i, _)| if i < 1000 { 1.0 / (1.0 + (-xs[i]).exp()) } else { 0.5 });
    let m = FeatureMatrix::new("lpr", FeatureKind::AttributePosterior, 0.01, p).unwrap();
    let out = lpr_transform(&m, DEFAULT_LPR_CLAMP).map_err(|e| e.to_string())?;
    let worst = xs.iter().enumerate().fold(0.0f64, |a, (i, x)| a.max((out.frames()[[i, 0]] - x).abs()));
    if worst > 1e-9 {
        return Err(format!("max round-trip error {worst:.2e} > 1e-9"));
    }
    let half = out.frames()[[1000, 0]];
    if half != 0.0 {
        return Err(format!("p = 0.5 gave {half}, expected exactly 0"));
    }
    Ok(format!("1000 values, max error {worst:.2e}; p = 0.5 -> 0"))
}

fn attribute_map_fidelity() -> Outcome {
    // phone -> attributes, transcribed row by row from the Cantonese attribute table
    let expected: &[(&str, &[&str])] = &[
        ("p", &["Plosive", "Unaspirated", "Labial"]),
        ("pʰ", &["Plosive", "Aspirated", "Labial"]),
        ("t", &["Plosive", "Unaspirated", "Alveolar"]),
        ("tʰ", &["Plosive", "Aspirated", "Alveolar"]),
        ("k", &["Plosive", "Unaspirated", "Velar"]),
        ("kʰ", &["Plosive", "Aspirated", "Velar"]),
        ("kʷ", &["Plosive", "Unaspirated", "Labio-velar"]),
        ("kʷʰ", &["Plosive", "Aspirated", "Labio-velar"]),
        ("m", &["Nasal", "Labial"]),
        ("n", &["Nasal"]),
        ("ŋ", &["Nasal", "Velar"]),
        ("ts", &["Affricate", "Unaspirated", "Alveolar"]),
        ("tsʰ", &["Affricate", "Aspirated", "Alveolar"]),
        ("s", &["Fricative", "Alveolar"]),
        ("f", &["Fricative", "Labio-dental"]),
        ("h", &["Fricative", "Vocal"]),
        ("j", &["Glide", "Alveolar"]),
        ("w", &["Glide", "Labial"]),
        ("l", &["Liquid", "Lateral"]),
    ];
    let vowels = ["aː", "iː", "ɛː", "e", "œː", "œ", "ɔː", "o", "uː", "yː", "ɐ", "ɪ", "ɵ", "ʊ"];
    let map = AttributeMap::cantonese();
    let names = |p: &str| -> Result<BTreeSet<String>, String> {
        Ok(map.attribute_names_of(p).map_err(|e| e.to_string())?.into_iter().map(str::to_lowercase).collect())
    };
    for (phone, attrs) in expected {
        let want: BTreeSet<String> = attrs.iter().map(|a| a.to_lowercase()).collect();
        let got = names(phone)?;
        if got != want {
            return Err(format!("/{phone}/: expected {want:?}, got {got:?}"));
        }
    }
    for v in vowels {
        let got = names(v)?;
        if got != BTreeSet::from(["vowel/semi-vowel".to_string()]) {
            return Err(format!("/{v}/: expected only the vowel class, got {got:?}"));
        }
    }
    if map.inventory().len() != expected.len() + vowels.len() {
        return Err(format!("inventory has {} phones, table lists {}", map.inventory().len(), expected.len() + vowels.len()));
    }
    let aspirated: BTreeSet<&str> =
        map.inventory().phones().iter().map(String::as_str).filter(|p| names(p).unwrap().contains("aspirated")).collect();
    if aspirated != BTreeSet::from(["pʰ", "tʰ", "kʰ", "kʷʰ", "tsʰ"]) {
        return Err(format!("aspirated set {aspirated:?}"));
    }
    Ok(format!("{} consonants and {} vowels match; {} attributes", expected.len(), vowels.len(), map.num_attributes()))
}

fn brute_force_metrics(pred: &[bool], truth: &[bool]) -> (usize, usize, usize, usize, f64, f64) {
    let count = |p: bool, t: bool| pred.iter().zip(truth).filter(|(a, b)| **a == p && **b == t).count();
    let mut recalls = Vec::new();
    let mut f1s = Vec::new();
    for class in [true, false] {
        let hit = count(class, class) as f64;
        let actual = truth.iter().filter(|t| **t == class).count() as f64;
        let predicted = pred.iter().filter(|p| **p == class).count() as f64;
        let recall = if actual > 0.0 { hit / actual } else { 0.0 };
        let precision = if predicted > 0.0 { hit / predicted } else { 0.0 };
        recalls.push(recall);
        f1s.push(if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 });
    }
    (count(true, true), count(true, false), count(false, false), count(false, true), (recalls[0] + recalls[1]) / 2.0, (f1s[0] + f1s[1]) / 2.0)
}

fn backend_oracles() -> Outcome {
    let mut notes = Vec::new();
    let fixtures = [(1, 20, 3.0), (2, 30, 2.0), (3, 25, 1.0), (4, 40, 4.0), (5, 15, 0.5)];
    let mut worst_gap = 0.0f64;
    for (seed, n, sep) in fixtures {
        let (x, labels) = support::svm_fixture(seed, n, sep);
        let y = support::signs(&labels);
        let oracle = support::svm_oracle_2d(&x, &y, 1.0);
        let model = svm_train(x.view(), &labels, &SvmConfig::default()).map_err(|e| e.to_string())?;
        let ones = vec![1.0; labels.len()];
        let got = svm_objective(model.weights.view(), model.bias, x.view(), &labels, &ones, 1.0);
        let gap = (got - oracle) / oracle;
        worst_gap = worst_gap.max(gap);
        if gap > 0.01 {
            return Err(format!("SVM fixture {seed}: objective {got:.6} vs oracle {oracle:.6}"));
        }
    }
    notes.push(format!("SVM worst relative gap {worst_gap:.2e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let g = Normal::new(0.0, 1.0).unwrap();
    let dim = 5;
    let dir = Array1::<f64>::from_shape_fn(dim, |_| g.sample(&mut rng));
    let dir = &dir / dir.dot(&dir).sqrt();
    let x = Array2::from_shape_fn((400, dim), |(i, j)| if i < 200 { 0.0 } else { 4.0 * dir[j] } + g.sample(&mut rng));
    let labels: Vec<usize> = (0..400).map(|i| usize::from(i >= 200)).collect();
    let lda = lda_fit(x.view(), &labels, None).map_err(|e| e.to_string())?;
    let col = lda.projection.column(0);
    let cosine = col.dot(&dir).abs() / col.dot(&col).sqrt();
    if cosine <= 0.99 {
        return Err(format!("LDA |cosine| {cosine:.4} <= 0.99"));
    }
    notes.push(format!("LDA |cosine| {cosine:.4}"));

    for case in 0..1000 {
        let n = rng.random_range(2..60);
        let mut truth: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        truth[0] = true;
        truth[1] = false;
        let pred: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let m = evaluate(&pred, &truth).map_err(|e| e.to_string())?;
        let (tp, fp, tn, fn_, uar, f1) = brute_force_metrics(&pred, &truth);
        if (m.tp, m.fp, m.tn, m.fn_) != (tp, fp, tn, fn_) || (m.uar - uar).abs() > 1e-12 || (m.macro_f1 - f1).abs() > 1e-12 {
            return Err(format!("evaluate disagrees with the brute-force count on case {case}"));
        }
    }
    notes.push("1000 evaluate cases agree".into());

    // recalls 3/5 on the disordered class and 4/5 on the typical class
    let truth = [true, true, true, true, true, false, false, false, false, false];
    let pred = [true, true, true, false, false, false, false, false, false, true];
    let uar = evaluate(&pred, &truth).map_err(|e| e.to_string())?.uar;
    if (uar - 0.7).abs() > 1e-12 {
        return Err(format!("UAR hand example gave {uar}"));
    }
    notes.push("UAR(0.6, 0.8) = 0.7".into());
    Ok(notes.join("; "))
}

const DESK_CONFIG: &str = "\
ubm.components = 32
ubm.iterations = 20
tv.rank = 20
tv.iterations = 10
posterior.epochs = 50
features.lpr_clamp = 0.01
backend.lda = true
backend.balance_classes = true
backend.c = 10
";

fn desk_config(representation: &str, fusion: &str, seed: u64) -> ExperimentConfig {
    let text = format!(
        "data.manifest = manifest.tsv\ndata.features = features.ark\ndata.segments = segments.tsv\n\
         experiment.representation = {representation}\nexperiment.fusion = {fusion}\nexperiment.seed = {seed}\n{DESK_CONFIG}"
    );
    ExperimentConfig::parse(&text, ".").expect("valid desk config")
}

fn end_to_end_ordering() -> Outcome {
    let start = Instant::now();
    let map = AttributeMap::cantonese();
    let systems = [
        ("attribute", "ivector-attribute-lpr", "subject"),
        ("phone", "ivector-phone-lpr", "subject"),
        ("mfcc", "ivector-mfcc", "subject"),
        ("word-majority", "ivector-attribute-lpr", "word-majority"),
    ];
    let mut uar: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 0..3u64 {
        let spec = SyntheticSpec { substitution_rate: 0.3, seed, ..SyntheticSpec::default() };
        let corpus = synth_generate(&spec, &map).map_err(|e| e.to_string())?;
        let plan = make_folds(&corpus.entries, 5, seed).map_err(|e| e.to_string())?;
        let data = ExperimentData::from_parts(corpus.entries, Some(corpus.features), &corpus.segments, map.clone())
            .map_err(|e| e.to_string())?;
        for (name, representation, fusion) in systems {
            let report = run_crossval_with_plan(&desk_config(representation, fusion, seed), &data, &plan).map_err(|e| e.to_string())?;
            uar.entry(name).or_default().push(report.mean_uar);
        }
    }
    let mean = |k: &str| uar[k].iter().sum::<f64>() / uar[k].len() as f64;
    let (attr, phone, mfcc, word) = (mean("attribute"), mean("phone"), mean("mfcc"), mean("word-majority"));
    let detail = format!(
        "mean UAR over 3 seeds: attribute {attr:.3} {:?}, phone {phone:.3}, mfcc {mfcc:.3}, word-majority {word:.3}",
        uar["attribute"].iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    let mut failures = Vec::new();
    if attr < 0.90 {
        failures.push("attribute-LPR UAR below 0.90");
    }
    if !(attr >= phone && phone >= mfcc) {
        failures.push("ordering attribute >= phone >= mfcc violated");
    }
    if attr < word {
        failures.push("subject-level below word-majority");
    }
    if !failures.is_empty() {
        return Err(format!("{}; {detail}", failures.join(", ")));
    }
    within(start.elapsed(), 300.0, detail)
}

fn small_corpus_dir() -> Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec { n_td: 10, n_ssd: 10, n_words: 8, seed: 5, ..SyntheticSpec::default() };
    synth_generate(&spec, &AttributeMap::cantonese())
        .and_then(|c| c.write(dir.path()))
        .map_err(|e| e.to_string())?;
    Ok(dir)
}

fn small_config(dir: &std::path::Path, representation: &str, extra: &str) -> Result<ExperimentConfig, String> {
    let text = format!(
        "data.manifest = manifest.tsv\ndata.features = features.ark\ndata.segments = segments.tsv\n\
         experiment.representation = {representation}\nubm.components = 8\ntv.rank = 5\nposterior.epochs = 20\n{extra}"
    );
    ExperimentConfig::parse(&text, dir).map_err(|e| e.to_string())
}

fn leak_check() -> Outcome {
    let dir = small_corpus_dir()?;
    let mut notes = Vec::new();
    for representation in ["ivector-mfcc", "ivector-attribute-lpr"] {
        let cfg = small_config(dir.path(), representation, "")?;
        let data = ExperimentData::load(&cfg).map_err(|e| e.to_string())?;
        let honest = make_folds(&data.entries, 5, 0).map_err(|e| e.to_string())?;
        run_crossval_with_plan(&cfg, &data, &honest).map_err(|e| format!("honest plan failed: {e}"))?;
        // a typical test speaker of fold 0 is also listed in fold 1, so it
        // becomes a training speaker of fold 0
        let mut folds = honest.folds.clone();
        let leaked = folds[0].iter().find(|s| s.starts_with("td")).expect("stratified fold").clone();
        folds[1].push(leaked.clone());
        let corrupted = FoldPlan { n_folds: folds.len(), folds };
        match run_crossval_with_plan(&cfg, &data, &corrupted) {
            Err(Error::SpeakerLeak { stage, speaker }) if speaker == leaked => notes.push(format!("{representation}: {speaker} stopped at {stage}")),
            Err(other) => return Err(format!("{representation}: unexpected error {other}")),
            Ok(_) => return Err(format!("{representation}: corrupted plan ran to completion")),
        }
    }
    Ok(notes.join("; "))
}

fn determinism() -> Outcome {
    let dir = small_corpus_dir()?;
    let cfg = small_config(dir.path(), "ivector-attribute-lpr", "experiment.seed = 3")?;
    let run = || -> Result<CrossvalReport, String> { run_crossval(&cfg).map_err(|e| e.to_string()) };
    let (a, b) = (run()?, run()?);
    let (ja, jb) = (a.to_json().map_err(|e| e.to_string())?, b.to_json().map_err(|e| e.to_string())?);
    if ja != jb || a.to_text() != b.to_text() {
        return Err("two identical runs produced different reports".into());
    }
    Ok(format!("{} identical bytes, mean UAR {:.3}", ja.len(), a.mean_uar))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("EM monotonicity", em_monotonicity),
        ("i-vector oracle equivalence", ivector_oracle),
        ("TV recovery", tv_recovery),
        ("LPR correctness", lpr_correctness),
        ("attribute-map fidelity", attribute_map_fidelity),
        ("back-end oracles", backend_oracles),
        ("end-to-end synthetic ordering", end_to_end_ordering),
        ("leak check", leak_check),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
