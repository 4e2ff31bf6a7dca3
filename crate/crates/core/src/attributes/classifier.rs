use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::AttributeMap;
use crate::error::{Error, Result};
use crate::frontend::{FeatureKind, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// One softmax over the phone inventory.
    PhoneSoftmax,
    /// One independent sigmoid detector per speech attribute.
    AttributeMultitask,
}

impl TaskKind {
    pub fn output_kind(self) -> FeatureKind {
        match self {
            TaskKind::PhoneSoftmax => FeatureKind::PhonePosterior,
            TaskKind::AttributeMultitask => FeatureKind::AttributePosterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial step. In full-batch mode the step adapts: halved until the
    /// loss does not increase, grown by 20% after each accepted epoch.
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// `None` is deterministic full-batch descent; `Some(n)` shuffles frames
    /// into mini-batches of `n` with a fixed step.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 100,
            l2: 1e-4,
            seed: 0,
            batch_size: None,
        }
    }
}

/// Frames of one utterance with a phone label per frame.
#[derive(Debug, Clone)]
pub struct LabeledUtterance<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: Vec<&'a str>,
}

/// Frame-wise linear classifier: `K x D` weights and `K` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameClassifier {
    pub task: TaskKind,
    /// Output class names: phones or attributes.
    pub classes: Vec<String>,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Training loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl FrameClassifier {
    /// All-zero parameters.
    pub fn zeros(task: TaskKind, classes: Vec<String>, input_dim: usize) -> Self {
        let k = classes.len();
        Self {
            task,
            classes,
            weights: Array2::zeros((k, input_dim)),
            bias: Array1::zeros(k),
            loss_history: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t()) + &self.bias;
        activate(self.task, &mut z);
        z
    }
}

fn activate(task: TaskKind, z: &mut Array2<f64>) {
    match task {
        TaskKind::PhoneSoftmax => {
            for mut row in z.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let s = row.sum();
                row /= s;
            }
        }
        TaskKind::AttributeMultitask => z.mapv_inplace(sigmoid),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    x: Array2<f64>,
    y: Array2<f64>,
}

fn build_problem(data: &[LabeledUtterance<'_>], map: &AttributeMap, task: TaskKind) -> Result<(Problem, Vec<String>)> {
    let total: usize = data.iter().map(|u| u.features.num_frames()).sum();
    if total == 0 {
        return Err(Error::TooFew { what: "training frames", need: 1, got: 0 });
    }
    let dim = data[0].features.dim();
    let inventory = map.inventory();
    let classes: Vec<String> = match task {
        TaskKind::PhoneSoftmax => inventory.phones().to_vec(),
        TaskKind::AttributeMultitask => map.attributes().iter().map(|a| a.name.clone()).collect(),
    };
    let mut y = Array2::zeros((total, classes.len()));
    let mut row = 0;
    let mut seen = vec![false; inventory.len()];
    for u in data {
        if u.features.dim() != dim {
            return Err(Error::DimensionMismatch { what: "training features", expected: dim, got: u.features.dim() });
        }
        if u.labels.len() != u.features.num_frames() {
            return Err(Error::DimensionMismatch {
                what: "frame labels",
                expected: u.features.num_frames(),
                got: u.labels.len(),
            });
        }
        for label in &u.labels {
            let pi = inventory.index_of(label).ok_or_else(|| Error::UnknownPhone(label.to_string()))?;
            seen[pi] = true;
            match task {
                TaskKind::PhoneSoftmax => y[[row, pi]] = 1.0,
                TaskKind::AttributeMultitask => {
                    for &a in map.attributes_of(label)? {
                        y[[row, a]] = 1.0;
                    }
                }
            }
            row += 1;
        }
    }
    if task == TaskKind::PhoneSoftmax && seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateLabels("phone training set contains a single class".into()));
    }
    let views: Vec<_> = data.iter().map(|u| u.features.frames().view()).collect();
    let x = concatenate(Axis(0), &views).expect("dims checked");
    Ok((Problem { x, y }, classes))
}

/// Mean cross-entropy plus the L2 penalty.
fn loss(model: &FrameClassifier, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, l2: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let p = model.probabilities(x);
    let n = x.nrows() as f64;
    let data_term: f64 = match model.task {
        TaskKind::PhoneSoftmax => p.iter().zip(y.iter()).filter(|(_, &t)| t > 0.0).map(|(&q, _)| -(q.max(TINY)).ln()).sum(),
        TaskKind::AttributeMultitask => p
            .iter()
            .zip(y.iter())
            .map(|(&q, &t)| if t > 0.0 { -(q.max(TINY)).ln() } else { -((1.0 - q).max(TINY)).ln() })
            .sum(),
    };
    data_term / n + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

fn gradient(model: &FrameClassifier, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, l2: f64) -> (Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    // both heads share the (p - y) residual form
    let residual = model.probabilities(x) - y;
    let gw = residual.t().dot(&x) / n + &model.weights * l2;
    let gb = residual.sum_axis(Axis(0)) / n;
    (gw, gb)
}

/// Trains a frame classifier by cross-entropy minimisation.
pub fn train_frame_classifier(
    data: &[LabeledUtterance<'_>],
    map: &AttributeMap,
    task: TaskKind,
    config: &TrainConfig,
) -> Result<FrameClassifier> {
    if data.is_empty() {
        return Err(Error::TooFew { what: "training utterances", need: 1, got: 0 });
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let (prob, classes) = build_problem(data, map, task)?;
    let mut model = FrameClassifier::zeros(task, classes, prob.x.ncols());
    match config.batch_size {
        None => full_batch(&mut model, &prob, config),
        Some(bs) => mini_batch(&mut model, &prob, config, bs.max(1)),
    }
    Ok(model)
}

fn full_batch(model: &mut FrameClassifier, prob: &Problem, config: &TrainConfig) {
    let (x, y) = (prob.x.view(), prob.y.view());
    let mut lr = config.learning_rate;
    let mut current = loss(model, x, y, config.l2);
    for _ in 0..config.epochs {
        let (gw, gb) = gradient(model, x, y, config.l2);
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = model.clone();
            trial.weights.scaled_add(-lr, &gw);
            trial.bias.scaled_add(-lr, &gb);
            let l = loss(&trial, x, y, config.l2);
            if l <= current {
                *model = trial;
                current = l;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if accepted {
            lr *= 1.2;
        }
        model.loss_history.push(current);
    }
}

fn mini_batch(model: &mut FrameClassifier, prob: &Problem, config: &TrainConfig, batch: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..prob.x.nrows()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = prob.x.select(Axis(0), chunk);
            let yb = prob.y.select(Axis(0), chunk);
            let (gw, gb) = gradient(model, xb.view(), yb.view(), config.l2);
            model.weights.scaled_add(-config.learning_rate, &gw);
            model.bias.scaled_add(-config.learning_rate, &gb);
        }
        model.loss_history.push(loss(model, prob.x.view(), prob.y.view(), config.l2));
    }
}

/// Frame posteriors: softmax rows for the phone task, independent sigmoids
/// for the attribute task.
pub fn predict_posteriors(model: &FrameClassifier, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "classifier input",
            expected: model.input_dim(),
            got: features.dim(),
        });
    }
    features.replace_frames(model.task.output_kind(), model.probabilities(features.frames().view()))
}
