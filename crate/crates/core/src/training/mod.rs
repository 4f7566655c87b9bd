//! Class-weighted cross-entropy training with Adam and dev-set early stopping.

mod adam;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;

use crate::candidates::Label;
use crate::dialog::Dialog;
use crate::error::{Error, Result};
use crate::eval::{score, EvalReport};
use crate::model::{CandidateInput, CarryoverModel, EncodedContext, Params, StreamGrads};
use crate::pipeline::{corpus_references, predict_corpus, Pipeline};

pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { negative: 1.0, positive: 1.0 };

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeightMode {
    InverseFrequency,
    Manual { negative: f64, positive: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub class_weights: ClassWeightMode,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Decision threshold used for dev F1 during early stopping.
    pub dev_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 3,
            class_weights: ClassWeightMode::InverseFrequency,
            seed: 0,
            clip_norm: Some(5.0),
            dev_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `−w_label · ln P(label)`, with the probability floored before the log.
pub fn compute_loss(probs: [f64; 2], label: Label, weights: ClassWeights) -> f64 {
    let p = match label {
        Label::Positive => probs[1],
        Label::Negative => probs[0],
    };
    -weights.get(label) * p.max(PROBABILITY_FLOOR).ln()
}

/// Gradient of [`compute_loss`] w.r.t. the two logits.
pub fn loss_logit_grad(probs: [f64; 2], label: Label, weights: ClassWeights) -> [f64; 2] {
    let w = weights.get(label);
    let target = match label {
        Label::Positive => [0.0, 1.0],
        Label::Negative => [1.0, 0.0],
    };
    [w * (probs[0] - target[0]), w * (probs[1] - target[1])]
}

/// Inverse-frequency weights `N / (2 · N_c)`.
pub fn class_weights(labels: impl IntoIterator<Item = Label>) -> Result<ClassWeights> {
    let (mut neg, mut pos) = (0usize, 0usize);
    for l in labels {
        match l {
            Label::Positive => pos += 1,
            Label::Negative => neg += 1,
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Invalid(format!(
            "class weights need both classes ({neg} negatives, {pos} positives)"
        )));
    }
    let total = (pos + neg) as f64;
    Ok(ClassWeights {
        negative: total / (2.0 * neg as f64),
        positive: total / (2.0 * pos as f64),
    })
}

/// One labelled candidate with precomputed features.
#[derive(Clone, Debug)]
pub struct Example {
    pub dialog: usize,
    pub turn: usize,
    pub input: CandidateInput,
    pub label: Label,
}

pub fn build_examples(pipe: &Pipeline<'_>, dialogs: &[Dialog]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (i, d) in dialogs.iter().enumerate() {
        for t in d.user_turns() {
            for cand in pipe.labelled_candidates(d, t)? {
                out.push(Example {
                    dialog: i,
                    turn: t,
                    input: pipe.candidate_input(d, t, &cand)?,
                    label: cand.label.expect("labelled"),
                });
            }
        }
    }
    Ok(out)
}

/// Loss and parameter gradient of one example, scaled by `scale`.
pub fn example_gradient(
    model: &CarryoverModel,
    enc: &EncodedContext,
    input: &CandidateInput,
    label: Label,
    weights: ClassWeights,
    scale: f64,
    grads: &mut Params,
    stream: &mut StreamGrads,
) -> Result<f64> {
    let fwd = model.forward(enc, input)?;
    let loss = compute_loss(fwd.probs, label, weights);
    let g = loss_logit_grad(fwd.probs, label, weights);
    model.backward_head(enc, input, &fwd, [g[0] * scale, g[1] * scale], grads, stream)?;
    Ok(loss * scale)
}

/// Mean loss over `batch` and its gradient. Examples of the same turn share
/// one stream encoding; groups are reduced in first-appearance order.
pub fn batch_gradient(
    model: &CarryoverModel,
    pipe: &Pipeline<'_>,
    dialogs: &[Dialog],
    examples: &[Example],
    batch: &[usize],
    weights: ClassWeights,
) -> Result<(f64, Params)> {
    let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for &i in batch {
        let key = (examples[i].dialog, examples[i].turn);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<Result<(f64, Params)>> = groups
        .par_iter()
        .map(|((d, t), members)| {
            let enc = model.encode_streams(pipe.table, &dialogs[*d], *t)?;
            let mut grads = Params::zeros(&model.config);
            let mut stream = StreamGrads::zeros(&enc, model.config.recurrent_hidden);
            let mut loss = 0.0;
            for &i in members {
                let ex = &examples[i];
                loss += example_gradient(model, &enc, &ex.input, ex.label, weights, scale, &mut grads, &mut stream)?;
            }
            model.backward_streams(&enc, &stream, &mut grads);
            Ok((loss, grads))
        })
        .collect();
    let mut total = Params::zeros(&model.config);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss, total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
    pub improved: bool,
    pub best_dev_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CarryoverModel,
    pub log: Vec<EpochRecord>,
    pub weights: ClassWeights,
    pub best_epoch: usize,
    pub examples: usize,
}

pub fn evaluate(model: &CarryoverModel, pipe: &Pipeline<'_>, dialogs: &[Dialog], tau: f64) -> Result<EvalReport> {
    let hyps = predict_corpus(model, pipe, dialogs, tau)?;
    let mut report = score(&hyps, &corpus_references(dialogs))?;
    report.tau = Some(tau);
    report.beta = Some(pipe.config.beta);
    Ok(report)
}

pub fn train(
    model: CarryoverModel,
    train_set: &[Dialog],
    dev_set: &[Dialog],
    pipe: &Pipeline<'_>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_set, dev_set, pipe, config, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    mut model: CarryoverModel,
    train_set: &[Dialog],
    dev_set: &[Dialog],
    pipe: &Pipeline<'_>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let examples = build_examples(pipe, train_set)?;
    if examples.is_empty() {
        return Err(Error::Invalid("training corpus yields no candidates".into()));
    }
    let weights = match config.class_weights {
        ClassWeightMode::InverseFrequency => class_weights(examples.iter().map(|e| e.label))?,
        ClassWeightMode::Manual { negative, positive } => ClassWeights { negative, positive },
    };
    let mut adam = Adam::new(config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best = (f64::NEG_INFINITY, model.params.clone(), 0usize);
    let mut stale = 0;
    let mut log = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, mut grads) = batch_gradient(&model, pipe, train_set, &examples, batch, weights)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    parameter_norm: model.params.norm(),
                });
            }
            if let Some(clip) = config.clip_norm {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            let grad_slices: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.as_slice().to_vec()).collect();
            let grad_refs: Vec<&[f64]> = grad_slices.iter().map(Vec::as_slice).collect();
            let mut tensors = model.params.tensors_mut();
            let mut param_refs: Vec<&mut [f64]> = tensors.iter_mut().map(|(_, t)| t.as_mut_slice()).collect();
            adam.step(&mut param_refs, &grad_refs);
            epoch_loss += loss * batch.len() as f64;
        }
        let dev = evaluate(&model, pipe, dev_set, config.dev_threshold)?;
        let improved = dev.f1 > best.0;
        if improved {
            best = (dev.f1, model.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / examples.len() as f64,
            dev_precision: dev.precision,
            dev_recall: dev.recall,
            dev_f1: dev.f1,
            improved,
            best_dev_f1: best.0,
        };
        on_epoch(&record);
        log.push(record);
        if stale >= config.patience {
            break;
        }
    }
    model.params = best.1;
    Ok(TrainOutcome {
        model,
        log,
        weights,
        best_epoch: best.2,
        examples: examples.len(),
    })
}
