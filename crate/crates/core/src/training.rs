//! Mini-batch Adam training with early stopping, and teacher→student
//! sequence distillation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::{evaluate, CharRnn};
use crate::hiermodel::{DecodeMode, HierModel, ModelConfig};
use crate::neuralnet::adam::{Adam, AdamConfig};
use crate::neuralnet::{clip_grad_norm, Real};
use crate::textcore::{derive_labels, ingest, Capitalizer, LabeledPair, Sentence};

/// Fraction of rejected lines above which ingestion aborts.
pub const MAX_REJECTION_RATE: f64 = 0.10;

/// A model trained by minimizing a per-sentence loss.
pub trait Trainable: Capitalizer {
    type Scalar: Real;

    fn params(&self) -> &[Self::Scalar];
    fn params_mut(&mut self) -> &mut [Self::Scalar];
    /// Sentence loss, with its gradient added into `grad` when given.
    fn loss_and_grad(&self, pair: &LabeledPair, grad: Option<&mut [Self::Scalar]>) -> Result<f64>;
}

impl<T: Real> Trainable for HierModel<T> {
    type Scalar = T;

    fn params(&self) -> &[T] {
        HierModel::params(self)
    }

    fn params_mut(&mut self) -> &mut [T] {
        HierModel::params_mut(self)
    }

    fn loss_and_grad(&self, pair: &LabeledPair, grad: Option<&mut [T]>) -> Result<f64> {
        HierModel::loss_and_grad(self, pair, grad)
    }
}

impl<T: Real> Trainable for CharRnn<T> {
    type Scalar = T;

    fn params(&self) -> &[T] {
        CharRnn::params(self)
    }

    fn params_mut(&mut self) -> &mut [T] {
        CharRnn::params_mut(self)
    }

    fn loss_and_grad(&self, pair: &LabeledPair, grad: Option<&mut [T]>) -> Result<f64> {
        CharRnn::loss_and_grad(self, pair, grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub valid_fraction: f64,
    /// Evaluations without improvement in validation loss or F1 before
    /// stopping.
    pub patience: usize,
    pub preset: String,
    /// Validation sentences decoded for F1 each epoch (loss uses all).
    pub valid_f1_sentences: usize,
    /// Wall-clock budget; runs cut short by it are not reproducible.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 1,
            valid_fraction: 0.1,
            patience: 5,
            preset: "student".into(),
            valid_f1_sentences: 500,
            max_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("patience", self.patience as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction <= 0.5) {
            return Err(Error::Config("valid_fraction must be in (0, 0.5]".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    TimeBudget,
    /// A non-finite loss or gradient appeared; the model holds the last good
    /// checkpoint.
    Diverged { epoch: usize },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub log: Vec<EpochLog>,
    /// Epoch of the retained checkpoint (0 = initial parameters).
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stop: StopReason,
}

/// Mean sentence loss without gradients.
pub fn mean_loss<M: Trainable>(model: &M, pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for p in pairs {
        total += model.loss_and_grad(p, None)?;
    }
    Ok(total / pairs.len() as f64)
}

fn valid_f1<M: Trainable>(model: &M, pairs: &[LabeledPair], limit: usize) -> Result<f64> {
    let golds: Vec<Sentence> = pairs.iter().take(limit).map(|p| p.gold.clone()).collect();
    if golds.is_empty() {
        return Ok(0.0);
    }
    Ok(evaluate(model, &golds)?.f1)
}

enum BatchError {
    Diverged,
    Other(Error),
}

fn batch_step<M: Trainable>(
    model: &mut M,
    adam: &mut Adam<M::Scalar>,
    batch: &[&LabeledPair],
    clip: f64,
    grad: &mut [M::Scalar],
) -> std::result::Result<f64, BatchError> {
    grad.iter_mut().for_each(|g| *g = M::Scalar::lit(0.0));
    let mut loss = 0.0;
    for pair in batch {
        match model.loss_and_grad(pair, Some(grad)) {
            Ok(l) => loss += l,
            Err(Error::NonFinite(_)) => return Err(BatchError::Diverged),
            Err(e) => return Err(BatchError::Other(e)),
        }
    }
    let scale = M::Scalar::lit(1.0 / batch.len() as f64);
    grad.iter_mut().for_each(|g| *g *= scale);
    clip_grad_norm(grad, clip);
    match adam.step(model.params_mut(), grad) {
        Ok(()) => {}
        Err(Error::NonFinite(_)) => return Err(BatchError::Diverged),
        Err(e) => return Err(BatchError::Other(e)),
    }
    if model.params().iter().any(|v| !v.as_f64().is_finite()) {
        return Err(BatchError::Diverged);
    }
    Ok(loss / batch.len() as f64)
}

/// Train `model` on `train`, selecting the checkpoint with the lowest
/// validation loss. `on_epoch` sees every log record as it is produced.
pub fn train_model<M: Trainable>(
    mut model: M,
    train: &[LabeledPair],
    valid: &[LabeledPair],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training corpus is empty".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
        model.params().len(),
    );
    let mut grad = vec![M::Scalar::lit(0.0); model.params().len()];
    let mut best_params = model.params().to_vec();
    // with no validation split, select on training loss instead
    let mut best_loss = if valid.is_empty() { f64::INFINITY } else { mean_loss(&model, valid)? };
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut log = Vec::new();
    let mut stop = StopReason::Completed;
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledPair> = chunk.iter().map(|&i| &train[i]).collect();
            match batch_step(&mut model, &mut adam, &batch, config.clip_norm, &mut grad) {
                Ok(l) => total += l * batch.len() as f64,
                Err(BatchError::Diverged) => {
                    stop = StopReason::Diverged { epoch };
                    break 'epochs;
                }
                Err(BatchError::Other(e)) => return Err(e),
            }
            if config.max_seconds.is_some_and(|m| start.elapsed().as_secs_f64() > m) {
                stop = StopReason::TimeBudget;
                break;
            }
        }
        let valid_loss = mean_loss(&model, valid)?;
        let f1 = valid_f1(&model, valid, config.valid_f1_sentences)?;
        let record = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            valid_loss,
            valid_f1: f1,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        let select = if valid.is_empty() { record.train_loss } else { valid_loss };
        on_epoch(&record);
        log.push(record);
        let mut improved = false;
        if select < best_loss {
            best_loss = select;
            best_params.copy_from_slice(model.params());
            best_epoch = epoch;
            improved = true;
        }
        if f1 > best_f1 {
            best_f1 = f1;
            improved = true;
        }
        stale = if improved { 0 } else { stale + 1 };
        if stop == StopReason::TimeBudget {
            break;
        }
        if stale >= config.patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_valid_loss: best_loss,
        stop,
    })
}

/// Shuffle with the seed and hold out a validation split (at least one
/// sentence when there are two or more).
pub fn split_pairs(mut pairs: Vec<LabeledPair>, valid_fraction: f64, seed: u64) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    pairs.shuffle(&mut rng);
    let mut n_valid = (pairs.len() as f64 * valid_fraction).round() as usize;
    if pairs.len() >= 2 {
        n_valid = n_valid.clamp(1, pairs.len() - 1);
    } else {
        n_valid = 0;
    }
    let valid = pairs.split_off(pairs.len() - n_valid);
    (pairs, valid)
}

/// Ingest cased lines, enforcing the rejection limit.
pub fn ingest_checked<I, S>(lines: I) -> Result<Vec<LabeledPair>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let ing = ingest(lines);
    if ing.rejection_rate() > MAX_REJECTION_RATE {
        return Err(Error::Rejected {
            rejected: ing.rejected,
            total: ing.rejected + ing.pairs.len(),
        });
    }
    if ing.pairs.is_empty() {
        return Err(Error::EmptyInput("no usable sentences in the corpus".into()));
    }
    Ok(ing.pairs)
}

/// Build a hierarchical model from `model_config` and train it on cased
/// corpus lines.
pub fn train<I, S>(
    model_config: ModelConfig,
    config: &TrainConfig,
    lines: I,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome<HierModel<f32>>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    config.validate()?;
    let pairs = ingest_checked(lines)?;
    let (train_set, valid_set) = split_pairs(pairs, config.valid_fraction, config.seed);
    let model = HierModel::new(model_config, config.seed)?;
    train_model(model, &train_set, &valid_set, config, on_epoch)
}

/// Word- and character-label accuracy of a model's decoded output against
/// the gold labels. Character accuracy covers the characters of gold-OTHER
/// words.
pub fn label_accuracy(system: &dyn Capitalizer, pairs: &[LabeledPair]) -> Result<(f64, f64)> {
    let (mut wc, mut wn, mut cc, mut cn) = (0usize, 0usize, 0usize, 0usize);
    for pair in pairs {
        let pred = derive_labels(&pair.lower, &system.truecase(&pair.lower)?)?;
        for i in 0..pair.lower.len() {
            wn += 1;
            wc += usize::from(pred.word_labels[i] == pair.word_labels[i]);
            if pair.word_labels[i] == crate::textcore::WordLabel::Other {
                for (a, b) in pred.char_labels[i].iter().zip(&pair.char_labels[i]) {
                    cn += 1;
                    cc += usize::from(a == b);
                }
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok((frac(wc, wn), frac(cc, cn)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub teacher: std::path::PathBuf,
    pub input: std::path::PathBuf,
    pub mode: DecodeMode,
    pub output: std::path::PathBuf,
}

/// Decode every input with the teacher (top-1) to make synthetic gold
/// sentences.
pub fn distill<T: Real>(teacher: &HierModel<T>, inputs: &[Sentence], mode: DecodeMode) -> Result<Vec<Sentence>> {
    inputs.iter().map(|s| teacher.truecase(s, mode)).collect()
}

/// File-to-file distillation: reads the teacher and one sentence per line,
/// writes the teacher's outputs one per line. Returns the sentence count.
pub fn run_distill(config: &DistillConfig) -> Result<usize> {
    let teacher = HierModel::<f32>::load(&config.teacher)?;
    let text = std::fs::read_to_string(&config.input)?;
    let inputs: Vec<Sentence> = text.lines().map(Sentence::parse).filter(|s| !s.is_empty()).collect();
    let outputs = distill(&teacher, &inputs, config.mode)?;
    let mut out = String::new();
    for s in &outputs {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    std::fs::write(&config.output, out)?;
    Ok(outputs.len())
}
