use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_loss, ClassifierError, ClassifierModel, FeatureVector, HasherConfig, Mode, ProvenanceStage};
use crate::hashing::derive_seed;
use crate::scalar::{sigmoid, Scalar};

/// Training rate divided by this gives the tuning rate.
pub const TUNING_RATE_DIVISOR: f64 = 20.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adam with linear warmup then linear decay. Moments are updated only for features
    /// present in the batch.
    #[default]
    AdamLike,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_delta: f64,
    pub patience: usize,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hasher: HasherConfig,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::baseline()
    }
}

impl TrainConfig {
    /// Defaults for the built-in linear model.
    pub fn baseline() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 8,
            min_delta: 0.007,
            patience: 4,
            warmup_fraction: 0.2,
            batch_size: 32,
            validation_fraction: 0.1,
            optimizer: Optimizer::AdamLike,
            seed: 0,
            hasher: HasherConfig::default(),
            decision_threshold: 0.5,
        }
    }

    /// Transformer-scale rates (1e-5 training); used as the default for external adapters.
    pub fn transformer() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-5,
            ..TrainConfig::baseline()
        }
    }

    /// Same schedule with the learning rate reduced for a second-stage dataset.
    pub fn tuning(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate / TUNING_RATE_DIVISOR,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let fail = |msg: String| Err(ClassifierError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.min_delta > 0.0) {
            return fail(format!("min_delta must be positive, got {}", self.min_delta));
        }
        if self.patience == 0 || self.patience > self.epochs {
            return fail(format!(
                "patience must be in 1..={}, got {}",
                self.epochs, self.patience
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return fail(format!(
                "decision_threshold must be in [0, 1], got {}",
                self.decision_threshold
            ));
        }
        if !(1..=28).contains(&self.hasher.dim_bits) {
            return fail(format!(
                "hasher.dim_bits must be in 1..=28, got {}",
                self.hasher.dim_bits
            ));
        }
        Ok(())
    }
}

/// Linear warmup to the base rate over `warmup_steps`, then linear decay towards zero at
/// `total_steps`. Steps are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRateSchedule {
    pub base: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LearningRateSchedule {
    pub fn new(base: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        LearningRateSchedule {
            base,
            warmup_steps: (warmup_fraction * total_steps as f64).floor() as usize,
            total_steps,
        }
    }

    pub fn rate(&self, step: usize) -> f64 {
        if step <= self.warmup_steps {
            return self.base * (step as f64 / self.warmup_steps as f64);
        }
        let decay_span = (self.total_steps - self.warmup_steps) as f64;
        let remaining = self.total_steps.saturating_sub(step) as f64 + 1.0;
        self.base * (remaining / decay_span).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has failed to improve by at least `min_delta` for
/// `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    min_delta: f64,
    patience: usize,
    best: f64,
    best_epoch: usize,
    epochs_seen: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        EarlyStopping {
            min_delta,
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs_seen: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopSignal {
        self.epochs_seen += 1;
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = self.epochs_seen;
            self.wait = 0;
            return StopSignal::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// 1-based epoch of the best loss; 0 before any observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// A featurized training sentence. `group` is the case id, used for the validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<S> {
    pub group: String,
    pub features: FeatureVector<S>,
    pub targets: Vec<bool>,
}

/// Gradient of the per-example loss: sparse per head over the example's features, dense bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S> {
    pub weights: Vec<Vec<(u32, S)>>,
    pub bias: Vec<S>,
}

/// Per-example BCE and its analytic gradient.
pub fn loss_and_gradient<S: Scalar>(model: &ClassifierModel<S>, example: &TrainingExample<S>) -> (S, Gradient<S>) {
    let probabilities: Vec<S> = model.logits(&example.features).into_iter().map(sigmoid).collect();
    let loss = bce_loss(&probabilities, &example.targets);
    let heads = S::of(probabilities.len() as f64);
    let residuals: Vec<S> = probabilities
        .iter()
        .zip(&example.targets)
        .map(|(p, t)| (*p - if *t { S::one() } else { S::zero() }) / heads)
        .collect();
    let weights = residuals
        .iter()
        .map(|r| example.features.entries().iter().map(|(i, x)| (*i, *r * *x)).collect())
        .collect();
    (
        loss,
        Gradient {
            weights,
            bias: residuals,
        },
    )
}

/// Mean per-example loss.
pub fn mean_loss<'a, S: Scalar>(
    model: &ClassifierModel<S>,
    examples: impl ExactSizeIterator<Item = &'a TrainingExample<S>>,
) -> S {
    let n = examples.len();
    if n == 0 {
        return S::zero();
    }
    let total: S = examples
        .map(|e| {
            let p: Vec<S> = model.logits(&e.features).into_iter().map(sigmoid).collect();
            bce_loss(&p, &e.targets)
        })
        .sum();
    total / S::of(n as f64)
}

/// Case-level validation split: returns (training indices, validation indices).
fn split_by_group<S>(examples: &[TrainingExample<S>], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: Vec<&str> = Vec::new();
    for e in examples {
        if groups.last() != Some(&e.group.as_str()) && !groups.contains(&e.group.as_str()) {
            groups.push(&e.group);
        }
    }
    let mut n_val = (fraction * groups.len() as f64).round() as usize;
    if fraction > 0.0 && groups.len() >= 2 {
        n_val = n_val.clamp(1, groups.len() - 1);
    } else {
        n_val = 0;
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xfeed)));
    let held_out: std::collections::HashSet<&str> = groups[..n_val].iter().copied().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, e) in examples.iter().enumerate() {
        if held_out.contains(e.group.as_str()) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

struct AdamState<S> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    m_bias: Vec<S>,
    v_bias: Vec<S>,
    // scratch gradient, zero outside `touched`
    grad: Vec<Vec<S>>,
    marked: Vec<bool>,
    touched: Vec<u32>,
}

impl<S: Scalar> AdamState<S> {
    fn new(heads: usize, dim: usize) -> Self {
        AdamState {
            m: vec![vec![S::zero(); dim]; heads],
            v: vec![vec![S::zero(); dim]; heads],
            m_bias: vec![S::zero(); heads],
            v_bias: vec![S::zero(); heads],
            grad: vec![vec![S::zero(); dim]; heads],
            marked: vec![false; dim],
            touched: Vec::new(),
        }
    }

    fn step(&mut self, model: &mut ClassifierModel<S>, batch: &[&TrainingExample<S>], t: usize, lr: f64) {
        let heads = model.head_count();
        let scale = S::of(1.0 / (batch.len() * heads) as f64);
        let mut grad_bias = vec![S::zero(); heads];
        for example in batch {
            let logits = model.logits(&example.features);
            for (h, (z, target)) in logits.into_iter().zip(&example.targets).enumerate() {
                let residual = (sigmoid(z) - if *target { S::one() } else { S::zero() }) * scale;
                grad_bias[h] += residual;
                for (i, x) in example.features.entries() {
                    self.grad[h][*i as usize] += residual * *x;
                }
            }
            for (i, _) in example.features.entries() {
                if !self.marked[*i as usize] {
                    self.marked[*i as usize] = true;
                    self.touched.push(*i);
                }
            }
        }

        let (b1, b2) = (S::of(ADAM_BETA1), S::of(ADAM_BETA2));
        let correction1 = S::one() - b1.powi(t as i32);
        let correction2 = S::one() - b2.powi(t as i32);
        let lr = S::of(lr);
        let eps = S::of(ADAM_EPSILON);
        let update = |w: &mut S, m: &mut S, v: &mut S, g: S| {
            *m = b1 * *m + (S::one() - b1) * g;
            *v = b2 * *v + (S::one() - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for h in 0..heads {
            for i in &self.touched {
                let i = *i as usize;
                let g = std::mem::take(&mut self.grad[h][i]);
                update(&mut model.weights[h][i], &mut self.m[h][i], &mut self.v[h][i], g);
            }
            update(
                &mut model.bias[h],
                &mut self.m_bias[h],
                &mut self.v_bias[h],
                grad_bias[h],
            );
        }
        for i in self.touched.drain(..) {
            self.marked[i as usize] = false;
        }
    }
}

/// Trains on pre-featurized examples.
///
/// Holds out `validation_fraction` of the cases (seeded), runs Adam with warmup and decay,
/// evaluates the validation loss after every epoch, stops early per [`EarlyStopping`] and
/// returns the weights of the best epoch. If too few cases exist to hold any out, the
/// training loss is monitored instead.
pub fn fit<S: Scalar>(
    examples: &[TrainingExample<S>],
    mode: Mode,
    dataset: &str,
    config: &TrainConfig,
    init: Option<&ClassifierModel<S>>,
) -> Result<ClassifierModel<S>, ClassifierError> {
    if examples.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    config.validate()?;
    let mut model = match init {
        Some(m) => {
            if m.mode != mode {
                return Err(ClassifierError::InitMismatch(format!(
                    "initial model is {}, training data is {}",
                    m.mode.name(),
                    mode.name()
                )));
            }
            m.validate().map_err(|e| ClassifierError::InitMismatch(e.to_string()))?;
            m.clone()
        }
        None => {
            let mut m = ClassifierModel::zeros(mode, config.hasher);
            m.decision_threshold = S::of(config.decision_threshold);
            m
        }
    };
    let heads = model.head_count();
    if let Some(bad) = examples.iter().find(|e| e.targets.len() != heads) {
        return Err(ClassifierError::TargetWidth {
            expected: heads,
            found: bad.targets.len(),
        });
    }

    let (mut train_idx, val_idx) = split_by_group(examples, config.validation_fraction, config.seed);
    let monitor: Vec<usize> = if val_idx.is_empty() { train_idx.clone() } else { val_idx };
    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let schedule = LearningRateSchedule::new(
        config.learning_rate,
        config.warmup_fraction,
        steps_per_epoch * config.epochs,
    );

    let mut adam = AdamState::new(heads, model.hasher.dim());
    let mut stopper = EarlyStopping::new(config.min_delta, config.patience);
    let mut best = model.clone();
    let mut step = 0;
    let mut epochs_run = 0;
    let mut batch: Vec<&TrainingExample<S>> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64)));
        for chunk in train_idx.chunks(config.batch_size) {
            step += 1;
            batch.clear();
            batch.extend(chunk.iter().map(|i| &examples[*i]));
            adam.step(&mut model, &batch, step, schedule.rate(step));
        }
        epochs_run += 1;
        let loss = mean_loss(&model, monitor.iter().map(|i| &examples[*i])).as_f64();
        match stopper.observe(loss) {
            StopSignal::Improved => best.clone_from(&model),
            StopSignal::Continue => {}
            StopSignal::Stop => break,
        }
    }
    if stopper.best_epoch() == 0 {
        // loss never finite-improved (e.g. NaN); keep the final weights
        best = model;
    }
    best.provenance.push(ProvenanceStage {
        kind: if init.is_some() { "tune" } else { "train" }.into(),
        dataset: dataset.to_string(),
        learning_rate: config.learning_rate,
        examples: examples.len(),
        epochs_run,
        best_epoch: stopper.best_epoch(),
        best_validation_loss: stopper.best(),
    });
    Ok(best)
}
