//! Sentence classification.
//!
//! The built-in model is a multi-label linear classifier over signed, hashed unigram and
//! bigram features with one sigmoid head per label, trained on binary cross-entropy.
//! Transparent models carry seven heads (one per criterion); black-box models carry a
//! single ASD head. External models attach through [`adapter`].

pub mod adapter;
mod persist;
mod train;

use std::marker::PhantomData;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Criterion, CriterionSet, MAX_TOKENS};
use crate::hashing::fnv1a64;
use crate::scalar::{sigmoid, Scalar};

pub use persist::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use train::{
    fit, loss_and_gradient, mean_loss, EarlyStopping, Gradient, LearningRateSchedule, Optimizer, StopSignal,
    TrainConfig, TrainingExample, TUNING_RATE_DIVISOR,
};

/// Clamp applied to probabilities before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

pub const ASD_LABEL: &str = "ASD";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data is empty")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("initial model does not match: {0}")]
    InitMismatch(String),
    #[error("example has {found} targets, model has {expected} labels")]
    TargetWidth { expected: usize, found: usize },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("adapter handshake failed: {0}")]
    Handshake(String),
    #[error("adapter protocol violation: {0}")]
    Protocol(String),
    #[error("adapter does not support {0:?}")]
    Capability(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Seven criterion heads.
    Transparent,
    /// One ASD head.
    Blackbox,
}

impl Mode {
    pub fn labels(self) -> Vec<String> {
        match self {
            Mode::Transparent => Criterion::ALL.iter().map(|c| c.code().to_string()).collect(),
            Mode::Blackbox => vec![ASD_LABEL.to_string()],
        }
    }

    pub fn head_count(self) -> usize {
        match self {
            Mode::Transparent => Criterion::ALL.len(),
            Mode::Blackbox => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Transparent => "transparent",
            Mode::Blackbox => "blackbox",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transparent" => Ok(Mode::Transparent),
            "blackbox" => Ok(Mode::Blackbox),
            other => Err(format!("unknown mode {other:?} (expected transparent or blackbox)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HasherConfig {
    /// Feature space has `2^dim_bits` slots.
    pub dim_bits: u32,
    pub seed: u64,
}

impl Default for HasherConfig {
    fn default() -> Self {
        HasherConfig { dim_bits: 18, seed: 0 }
    }
}

impl HasherConfig {
    pub fn dim(&self) -> usize {
        1usize << self.dim_bits
    }

    fn slot(&self, key: &[u8]) -> (u32, bool) {
        let h = fnv1a64(self.seed, key);
        let index = (h & (self.dim() as u64 - 1)) as u32;
        (index, h >> 63 == 1)
    }
}

/// Sparse feature vector: strictly increasing indices, no zero entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector<S> {
    entries: Vec<(u32, S)>,
}

impl<S: Scalar> FeatureVector<S> {
    pub fn entries(&self) -> &[(u32, S)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[S]) -> S {
        self.entries.iter().map(|(i, v)| dense[*i as usize] * *v).sum()
    }
}

/// Hashes unigrams and adjacent-token bigrams into a signed sparse vector with unit L2 norm.
pub fn featurize<S: Scalar>(tokens: &[String], hasher: &HasherConfig) -> FeatureVector<S> {
    let mut raw: Vec<(u32, S)> = Vec::with_capacity(tokens.len() * 2);
    let mut key = Vec::with_capacity(64);
    let push = |key: &[u8], raw: &mut Vec<(u32, S)>| {
        let (index, negative) = hasher.slot(key);
        raw.push((index, if negative { -S::one() } else { S::one() }));
    };
    for (i, token) in tokens.iter().enumerate() {
        key.clear();
        key.extend_from_slice(b"u\x1f");
        key.extend_from_slice(token.as_bytes());
        push(&key, &mut raw);
        if i > 0 {
            key.clear();
            key.extend_from_slice(b"b\x1f");
            key.extend_from_slice(tokens[i - 1].as_bytes());
            key.push(0x1f);
            key.extend_from_slice(token.as_bytes());
            push(&key, &mut raw);
        }
    }
    raw.sort_unstable_by_key(|(i, _)| *i);
    let mut entries: Vec<(u32, S)> = Vec::with_capacity(raw.len());
    for (i, v) in raw {
        match entries.last_mut() {
            Some((last, acc)) if *last == i => *acc += v,
            _ => entries.push((i, v)),
        }
    }
    entries.retain(|(_, v)| *v != S::zero());
    let norm = entries.iter().map(|(_, v)| *v * *v).sum::<S>().sqrt();
    if norm > S::zero() {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    FeatureVector { entries }
}

/// Tokenizes with the 512-token budget and featurizes.
pub fn featurize_text<S: Scalar>(text: &str, hasher: &HasherConfig) -> FeatureVector<S> {
    featurize(&tokenize(text, MAX_TOKENS), hasher)
}

/// Training lineage entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceStage {
    /// `train` or `tune`.
    pub kind: String,
    pub dataset: String,
    pub learning_rate: f64,
    pub examples: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores<S> {
    pub probabilities: Vec<S>,
    pub threshold: S,
}

impl<S: Scalar> LabelScores<S> {
    pub fn assigned(&self) -> Vec<bool> {
        self.probabilities.iter().map(|p| *p >= self.threshold).collect()
    }

    /// Assigned criteria of a transparent model.
    pub fn criteria(&self) -> CriterionSet {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p >= self.threshold)
            .filter_map(|(i, _)| Criterion::from_index(i))
            .collect()
    }
}

/// Binary cross-entropy averaged over labels, with probabilities clamped to `[ε, 1-ε]`.
pub fn bce_loss<S: Scalar>(probabilities: &[S], targets: &[bool]) -> S {
    debug_assert_eq!(probabilities.len(), targets.len());
    if probabilities.is_empty() {
        return S::zero();
    }
    let eps = S::of(BCE_EPSILON);
    let total: S = probabilities
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let p = p.max(eps).min(S::one() - eps);
            if *t {
                -p.ln()
            } else {
                -(S::one() - p).ln()
            }
        })
        .sum();
    total / S::of(probabilities.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<S> {
    pub mode: Mode,
    pub labels: Vec<String>,
    pub hasher: HasherConfig,
    /// One dense vector of length `hasher.dim()` per label.
    pub weights: Vec<Vec<S>>,
    pub bias: Vec<S>,
    pub decision_threshold: S,
    pub provenance: Vec<ProvenanceStage>,
}

impl<S: Scalar> ClassifierModel<S> {
    pub fn zeros(mode: Mode, hasher: HasherConfig) -> ClassifierModel<S> {
        let heads = mode.head_count();
        ClassifierModel {
            mode,
            labels: mode.labels(),
            hasher,
            weights: vec![vec![S::zero(); hasher.dim()]; heads],
            bias: vec![S::zero(); heads],
            decision_threshold: S::of(0.5),
            provenance: Vec::new(),
        }
    }

    pub fn head_count(&self) -> usize {
        self.labels.len()
    }

    pub fn logits(&self, features: &FeatureVector<S>) -> Vec<S> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| features.dot(w) + *b)
            .collect()
    }

    pub fn score_features(&self, features: &FeatureVector<S>) -> LabelScores<S> {
        LabelScores {
            probabilities: self.logits(features).into_iter().map(sigmoid).collect(),
            threshold: self.decision_threshold,
        }
    }

    /// Tokenize (512-token budget), featurize, and score every head.
    pub fn predict(&self, text: &str) -> LabelScores<S> {
        self.score_features(&featurize_text(text, &self.hasher))
    }

    /// Checks the invariants a loaded or hand-built model must satisfy.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.labels != self.mode.labels() {
            return Err(ClassifierError::CorruptModel(format!(
                "labels {:?} do not match {} mode",
                self.labels,
                self.mode.name()
            )));
        }
        if self.weights.len() != self.labels.len() || self.bias.len() != self.labels.len() {
            return Err(ClassifierError::CorruptModel("head count mismatch".into()));
        }
        if self.weights.iter().any(|w| w.len() != self.hasher.dim()) {
            return Err(ClassifierError::CorruptModel("weight vector length mismatch".into()));
        }
        let finite = |v: &S| v.is_finite();
        if !self.weights.iter().flatten().all(finite) || !self.bias.iter().all(finite) {
            return Err(ClassifierError::CorruptModel("non-finite weight".into()));
        }
        Ok(())
    }
}

/// A trained sentence classifier the harness can evaluate, built in or external.
pub trait Predictor {
    fn mode(&self) -> Mode;

    /// Per-label probabilities in label order.
    fn probabilities(&self, text: &str) -> Result<Vec<f64>, ClassifierError>;

    fn decision_threshold(&self) -> f64;

    fn assigned(&self, text: &str) -> Result<Vec<bool>, ClassifierError> {
        let threshold = self.decision_threshold();
        Ok(self.probabilities(text)?.into_iter().map(|p| p >= threshold).collect())
    }

    fn provenance(&self) -> Vec<ProvenanceStage>;

    fn save(&self, path: &Path) -> Result<(), ClassifierError>;
}

impl<S: Scalar> Predictor for ClassifierModel<S> {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn probabilities(&self, text: &str) -> Result<Vec<f64>, ClassifierError> {
        Ok(self
            .predict(text)
            .probabilities
            .into_iter()
            .map(Scalar::as_f64)
            .collect())
    }

    fn decision_threshold(&self) -> f64 {
        self.decision_threshold.as_f64()
    }

    fn assigned(&self, text: &str) -> Result<Vec<bool>, ClassifierError> {
        Ok(self.predict(text).assigned())
    }

    fn provenance(&self) -> Vec<ProvenanceStage> {
        self.provenance.clone()
    }

    fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        save_model(self, path)
    }
}

/// One training sentence: its case (used for the validation split), text and per-label targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledText<'a> {
    pub case_id: &'a str,
    pub text: &'a str,
    pub targets: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    pub mode: Mode,
    /// Dataset name recorded in the provenance.
    pub dataset: String,
    pub examples: Vec<LabeledText<'a>>,
}

/// Something that trains a [`Predictor`], optionally continuing from an earlier one.
pub trait Learner: Sync {
    type Model: Predictor + Send + Sync;

    fn fit(
        &self,
        data: &TrainingSet<'_>,
        config: &TrainConfig,
        init: Option<&Self::Model>,
    ) -> Result<Self::Model, ClassifierError>;

    fn load(&self, path: &Path) -> Result<Self::Model, ClassifierError>;
}

/// Learner for the built-in linear model.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearLearner<S>(PhantomData<S>);

impl<S> LinearLearner<S> {
    pub fn new() -> Self {
        LinearLearner(PhantomData)
    }
}

impl<S: Scalar> Learner for LinearLearner<S> {
    type Model = ClassifierModel<S>;

    fn fit(
        &self,
        data: &TrainingSet<'_>,
        config: &TrainConfig,
        init: Option<&ClassifierModel<S>>,
    ) -> Result<ClassifierModel<S>, ClassifierError> {
        train(data, config, init)
    }

    fn load(&self, path: &Path) -> Result<ClassifierModel<S>, ClassifierError> {
        load_model(path)
    }
}

/// Trains a built-in model, featurizing every sentence with the config's hasher.
///
/// With `init` the model continues from a copy of `init` (tuning); its mode and hasher must
/// match. Without it, training starts from zero weights.
pub fn train<S: Scalar>(
    data: &TrainingSet<'_>,
    config: &TrainConfig,
    init: Option<&ClassifierModel<S>>,
) -> Result<ClassifierModel<S>, ClassifierError> {
    if data.examples.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    config.validate()?;
    let hasher = init.map_or(config.hasher, |m| m.hasher);
    let examples: Vec<TrainingExample<S>> = data
        .examples
        .iter()
        .map(|e| TrainingExample {
            group: e.case_id.to_string(),
            features: featurize_text(e.text, &hasher),
            targets: e.targets.clone(),
        })
        .collect();
    fit(&examples, data.mode, &data.dataset, config, init)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn featurize_basics() {
        let h = HasherConfig::default();
        assert!(featurize::<f64>(&[], &h).is_zero());
        let a = featurize::<f64>(&toks(&["a", "b"]), &h);
        assert_eq!(a, featurize::<f64>(&toks(&["a", "b"]), &h));
        let b = featurize::<f64>(&toks(&["b", "a"]), &h);
        assert_ne!(a, b);
        // same unigrams; only the bigram slot differs
        let bigram = |first: &str, second: &str| h.slot(format!("b\x1f{first}\x1f{second}").as_bytes()).0;
        let idx_a: Vec<u32> = a.entries().iter().map(|e| e.0).collect();
        let idx_b: Vec<u32> = b.entries().iter().map(|e| e.0).collect();
        assert!(idx_a.contains(&bigram("a", "b")));
        assert!(idx_b.contains(&bigram("b", "a")));
        assert!(a.entries().windows(2).all(|w| w[0].0 < w[1].0));
        assert!(a.entries().iter().all(|(i, _)| (*i as usize) < h.dim()));
        let norm: f64 = a.entries().iter().map(|(_, v)| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5f64], &[true]) - std::f64::consts::LN_2).abs() < 1e-12);
        let near_zero = bce_loss(&[BCE_EPSILON, 1.0 - BCE_EPSILON], &[false, true]);
        assert!(near_zero < 1e-6);
        let expected = (-(0.8f64).ln() - (0.7f64).ln()) / 2.0;
        assert!((bce_loss(&[0.8f64, 0.3], &[true, false]) - expected).abs() < 1e-12);
        assert!((expected - 0.289_909_247_626_471).abs() < 1e-12);
        // clamping keeps the loss finite
        assert!(bce_loss(&[0.0f64, 1.0], &[true, false]).is_finite());
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = ClassifierModel::<f64>::zeros(Mode::Transparent, HasherConfig { dim_bits: 8, seed: 1 });
        let scores = m.predict("He flaps his hands.");
        assert_eq!(scores.probabilities, vec![0.5; 7]);
        assert_eq!(scores.criteria(), CriterionSet::FULL);
        let bb = ClassifierModel::<f32>::zeros(Mode::Blackbox, HasherConfig::default());
        assert_eq!(bb.predict("x").probabilities, vec![0.5f32]);
    }

    #[test]
    fn threshold_assigns_labels() {
        let scores = LabelScores {
            probabilities: vec![0.9, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1],
            threshold: 0.5,
        };
        assert_eq!(scores.criteria(), CriterionSet::EMPTY.with(Criterion::A1));
        assert_eq!(scores.assigned()[..2], [true, false]);
    }
}
