//! Criterion-level sentence labelling for ASD case review: corpora, a synthetic corpus
//! generator, a hashed linear multi-label classifier, case aggregation, metrics and the
//! cross-validation harness.

pub mod aggregation;
pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod harness;
pub mod hashing;
pub mod review;
pub mod scalar;
pub mod syngen;

pub use aggregation::{CaseDecision, Threshold};
pub use classifier::{Mode, Predictor, TrainConfig};
pub use corpus::{Case, Corpus, Criterion, CriterionSet, Sentence};

/// Double-precision classifier used by the CLI and the harness by default.
pub type Model = classifier::ClassifierModel<f64>;
pub type Model32 = classifier::ClassifierModel<f32>;
pub type Learner = classifier::LinearLearner<f64>;
pub type Learner32 = classifier::LinearLearner<f32>;
pub type CriterionMetrics = evaluation::CriterionMetrics<f64>;
pub type CaseMetrics = evaluation::CaseMetrics<f64>;
