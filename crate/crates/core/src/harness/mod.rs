//! Cross-validation, sequential tuning and experiment orchestration.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aggregation::AggregationError;
use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;
use crate::evaluation::EvaluationError;

mod cv;
mod experiment;
pub mod folds;
mod report;

pub use cv::{
    evaluate, run_cv, tune_run, AverageMetrics, CvRun, CvSettings, CvSummary, EvalSettings, Evaluation, FoldResult,
    SelectionMetric, ThresholdMetrics,
};
pub use experiment::{
    corpus_digest, run_experiment, ComparisonFold, Environment, ExperimentReport, ExperimentSpec, GridCell, Sequence,
    SignificanceEntry, Stage, SweepRow,
};
pub use folds::{make_folds, FoldPlan};
pub use report::{emit_report, read_report, ReportFormat, REPORT_FILE};

/// Environment variable capping the number of folds trained at once.
pub const THREADS_ENV: &str = "CRITERION_LAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("{cases} cases cannot fill {k} folds")]
    TooFewCases { cases: usize, k: usize },
    #[error("stage {stage}, fold {fold}: {source}")]
    Training {
        stage: String,
        fold: usize,
        #[source]
        source: ClassifierError,
    },
    #[error("stage {stage}, fold {fold}: {overlap} training cases also appear in the test fold")]
    Leakage { stage: String, fold: usize, overlap: usize },
    #[error("comparison fold {0} changed between stages")]
    FrozenFoldChanged(String),
    #[error(transparent)]
    Model(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}
