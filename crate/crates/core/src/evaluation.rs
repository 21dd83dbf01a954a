//! Criterion-level and case-level metrics, macro averaging and paired significance tests.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{Criterion, CriterionSet};
use crate::scalar::{ratio_or_zero, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("gold and predicted labels cover different ids: {0}")]
    IdMismatch(String),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences equal {0}; the t statistic is undefined")]
    DegenerateVariance(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
        self.tn += rhs.tn;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
}

/// Macro average over the seven criteria.
///
/// `f1` is the harmonic mean of the macro precision and recall; `mean_f1` is the
/// arithmetic mean of per-criterion F1 and is kept alongside for comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
    pub mean_f1: S,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriterionMetrics<S> {
    pub per_criterion: BTreeMap<Criterion, Prf<S>>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroAverage<S>,
}

impl<S: Scalar> CriterionMetrics<S> {
    pub fn from_confusion(confusion: &BTreeMap<Criterion, ConfusionCounts>) -> CriterionMetrics<S> {
        let per_criterion: BTreeMap<Criterion, Prf<S>> = Criterion::ALL
            .into_iter()
            .map(|c| (c, prf(&confusion.get(&c).copied().unwrap_or_default())))
            .collect();
        let rows: Vec<Prf<S>> = per_criterion.values().copied().collect();
        CriterionMetrics {
            per_criterion,
            macro_avg: macro_average(&rows),
        }
    }

    /// Per-criterion values of one metric, in `A1..B4` order.
    pub fn column(&self, metric: PrfMetric) -> Vec<S> {
        Criterion::ALL
            .iter()
            .map(|c| {
                let row = self.per_criterion.get(c).copied().unwrap_or_default();
                metric.pick(&row)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrfMetric {
    Precision,
    Recall,
    F1,
}

impl PrfMetric {
    pub const ALL: [PrfMetric; 3] = [PrfMetric::Precision, PrfMetric::Recall, PrfMetric::F1];

    pub fn pick<S: Copy>(self, row: &Prf<S>) -> S {
        match self {
            PrfMetric::Precision => row.precision,
            PrfMetric::Recall => row.recall,
            PrfMetric::F1 => row.f1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrfMetric::Precision => "precision",
            PrfMetric::Recall => "recall",
            PrfMetric::F1 => "f1",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics<S> {
    pub accuracy: S,
    pub sensitivity: S,
    pub specificity: S,
    pub confusion: ConfusionCounts,
}

impl<S: Scalar> CaseMetrics<S> {
    pub fn from_confusion(c: ConfusionCounts) -> CaseMetrics<S> {
        CaseMetrics {
            accuracy: ratio_or_zero(c.tp + c.tn, c.total()),
            sensitivity: ratio_or_zero(c.tp, c.tp + c.fn_),
            specificity: ratio_or_zero(c.tn, c.tn + c.fp),
            confusion: c,
        }
    }
}

fn check_same_keys<K: Ord + Debug, A, B>(gold: &BTreeMap<K, A>, pred: &BTreeMap<K, B>) -> Result<(), EvaluationError> {
    if gold.len() != pred.len() || gold.keys().zip(pred.keys()).any(|(a, b)| a != b) {
        let missing = gold.keys().find(|k| !pred.contains_key(*k));
        let extra = pred.keys().find(|k| !gold.contains_key(*k));
        return Err(EvaluationError::IdMismatch(format!(
            "first missing prediction: {missing:?}; first unexpected prediction: {extra:?}"
        )));
    }
    Ok(())
}

/// Per-criterion confusion counts over sentences keyed by any id type.
pub fn criterion_confusion<K: Ord + Debug>(
    gold: &BTreeMap<K, CriterionSet>,
    pred: &BTreeMap<K, CriterionSet>,
) -> Result<BTreeMap<Criterion, ConfusionCounts>, EvaluationError> {
    check_same_keys(gold, pred)?;
    let mut out: BTreeMap<Criterion, ConfusionCounts> = Criterion::ALL
        .iter()
        .map(|c| (*c, ConfusionCounts::default()))
        .collect();
    for (g, p) in gold.values().zip(pred.values()) {
        for c in Criterion::ALL {
            out.get_mut(&c)
                .expect("all criteria present")
                .record(g.contains(c), p.contains(c));
        }
    }
    Ok(out)
}

/// Precision, recall and F1; every `0/0` is taken as zero.
pub fn prf<S: Scalar>(c: &ConfusionCounts) -> Prf<S> {
    let precision: S = ratio_or_zero(c.tp, c.tp + c.fp);
    let recall: S = ratio_or_zero(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

fn harmonic<S: Scalar>(p: S, r: S) -> S {
    let sum = p + r;
    if sum == S::zero() {
        S::zero()
    } else {
        S::of(2.0) * p * r / sum
    }
}

fn mean<S: Scalar>(values: impl ExactSizeIterator<Item = S>) -> S {
    let n = values.len();
    if n == 0 {
        return S::zero();
    }
    values.sum::<S>() / S::of(n as f64)
}

pub fn macro_average<S: Scalar>(rows: &[Prf<S>]) -> MacroAverage<S> {
    let precision = mean(rows.iter().map(|r| r.precision));
    let recall = mean(rows.iter().map(|r| r.recall));
    MacroAverage {
        precision,
        recall,
        f1: harmonic(precision, recall),
        mean_f1: mean(rows.iter().map(|r| r.f1)),
    }
}

/// Accuracy, sensitivity (ASD positive) and specificity over cases keyed by id.
pub fn case_metrics<K: Ord + Debug, S: Scalar>(
    gold: &BTreeMap<K, bool>,
    pred: &BTreeMap<K, bool>,
) -> Result<CaseMetrics<S>, EvaluationError> {
    check_same_keys(gold, pred)?;
    let mut c = ConfusionCounts::default();
    for (g, p) in gold.values().zip(pred.values()) {
        c.record(*g, *p);
    }
    Ok(CaseMetrics::from_confusion(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t: f64,
    pub df: u64,
    pub p_two_tailed: f64,
    pub alpha_adjusted: f64,
}

impl SignificanceResult {
    pub fn significant(&self) -> bool {
        self.p_two_tailed < self.alpha_adjusted
    }
}

/// Two-tailed paired-sample t-test of `a - b`. `alpha_adjusted` is left at 0.05; use
/// [`SignificanceResult::with_alpha`] to attach a corrected level.
pub fn paired_t_test<S: Scalar>(a: &[S], b: &[S]) -> Result<SignificanceResult, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvaluationError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.as_f64() - y.as_f64()).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = (n - 1) as u64;
    // differences that agree to rounding noise count as constant
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if sd <= 1e-12 * scale {
        if mean.abs() <= 1e-12 * scale {
            return Ok(SignificanceResult {
                t: 0.0,
                df,
                p_two_tailed: 1.0,
                alpha_adjusted: 0.05,
            });
        }
        return Err(EvaluationError::DegenerateVariance(mean));
    }
    let t = mean / (sd / nf.sqrt());
    Ok(SignificanceResult {
        t,
        df,
        p_two_tailed: student_t_two_tailed(t, df),
        alpha_adjusted: 0.05,
    })
}

impl SignificanceResult {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_adjusted = alpha;
        self
    }
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: u64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1 is a valid Student-t");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn bonferroni(alpha: f64, tests: u32) -> f64 {
    alpha / f64::from(tests.max(1))
}
