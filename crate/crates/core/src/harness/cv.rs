use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan};
use super::{thread_pool, write_file, write_json, HarnessError};
use crate::aggregation::{
    blackbox_decision, blackbox_fraction, criteria_present, transparent_decision, CriterionEvidence, Threshold,
};
use crate::classifier::{LabeledText, Learner, Mode, Predictor, ProvenanceStage, TrainConfig, TrainingSet};
use crate::corpus::{Case, Corpus, Criterion, CriterionSet};
use crate::evaluation::{criterion_confusion, CaseMetrics, ConfusionCounts, CriterionMetrics, Prf};
use crate::hashing::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    MacroF1,
    CaseAccuracy,
}

impl SelectionMetric {
    pub fn default_for(mode: Mode) -> SelectionMetric {
        match mode {
            Mode::Transparent => SelectionMetric::MacroF1,
            Mode::Blackbox => SelectionMetric::CaseAccuracy,
        }
    }
}

/// How held-out cases are turned into decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Black-box thresholds to sweep.
    pub thresholds: Vec<Threshold>,
    /// Black-box threshold behind the headline case metrics and model selection.
    pub selection_threshold: Threshold,
    /// Sentences needed before a criterion counts as present.
    pub min_evidence: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            thresholds: Threshold::defaults(),
            selection_threshold: Threshold::from_decimal(0.5).expect("valid threshold"),
            min_evidence: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: Threshold,
    pub case: CaseMetrics<f64>,
}

/// Metrics of one model on one set of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cases: usize,
    pub sentences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion_confusion: Option<BTreeMap<Criterion, ConfusionCounts>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionMetrics<f64>>,
    /// Transparent mode: the DSM rule. Black-box mode: the selection threshold.
    pub case: CaseMetrics<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<ThresholdMetrics>,
}

impl Evaluation {
    pub fn score(&self, metric: SelectionMetric) -> f64 {
        match metric {
            SelectionMetric::MacroF1 => self.criterion.as_ref().map_or(0.0, |m| m.macro_avg.f1),
            SelectionMetric::CaseAccuracy => self.case.accuracy,
        }
    }
}

/// Scores every sentence of `cases` and derives sentence and case metrics.
pub fn evaluate<P: Predictor + Sync + ?Sized>(
    model: &P,
    cases: &[&Case],
    settings: &EvalSettings,
) -> Result<Evaluation, HarnessError> {
    let threshold = model.decision_threshold();
    let assigned: Vec<Vec<Vec<bool>>> = cases
        .par_iter()
        .map(|case| {
            case.sentences
                .iter()
                .map(|s| {
                    Ok(model
                        .probabilities(&s.text)?
                        .into_iter()
                        .map(|p| p >= threshold)
                        .collect())
                })
                .collect::<Result<Vec<Vec<bool>>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    let sentences = cases.iter().map(|c| c.sentences.len()).sum();
    let gold_cases: BTreeMap<(&str, &str), bool> = cases
        .iter()
        .map(|c| ((c.dataset_id.as_str(), c.case_id.as_str()), c.gold_case_asd))
        .collect();
    let case_metrics = |verdicts: &[bool]| -> CaseMetrics<f64> {
        let mut confusion = ConfusionCounts::default();
        for (case, verdict) in cases.iter().zip(verdicts) {
            confusion.record(gold_cases[&(case.dataset_id.as_str(), case.case_id.as_str())], *verdict);
        }
        CaseMetrics::from_confusion(confusion)
    };

    match model.mode() {
        Mode::Transparent => {
            let mut gold = BTreeMap::new();
            let mut pred = BTreeMap::new();
            let mut verdicts = Vec::with_capacity(cases.len());
            for (case, per_sentence) in cases.iter().zip(&assigned) {
                let mut evidence = CriterionEvidence::default();
                for (s, flags) in case.sentences.iter().zip(per_sentence) {
                    let set: CriterionSet = flags
                        .iter()
                        .enumerate()
                        .filter(|(_, on)| **on)
                        .filter_map(|(i, _)| Criterion::from_index(i))
                        .collect();
                    for c in set.iter() {
                        evidence.add(c, s.sentence_id.as_str(), 1.0);
                    }
                    let key = (case.dataset_id.as_str(), case.case_id.as_str(), s.sentence_id.as_str());
                    gold.insert(key, s.gold_criteria);
                    pred.insert(key, set);
                }
                verdicts.push(transparent_decision(criteria_present(&evidence, settings.min_evidence)).verdict);
            }
            let confusion = criterion_confusion(&gold, &pred)?;
            Ok(Evaluation {
                cases: cases.len(),
                sentences,
                criterion: Some(CriterionMetrics::from_confusion(&confusion)),
                criterion_confusion: Some(confusion),
                case: case_metrics(&verdicts),
                thresholds: Vec::new(),
            })
        }
        Mode::Blackbox => {
            let fractions = assigned
                .iter()
                .map(|per_sentence| {
                    let lines: Vec<bool> = per_sentence.iter().map(|f| f[0]).collect();
                    blackbox_fraction(&lines)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let at = |t: Threshold| -> CaseMetrics<f64> {
                let verdicts: Vec<bool> = fractions.iter().map(|f| blackbox_decision(*f, t).verdict).collect();
                case_metrics(&verdicts)
            };
            Ok(Evaluation {
                cases: cases.len(),
                sentences,
                criterion_confusion: None,
                criterion: None,
                case: at(settings.selection_threshold),
                thresholds: settings
                    .thresholds
                    .iter()
                    .map(|t| ThresholdMetrics {
                        threshold: *t,
                        case: at(*t),
                    })
                    .collect(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Model file relative to the artifact directory, when persisted.
    pub model: Option<String>,
    pub train_cases: usize,
    pub train_sentences: usize,
    /// Training cases that are also in the test fold; nonzero aborts the run.
    pub leakage: usize,
    pub evaluation: Evaluation,
    pub selection_score: f64,
    pub provenance: Vec<ProvenanceStage>,
}

/// Fold means, or pooled counts when `pooled` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub pooled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionMetrics<f64>>,
    pub case: CaseMetrics<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<ThresholdMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn average_case<'a>(items: impl Iterator<Item = &'a CaseMetrics<f64>> + Clone, pooled: bool) -> CaseMetrics<f64> {
    let mut confusion = ConfusionCounts::default();
    for m in items.clone() {
        confusion += m.confusion;
    }
    if pooled {
        return CaseMetrics::from_confusion(confusion);
    }
    CaseMetrics {
        accuracy: mean(items.clone().map(|m| m.accuracy)),
        sensitivity: mean(items.clone().map(|m| m.sensitivity)),
        specificity: mean(items.map(|m| m.specificity)),
        confusion,
    }
}

impl AverageMetrics {
    /// Per-criterion and case metrics are averaged over folds; the macro row is then derived
    /// from the averaged criterion rows. Confusion counts are always summed.
    pub fn from_folds(folds: &[FoldResult], pooled: bool) -> AverageMetrics {
        let evals: Vec<&Evaluation> = folds.iter().map(|f| &f.evaluation).collect();
        let criterion = if evals.iter().all(|e| e.criterion.is_some()) && !evals.is_empty() {
            if pooled {
                let mut total: BTreeMap<Criterion, ConfusionCounts> = BTreeMap::new();
                for e in &evals {
                    for (c, counts) in e.criterion_confusion.iter().flatten() {
                        *total.entry(*c).or_default() += *counts;
                    }
                }
                Some(CriterionMetrics::from_confusion(&total))
            } else {
                let rows: BTreeMap<Criterion, Prf<f64>> = Criterion::ALL
                    .into_iter()
                    .map(|c| {
                        let pick = |f: fn(&Prf<f64>) -> f64| {
                            mean(evals.iter().map(|e| {
                                e.criterion
                                    .as_ref()
                                    .expect("checked")
                                    .per_criterion
                                    .get(&c)
                                    .map_or(0.0, f)
                            }))
                        };
                        (
                            c,
                            Prf {
                                precision: pick(|r| r.precision),
                                recall: pick(|r| r.recall),
                                f1: pick(|r| r.f1),
                            },
                        )
                    })
                    .collect();
                let list: Vec<Prf<f64>> = rows.values().copied().collect();
                Some(CriterionMetrics {
                    per_criterion: rows,
                    macro_avg: crate::evaluation::macro_average(&list),
                })
            }
        } else {
            None
        };
        let thresholds = evals
            .first()
            .map(|first| {
                first
                    .thresholds
                    .iter()
                    .enumerate()
                    .map(|(i, t)| ThresholdMetrics {
                        threshold: t.threshold,
                        case: average_case(evals.iter().map(|e| &e.thresholds[i].case), pooled),
                    })
                    .collect()
            })
            .unwrap_or_default();
        AverageMetrics {
            pooled,
            criterion,
            case: average_case(evals.iter().map(|e| &e.case), pooled),
            thresholds,
        }
    }
}

/// Serializable record of one cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub stage: String,
    pub dataset: String,
    pub mode: Mode,
    pub config: TrainConfig,
    /// Provenance of the starting model for tuning runs.
    pub init: Option<Vec<ProvenanceStage>>,
    pub selection: SelectionMetric,
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub average: AverageMetrics,
    pub best_fold: usize,
    pub best_model: Option<String>,
}

impl CvSummary {
    pub fn best(&self) -> &FoldResult {
        &self.folds[self.best_fold]
    }
}

/// A finished run with its trained models, in fold order.
#[derive(Debug)]
pub struct CvRun<M> {
    pub summary: CvSummary,
    pub models: Vec<M>,
}

impl<M> CvRun<M> {
    pub fn best_model(&self) -> &M {
        &self.models[self.summary.best_fold]
    }

    pub fn into_best_model(mut self) -> M {
        self.models.swap_remove(self.summary.best_fold)
    }
}

#[derive(Debug, Clone)]
pub struct CvSettings {
    /// Stage name; also names the artifact files.
    pub stage: String,
    pub k: usize,
    pub seed: u64,
    pub selection: SelectionMetric,
    pub pooled: bool,
    pub eval: EvalSettings,
    /// Root of the artifact directory, or `None` to keep everything in memory.
    pub artifacts: Option<PathBuf>,
}

impl CvSettings {
    pub fn new(stage: impl Into<String>, mode: Mode, seed: u64) -> CvSettings {
        CvSettings {
            stage: stage.into(),
            k: 10,
            seed,
            selection: SelectionMetric::default_for(mode),
            pooled: false,
            eval: EvalSettings::default(),
            artifacts: None,
        }
    }
}

/// Trains `k` models, each on `k - 1` folds, and evaluates each on its held-out fold.
pub fn run_cv<L: Learner>(
    learner: &L,
    corpus: &Corpus,
    mode: Mode,
    config: &TrainConfig,
    settings: &CvSettings,
) -> Result<CvRun<L::Model>, HarnessError> {
    let plan = make_folds(corpus, settings.k, settings.seed)?;
    cross_validate(learner, corpus, mode, config, None, plan, settings)
}

/// [`run_cv`] where every fold starts from `init`. Pass a config with the tuning rate,
/// e.g. [`TrainConfig::tuning`].
pub fn tune_run<L: Learner>(
    learner: &L,
    init: &L::Model,
    corpus: &Corpus,
    config: &TrainConfig,
    settings: &CvSettings,
) -> Result<CvRun<L::Model>, HarnessError> {
    let plan = make_folds(corpus, settings.k, settings.seed)?;
    cross_validate(learner, corpus, init.mode(), config, Some(init), plan, settings)
}

pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn training_targets(mode: Mode, case: &Case, sentence: &crate::corpus::Sentence) -> Vec<bool> {
    match mode {
        Mode::Transparent => Criterion::ALL
            .iter()
            .map(|c| sentence.gold_criteria.contains(*c))
            .collect(),
        // Lines without their own label inherit the case label.
        Mode::Blackbox => vec![sentence.gold_line_asd.unwrap_or(case.gold_case_asd)],
    }
}

fn cross_validate<L: Learner>(
    learner: &L,
    corpus: &Corpus,
    mode: Mode,
    config: &TrainConfig,
    init: Option<&L::Model>,
    plan: FoldPlan,
    settings: &CvSettings,
) -> Result<CvRun<L::Model>, HarnessError> {
    config.validate()?;
    let stage_slug = slug(&settings.stage);
    let model_dir = settings
        .artifacts
        .as_ref()
        .map(|root| root.join("models").join(&stage_slug));
    if let Some(root) = &settings.artifacts {
        write_json(&root.join("folds").join(format!("{stage_slug}.json")), &plan)?;
    }
    if let Some(dir) = &model_dir {
        std::fs::create_dir_all(dir).map_err(super::io_err(dir))?;
    }

    let run_fold = |fold: usize| -> Result<(FoldResult, L::Model), HarnessError> {
        let test_ids = plan.test_cases(fold);
        let (test, train): (Vec<&Case>, Vec<&Case>) =
            corpus.cases.iter().partition(|c| test_ids.contains(c.case_id.as_str()));
        let train_ids: BTreeSet<&str> = train.iter().map(|c| c.case_id.as_str()).collect();
        let leakage = test.iter().filter(|c| train_ids.contains(c.case_id.as_str())).count();
        if leakage > 0 {
            return Err(HarnessError::Leakage {
                stage: settings.stage.clone(),
                fold,
                overlap: leakage,
            });
        }
        let examples: Vec<LabeledText<'_>> = train
            .iter()
            .flat_map(|case| {
                case.sentences.iter().map(move |s| LabeledText {
                    case_id: &case.case_id,
                    text: &s.text,
                    targets: training_targets(mode, case, s),
                })
            })
            .collect();
        let data = TrainingSet {
            mode,
            dataset: corpus.dataset_id.clone(),
            examples,
        };
        let fold_config = TrainConfig {
            seed: derive_seed(config.seed, fold as u64),
            ..config.clone()
        };
        let training_error = |source| HarnessError::Training {
            stage: settings.stage.clone(),
            fold,
            source,
        };
        let model = learner.fit(&data, &fold_config, init).map_err(training_error)?;
        let evaluation = evaluate(&model, &test, &settings.eval)?;
        let model_ref = match &model_dir {
            Some(dir) => {
                let name = format!("fold-{fold:02}.model");
                model.save(&dir.join(&name)).map_err(training_error)?;
                Some(format!("models/{stage_slug}/{name}"))
            }
            None => None,
        };
        let result = FoldResult {
            fold,
            model: model_ref,
            train_cases: train.len(),
            train_sentences: data.examples.len(),
            leakage,
            selection_score: evaluation.score(settings.selection),
            evaluation,
            provenance: model.provenance(),
        };
        Ok((result, model))
    };

    let outcomes: Vec<Result<(FoldResult, L::Model), HarnessError>> =
        thread_pool().install(|| (0..plan.k).into_par_iter().map(run_fold).collect());
    let mut folds = Vec::with_capacity(plan.k);
    let mut models = Vec::with_capacity(plan.k);
    for outcome in outcomes {
        let (result, model) = outcome?;
        folds.push(result);
        models.push(model);
    }

    let mut best_fold = 0;
    for (i, f) in folds.iter().enumerate() {
        if f.selection_score > folds[best_fold].selection_score {
            best_fold = i;
        }
    }
    let average = AverageMetrics::from_folds(&folds, settings.pooled);
    let summary = CvSummary {
        stage: settings.stage.clone(),
        dataset: corpus.dataset_id.clone(),
        mode,
        config: config.clone(),
        init: init.map(|m| m.provenance()),
        selection: settings.selection,
        best_model: folds[best_fold].model.clone(),
        plan,
        folds,
        average,
        best_fold,
    };
    if let Some(root) = &settings.artifacts {
        write_json(&root.join("metrics").join(format!("{stage_slug}.json")), &summary)?;
        if let Some(dir) = &model_dir {
            let pointer = serde_json::json!({"fold": best_fold, "model": summary.best_model});
            write_file(&dir.join("best.json"), format!("{pointer}\n").as_bytes())?;
        }
    }
    Ok(CvRun { summary, models })
}
