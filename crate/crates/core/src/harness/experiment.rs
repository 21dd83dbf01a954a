use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cv::{evaluate, run_cv, tune_run, CvSettings, CvSummary, EvalSettings, Evaluation, SelectionMetric};
use super::{io_err, write_json, HarnessError};
use crate::aggregation::Threshold;
use crate::classifier::{Learner, Mode, TrainConfig, MODEL_FORMAT_VERSION};
use crate::corpus::{read_corpus_file, write_corpus, Case, Corpus};
use crate::evaluation::{bonferroni, paired_t_test, PrfMetric, SignificanceResult};
use crate::hashing::fnv1a64;

fn default_k() -> usize {
    10
}

fn default_selection_threshold() -> Threshold {
    Threshold::from_decimal(0.5).expect("valid threshold")
}

fn default_min_evidence() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

/// One step of a sequence. A missing `config` means the baseline settings, with the
/// tuning rate for `tune` stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    Train {
        dataset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<TrainConfig>,
    },
    Tune {
        dataset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<TrainConfig>,
    },
    Mixed {
        datasets: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<TrainConfig>,
    },
}

impl Stage {
    fn kind(&self) -> &'static str {
        match self {
            Stage::Train { .. } => "train",
            Stage::Tune { .. } => "tune",
            Stage::Mixed { .. } => "mixed",
        }
    }

    fn datasets(&self) -> Vec<&str> {
        match self {
            Stage::Train { dataset, .. } | Stage::Tune { dataset, .. } => vec![dataset.as_str()],
            Stage::Mixed { datasets, .. } => datasets.iter().map(String::as_str).collect(),
        }
    }

    fn config(&self, seed: u64) -> TrainConfig {
        let explicit = match self {
            Stage::Train { config, .. } | Stage::Tune { config, .. } | Stage::Mixed { config, .. } => config,
        };
        explicit.clone().unwrap_or_else(|| {
            let base = TrainConfig {
                seed,
                ..TrainConfig::baseline()
            };
            match self {
                Stage::Tune { .. } => base.tuning(),
                _ => base,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    pub name: String,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    /// Dataset name to corpus file.
    pub datasets: BTreeMap<String, PathBuf>,
    pub schedule: Vec<Sequence>,
    /// Sequences whose first-stage best test fold is frozen for comparison; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_folds: Option<Vec<String>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Threshold::defaults")]
    pub thresholds: Vec<Threshold>,
    #[serde(default = "default_selection_threshold")]
    pub selection_threshold: Threshold,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_metric: Option<SelectionMetric>,
    #[serde(default = "default_min_evidence")]
    pub min_evidence: usize,
    /// Pool confusion counts across folds instead of averaging fold metrics.
    #[serde(default)]
    pub pooled_average: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl ExperimentSpec {
    /// Train-then-tune in both directions plus a mixed run over the two datasets.
    pub fn standard(mode: Mode, first: (&str, &Path), second: (&str, &Path), seed: u64) -> ExperimentSpec {
        let (a, b) = (first.0.to_string(), second.0.to_string());
        ExperimentSpec {
            mode,
            datasets: [(a.clone(), first.1.to_path_buf()), (b.clone(), second.1.to_path_buf())].into(),
            schedule: vec![
                Sequence {
                    name: "sequence-1".into(),
                    stages: vec![
                        Stage::Train {
                            dataset: a.clone(),
                            config: None,
                        },
                        Stage::Tune {
                            dataset: b.clone(),
                            config: None,
                        },
                    ],
                },
                Sequence {
                    name: "sequence-2".into(),
                    stages: vec![
                        Stage::Train {
                            dataset: b.clone(),
                            config: None,
                        },
                        Stage::Tune {
                            dataset: a.clone(),
                            config: None,
                        },
                    ],
                },
                Sequence {
                    name: "mixed".into(),
                    stages: vec![Stage::Mixed {
                        datasets: vec![a, b],
                        config: None,
                    }],
                },
            ],
            comparison_folds: None,
            k: default_k(),
            seed,
            thresholds: Threshold::defaults(),
            selection_threshold: default_selection_threshold(),
            selection_metric: None,
            min_evidence: default_min_evidence(),
            pooled_average: false,
            alpha: default_alpha(),
        }
    }

    /// Reads a spec file; relative corpus paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<ExperimentSpec, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| HarnessError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in spec.datasets.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn selection(&self) -> SelectionMetric {
        self.selection_metric.unwrap_or(SelectionMetric::default_for(self.mode))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::InvalidSpec(msg));
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.schedule.is_empty() {
            return fail("schedule is empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.mode == Mode::Blackbox && self.thresholds.is_empty() {
            return fail("black-box experiments need at least one threshold".into());
        }
        if self.mode == Mode::Blackbox && self.selection() == SelectionMetric::MacroF1 {
            return fail("macro F1 selection needs criterion labels; use case_accuracy".into());
        }
        let mut names = BTreeSet::new();
        for seq in &self.schedule {
            if seq.name.trim().is_empty() || !names.insert(seq.name.as_str()) {
                return fail(format!("sequence names must be non-empty and unique: {:?}", seq.name));
            }
            let Some(first) = seq.stages.first() else {
                return fail(format!("sequence {} has no stages", seq.name));
            };
            if matches!(first, Stage::Tune { .. }) {
                return fail(format!("sequence {}: a tune stage needs a preceding model", seq.name));
            }
            for stage in &seq.stages {
                if let Stage::Mixed { datasets, .. } = stage {
                    if seq.stages.len() != 1 {
                        return fail(format!("sequence {}: a mixed stage must be the only stage", seq.name));
                    }
                    let distinct: BTreeSet<&String> = datasets.iter().collect();
                    if distinct.len() < 2 || distinct.len() != datasets.len() {
                        return fail(format!(
                            "sequence {}: mixed needs two or more distinct datasets",
                            seq.name
                        ));
                    }
                }
                for d in stage.datasets() {
                    if !self.datasets.contains_key(d) {
                        return fail(format!("sequence {} uses undeclared dataset {d:?}", seq.name));
                    }
                }
                stage.config(self.seed).validate()?;
            }
        }
        if let Some(frozen) = &self.comparison_folds {
            for name in frozen {
                if !names.contains(name.as_str()) {
                    return fail(format!("comparison fold names unknown sequence {name:?}"));
                }
            }
        }
        Ok(())
    }

    fn freezes(&self, sequence: &str) -> bool {
        self.comparison_folds
            .as_ref()
            .is_none_or(|names| names.iter().any(|n| n == sequence))
    }
}

/// A retained held-out fold, used to compare models across stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFold {
    pub name: String,
    pub stage: String,
    pub fold: usize,
    /// `(dataset, case)` pairs.
    pub cases: Vec<(String, String)>,
    pub digest: String,
}

/// Hex FNV digest of the serialized cases, in the given order.
pub fn corpus_digest(cases: &[&Case]) -> String {
    let mut bytes = Vec::new();
    for case in cases {
        let single = Corpus {
            dataset_id: case.dataset_id.clone(),
            cases: vec![(*case).clone()],
        };
        write_corpus(&single, &mut bytes).expect("writing to memory");
    }
    format!("{:016x}", fnv1a64(0, &bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub model: String,
    pub fold: String,
    /// Fold cases that the model or any model it was tuned from trained on.
    pub train_overlap: usize,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub stage: String,
    pub threshold: Threshold,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub first: String,
    pub second: String,
    pub metric: PrfMetric,
    pub tests: u32,
    pub result: Option<SignificanceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub model_format: u32,
    pub os: String,
    pub arch: String,
}

impl Environment {
    fn current() -> Environment {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model_format: MODEL_FORMAT_VERSION,
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub stages: Vec<CvSummary>,
    pub comparison_folds: Vec<ComparisonFold>,
    pub grid: Vec<GridCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub threshold_sweep: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub significance: Vec<SignificanceEntry>,
    pub environment: Environment,
}

impl ExperimentReport {
    pub fn stage(&self, name: &str) -> Option<&CvSummary> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn cell(&self, model: &str, fold: &str) -> Option<&GridCell> {
        self.grid.iter().find(|c| c.model == model && c.fold == fold)
    }
}

struct Retained<M> {
    stage: String,
    model: M,
    /// `(dataset, case)` pairs seen in training along the model's lineage.
    lineage: BTreeSet<(String, String)>,
}

struct Frozen {
    record: ComparisonFold,
    cases: Vec<Case>,
}

fn stage_name(sequence: &str, index: usize, stage: &Stage) -> String {
    format!("{sequence}/{}-{}", index + 1, stage.kind())
}

/// Runs every sequence of the schedule, then the comparison grid, threshold sweep and
/// significance tests. Artifacts go under `out_dir` as each stage finishes, so a failed
/// run leaves the finished stages on disk.
pub fn run_experiment<L: Learner>(
    learner: &L,
    spec: &ExperimentSpec,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let mut corpora: BTreeMap<&str, Corpus> = BTreeMap::new();
    for (name, path) in &spec.datasets {
        corpora.insert(name, read_corpus_file(path)?);
    }
    if let Some(dir) = out_dir {
        write_json(&dir.join("spec.json"), spec)?;
    }
    let eval = EvalSettings {
        thresholds: spec.thresholds.clone(),
        selection_threshold: spec.selection_threshold,
        min_evidence: spec.min_evidence,
    };

    let mut stages = Vec::new();
    let mut retained: Vec<Retained<L::Model>> = Vec::new();
    let mut frozen: Vec<Frozen> = Vec::new();
    for seq in &spec.schedule {
        let mut previous: Option<usize> = None;
        for (i, stage) in seq.stages.iter().enumerate() {
            let name = stage_name(&seq.name, i, stage);
            let parts: Vec<&Corpus> = stage.datasets().iter().map(|d| &corpora[d]).collect();
            let corpus = if parts.len() == 1 {
                parts[0].clone()
            } else {
                Corpus::merge(&parts)?
            };
            let config = stage.config(spec.seed);
            let settings = CvSettings {
                stage: name.clone(),
                k: spec.k,
                seed: spec.seed,
                selection: spec.selection(),
                pooled: spec.pooled_average,
                eval: eval.clone(),
                artifacts: out_dir.map(Path::to_path_buf),
            };
            let run = match (stage, previous) {
                (Stage::Tune { .. }, Some(p)) => tune_run(learner, &retained[p].model, &corpus, &config, &settings)?,
                (Stage::Tune { .. }, None) => unreachable!("validated"),
                _ => run_cv(learner, &corpus, spec.mode, &config, &settings)?,
            };
            let best = run.summary.best_fold;
            let test_ids = run.summary.plan.test_cases(best);
            let mut lineage = previous.map(|p| retained[p].lineage.clone()).unwrap_or_default();
            lineage.extend(
                corpus
                    .cases
                    .iter()
                    .filter(|c| !test_ids.contains(c.case_id.as_str()))
                    .map(|c| (c.dataset_id.clone(), c.case_id.clone())),
            );
            if i == 0 && spec.freezes(&seq.name) {
                let cases: Vec<Case> = corpus
                    .cases
                    .iter()
                    .filter(|c| test_ids.contains(c.case_id.as_str()))
                    .cloned()
                    .collect();
                let refs: Vec<&Case> = cases.iter().collect();
                frozen.push(Frozen {
                    record: ComparisonFold {
                        name: seq.name.clone(),
                        stage: name.clone(),
                        fold: best,
                        cases: cases
                            .iter()
                            .map(|c| (c.dataset_id.clone(), c.case_id.clone()))
                            .collect(),
                        digest: corpus_digest(&refs),
                    },
                    cases,
                });
            }
            verify_frozen(&frozen, &corpora)?;
            stages.push(run.summary.clone());
            retained.push(Retained {
                stage: name,
                model: run.into_best_model(),
                lineage,
            });
            previous = Some(retained.len() - 1);
        }
    }

    let mut grid = Vec::new();
    for r in &retained {
        for f in &frozen {
            let cases: Vec<&Case> = f.cases.iter().collect();
            let overlap = f.record.cases.iter().filter(|k| r.lineage.contains(*k)).count();
            grid.push(GridCell {
                model: r.stage.clone(),
                fold: f.record.name.clone(),
                train_overlap: overlap,
                evaluation: evaluate(&r.model, &cases, &eval)?,
            });
        }
    }
    verify_frozen(&frozen, &corpora)?;

    let threshold_sweep = if spec.mode == Mode::Blackbox {
        stages
            .iter()
            .flat_map(|s| {
                s.average.thresholds.iter().map(|t| SweepRow {
                    stage: s.stage.clone(),
                    threshold: t.threshold,
                    accuracy: t.case.accuracy,
                    sensitivity: t.case.sensitivity,
                    specificity: t.case.specificity,
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let significance = if spec.mode == Mode::Transparent {
        significance_tests(spec, &stages)
    } else {
        Vec::new()
    };

    let report = ExperimentReport {
        spec: spec.clone(),
        stages,
        comparison_folds: frozen.into_iter().map(|f| f.record).collect(),
        grid,
        threshold_sweep,
        significance,
        environment: Environment::current(),
    };
    if let Some(dir) = out_dir {
        super::report::emit_report(&report, dir, &super::report::ReportFormat::ALL)?;
    }
    Ok(report)
}

/// Recomputes each frozen fold's digest from the loaded corpora.
fn verify_frozen(frozen: &[Frozen], corpora: &BTreeMap<&str, Corpus>) -> Result<(), HarnessError> {
    for f in frozen {
        let current: Vec<&Case> = f
            .record
            .cases
            .iter()
            .map(|(dataset, case)| {
                corpora
                    .values()
                    .flat_map(|c| c.cases.iter())
                    .find(|c| &c.dataset_id == dataset && &c.case_id == case)
                    .ok_or_else(|| HarnessError::FrozenFoldChanged(f.record.name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let kept: Vec<&Case> = f.cases.iter().collect();
        if corpus_digest(&current) != f.record.digest || corpus_digest(&kept) != f.record.digest {
            return Err(HarnessError::FrozenFoldChanged(f.record.name.clone()));
        }
    }
    Ok(())
}

/// Mixed run against the final stage of every other sequence, on per-criterion average
/// vectors, for precision, recall and F1.
fn significance_tests(spec: &ExperimentSpec, stages: &[CvSummary]) -> Vec<SignificanceEntry> {
    let final_stage = |seq: &Sequence| {
        let name = stage_name(&seq.name, seq.stages.len() - 1, seq.stages.last().expect("validated"));
        stages.iter().find(|s| s.stage == name)
    };
    let mixed: Vec<&CvSummary> = spec
        .schedule
        .iter()
        .filter(|s| matches!(s.stages.as_slice(), [Stage::Mixed { .. }]))
        .filter_map(final_stage)
        .collect();
    let others: Vec<&CvSummary> = spec
        .schedule
        .iter()
        .filter(|s| !matches!(s.stages.as_slice(), [Stage::Mixed { .. }]))
        .filter_map(final_stage)
        .collect();
    let tests = (mixed.len() * others.len() * PrfMetric::ALL.len()) as u32;
    if tests == 0 {
        return Vec::new();
    }
    let alpha = bonferroni(spec.alpha, tests);
    let mut out = Vec::new();
    for m in &mixed {
        for o in &others {
            let (Some(mc), Some(oc)) = (&m.average.criterion, &o.average.criterion) else {
                continue;
            };
            for metric in PrfMetric::ALL {
                let (result, note) = match paired_t_test(&mc.column(metric), &oc.column(metric)) {
                    Ok(r) => (Some(r.with_alpha(alpha)), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                out.push(SignificanceEntry {
                    first: m.stage.clone(),
                    second: o.stage.clone(),
                    metric,
                    tests,
                    result,
                    note,
                });
            }
        }
    }
    out
}
