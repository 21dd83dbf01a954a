//! Clinician overrides of sentence labels, their audit log, and the resulting case views.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{criteria_present, transparent_decision, CaseDecision, CriterionEvidence};
use crate::classifier::{ClassifierError, Mode, Predictor};
use crate::corpus::{Corpus, Criterion, CriterionSet};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown case {0:?}")]
    UnknownCase(String),
    #[error("case {case_id:?} has no sentence {sentence_id:?}")]
    UnknownSentence { case_id: String, sentence_id: String },
    #[error("invalid override: {0}")]
    Invalid(String),
    #[error("audit log {}: line {line}: {reason}", path.display())]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error("audit log storage failed: {0}")]
    Storage(#[from] std::io::Error),
    #[error("review needs a transparent model, got {0:?}")]
    WrongMode(Mode),
    #[error(transparent)]
    Model(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideAction {
    Add,
    Remove,
}

/// An override as submitted, before the log assigns its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideDraft {
    pub sentence_id: String,
    pub criterion: Criterion,
    pub action: OverrideAction,
    pub reviewer: String,
    /// Defaults to the time the log receives it.
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: Option<String>,
}

impl OverrideDraft {
    pub fn validate(&self) -> Result<(), ReviewError> {
        if self.reviewer.trim().is_empty() {
            return Err(ReviewError::Invalid("reviewer must not be empty".into()));
        }
        if self.sentence_id.trim().is_empty() {
            return Err(ReviewError::Invalid("sentence_id must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRecord {
    pub index: u64,
    pub case_id: String,
    pub sentence_id: String,
    pub criterion: Criterion,
    pub action: OverrideAction,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Applies `overrides` to `predicted` in timestamp order, ties in slice order.
pub fn effective_labels(
    predicted: &BTreeMap<String, CriterionSet>,
    overrides: &[OverrideRecord],
) -> Result<BTreeMap<String, CriterionSet>, ReviewError> {
    let mut ordered: Vec<&OverrideRecord> = overrides.iter().collect();
    ordered.sort_by_key(|r| r.timestamp);
    let mut labels = predicted.clone();
    for r in ordered {
        let set = labels
            .get_mut(&r.sentence_id)
            .ok_or_else(|| ReviewError::UnknownSentence {
                case_id: r.case_id.clone(),
                sentence_id: r.sentence_id.clone(),
            })?;
        match r.action {
            OverrideAction::Add => {
                set.insert(r.criterion);
            }
            OverrideAction::Remove => {
                set.remove(r.criterion);
            }
        }
    }
    Ok(labels)
}

/// Append-only JSON Lines store; every record is flushed to disk before it is returned.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: File,
    len: u64,
    records: Vec<OverrideRecord>,
}

impl AuditLog {
    /// Opens or creates the log and replays it. A final line without its newline is an
    /// interrupted, never acknowledged append and is cut off.
    pub fn open(path: &Path) -> Result<AuditLog, ReviewError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        // Device files (say /dev/full) are written to but never replayed.
        if !file.metadata()?.is_file() {
            return Ok(AuditLog {
                path: path.to_path_buf(),
                file,
                len: 0,
                records: Vec::new(),
            });
        }
        let (records, valid_len) = Self::scan(path, &mut file)?;
        if valid_len < file.metadata()?.len() {
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            file,
            len: valid_len,
            records,
        })
    }

    /// Reads every acknowledged record without opening the log for writing.
    pub fn replay(path: &Path) -> Result<Vec<OverrideRecord>, ReviewError> {
        let mut file = File::open(path)?;
        Ok(Self::scan(path, &mut file)?.0)
    }

    fn scan(path: &Path, file: &mut File) -> Result<(Vec<OverrideRecord>, u64), ReviewError> {
        file.seek(SeekFrom::Start(0))?;
        let mut reader = BufReader::new(file);
        let mut records: Vec<OverrideRecord> = Vec::new();
        let mut offset = 0u64;
        let mut line = String::new();
        let mut number = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            number += 1;
            let corrupt = |reason: String| ReviewError::CorruptLog {
                path: path.to_path_buf(),
                line: number,
                reason,
            };
            let record: OverrideRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if let Some(last) = records.last() {
                if record.index <= last.index {
                    return Err(corrupt(format!(
                        "index {} does not follow {}",
                        record.index, last.index
                    )));
                }
            }
            records.push(record);
            offset += n as u64;
        }
        Ok((records, offset))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[OverrideRecord] {
        &self.records
    }

    pub fn next_index(&self) -> u64 {
        self.records.last().map_or(1, |r| r.index + 1)
    }

    /// Assigns the next index, writes the record and syncs it. On failure nothing is
    /// recorded and the file is cut back to its previous length.
    pub fn append(&mut self, case_id: &str, draft: OverrideDraft) -> Result<OverrideRecord, ReviewError> {
        draft.validate()?;
        let record = OverrideRecord {
            index: self.next_index(),
            case_id: case_id.to_string(),
            sentence_id: draft.sentence_id,
            criterion: draft.criterion,
            action: draft.action,
            reviewer: draft.reviewer,
            timestamp: draft.timestamp.unwrap_or_else(Utc::now),
            note: draft.note,
        };
        let mut line = serde_json::to_vec(&record).map_err(std::io::Error::from)?;
        line.push(b'\n');
        let written = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            if self.file.metadata().is_ok_and(|m| m.is_file()) {
                let _ = self.file.set_len(self.len);
            }
            return Err(ReviewError::Storage(e));
        }
        self.len += line.len() as u64;
        self.records.push(record.clone());
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    pub sentence_id: String,
    pub text: String,
    pub scores: BTreeMap<Criterion, f64>,
    pub model_criteria: CriterionSet,
    pub effective_criteria: CriterionSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistEntry {
    pub satisfied: bool,
    pub evidence: usize,
    pub model_evidence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: String,
    pub dataset_id: String,
    pub override_count: usize,
    pub sentences: Vec<SentenceView>,
    /// Keyed `A1`..`B4`, from the effective labels.
    pub checklist: BTreeMap<Criterion, ChecklistEntry>,
    pub model_decision: CaseDecision,
    pub effective_decision: CaseDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionView {
    pub case_id: String,
    pub override_count: usize,
    pub model_decision: CaseDecision,
    pub effective_decision: CaseDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub dataset_id: String,
    pub model_verdict: bool,
    pub effective_verdict: bool,
    pub override_count: usize,
}

#[derive(Debug, Clone)]
struct ScoredSentence {
    sentence_id: String,
    text: String,
    scores: Vec<f64>,
    assigned: CriterionSet,
}

#[derive(Debug, Clone)]
struct ScoredCase {
    case_id: String,
    dataset_id: String,
    sentences: Vec<ScoredSentence>,
}

/// Model predictions for a corpus plus the overrides recorded against them. Model output is
/// never modified; effective labels are recomputed from the overrides on every read.
#[derive(Debug, Clone)]
pub struct ReviewBook {
    cases: Vec<ScoredCase>,
    by_id: BTreeMap<String, usize>,
    overrides: BTreeMap<String, Vec<OverrideRecord>>,
    min_evidence: usize,
}

impl ReviewBook {
    /// Scores every sentence once with a transparent model.
    pub fn new<P: Predictor + Sync + ?Sized>(
        corpus: &Corpus,
        model: &P,
        min_evidence: usize,
    ) -> Result<ReviewBook, ReviewError> {
        if model.mode() != Mode::Transparent {
            return Err(ReviewError::WrongMode(model.mode()));
        }
        let threshold = model.decision_threshold();
        let cases = corpus
            .cases
            .par_iter()
            .map(|case| {
                let sentences = case
                    .sentences
                    .iter()
                    .map(|s| {
                        let scores = model.probabilities(&s.text)?;
                        let assigned = scores
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p >= threshold)
                            .filter_map(|(i, _)| Criterion::from_index(i))
                            .collect();
                        Ok(ScoredSentence {
                            sentence_id: s.sentence_id.clone(),
                            text: s.text.clone(),
                            scores,
                            assigned,
                        })
                    })
                    .collect::<Result<Vec<_>, ReviewError>>()?;
                Ok(ScoredCase {
                    case_id: case.case_id.clone(),
                    dataset_id: case.dataset_id.clone(),
                    sentences,
                })
            })
            .collect::<Result<Vec<_>, ReviewError>>()?;
        Ok(Self::from_scored(cases, min_evidence))
    }

    /// Uses given label sets as the model output, with probability 1 for assigned labels.
    pub fn from_labels(
        corpus: &Corpus,
        labels: &BTreeMap<(String, String), CriterionSet>,
        min_evidence: usize,
    ) -> ReviewBook {
        let cases = corpus
            .cases
            .iter()
            .map(|case| ScoredCase {
                case_id: case.case_id.clone(),
                dataset_id: case.dataset_id.clone(),
                sentences: case
                    .sentences
                    .iter()
                    .map(|s| {
                        let assigned = labels
                            .get(&(case.case_id.clone(), s.sentence_id.clone()))
                            .copied()
                            .unwrap_or_default();
                        ScoredSentence {
                            sentence_id: s.sentence_id.clone(),
                            text: s.text.clone(),
                            scores: Criterion::ALL
                                .iter()
                                .map(|c| f64::from(u8::from(assigned.contains(*c))))
                                .collect(),
                            assigned,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self::from_scored(cases, min_evidence)
    }

    fn from_scored(cases: Vec<ScoredCase>, min_evidence: usize) -> ReviewBook {
        let by_id = cases.iter().enumerate().map(|(i, c)| (c.case_id.clone(), i)).collect();
        ReviewBook {
            cases,
            by_id,
            overrides: BTreeMap::new(),
            min_evidence,
        }
    }

    fn scored(&self, case_id: &str) -> Result<&ScoredCase, ReviewError> {
        self.by_id
            .get(case_id)
            .map(|i| &self.cases[*i])
            .ok_or_else(|| ReviewError::UnknownCase(case_id.to_string()))
    }

    pub fn contains_case(&self, case_id: &str) -> bool {
        self.by_id.contains_key(case_id)
    }

    /// Checks that an override would land on an existing sentence.
    pub fn check_target(&self, case_id: &str, sentence_id: &str) -> Result<(), ReviewError> {
        let case = self.scored(case_id)?;
        if case.sentences.iter().any(|s| s.sentence_id == sentence_id) {
            Ok(())
        } else {
            Err(ReviewError::UnknownSentence {
                case_id: case_id.to_string(),
                sentence_id: sentence_id.to_string(),
            })
        }
    }

    pub fn apply(&mut self, record: OverrideRecord) -> Result<(), ReviewError> {
        self.check_target(&record.case_id, &record.sentence_id)?;
        self.overrides.entry(record.case_id.clone()).or_default().push(record);
        Ok(())
    }

    /// Applies every record of a replayed log.
    pub fn apply_all(&mut self, records: &[OverrideRecord]) -> Result<(), ReviewError> {
        records.iter().try_for_each(|r| self.apply(r.clone()))
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.case_id.as_str())
    }

    pub fn overrides(&self, case_id: &str) -> &[OverrideRecord] {
        self.overrides.get(case_id).map_or(&[], Vec::as_slice)
    }

    pub fn model_labels(&self, case_id: &str) -> Result<BTreeMap<String, CriterionSet>, ReviewError> {
        Ok(self
            .scored(case_id)?
            .sentences
            .iter()
            .map(|s| (s.sentence_id.clone(), s.assigned))
            .collect())
    }

    pub fn effective(&self, case_id: &str) -> Result<BTreeMap<String, CriterionSet>, ReviewError> {
        effective_labels(&self.model_labels(case_id)?, self.overrides(case_id))
    }

    fn decide(&self, labels: &BTreeMap<String, CriterionSet>) -> (CriterionEvidence, CaseDecision) {
        let evidence = CriterionEvidence::from_labels(labels.iter().map(|(id, set)| (id.as_str(), *set)));
        let decision = transparent_decision(criteria_present(&evidence, self.min_evidence));
        (evidence, decision)
    }

    pub fn decision(&self, case_id: &str) -> Result<DecisionView, ReviewError> {
        let model = self.model_labels(case_id)?;
        let effective = effective_labels(&model, self.overrides(case_id))?;
        Ok(DecisionView {
            case_id: case_id.to_string(),
            override_count: self.overrides(case_id).len(),
            model_decision: self.decide(&model).1,
            effective_decision: self.decide(&effective).1,
        })
    }

    pub fn case_view(&self, case_id: &str) -> Result<CaseView, ReviewError> {
        let case = self.scored(case_id)?;
        let model = self.model_labels(case_id)?;
        let effective = effective_labels(&model, self.overrides(case_id))?;
        let (model_evidence, model_decision) = self.decide(&model);
        let (evidence, effective_decision) = self.decide(&effective);
        let present = criteria_present(&evidence, self.min_evidence);
        let checklist = Criterion::ALL
            .into_iter()
            .map(|c| {
                (
                    c,
                    ChecklistEntry {
                        satisfied: present.contains(c),
                        evidence: evidence.count(c),
                        model_evidence: model_evidence.count(c),
                    },
                )
            })
            .collect();
        let sentences = case
            .sentences
            .iter()
            .map(|s| SentenceView {
                sentence_id: s.sentence_id.clone(),
                text: s.text.clone(),
                scores: Criterion::ALL.into_iter().zip(s.scores.iter().copied()).collect(),
                model_criteria: s.assigned,
                effective_criteria: effective[&s.sentence_id],
            })
            .collect();
        Ok(CaseView {
            case_id: case.case_id.clone(),
            dataset_id: case.dataset_id.clone(),
            override_count: self.overrides(case_id).len(),
            sentences,
            checklist,
            model_decision,
            effective_decision,
        })
    }

    pub fn summaries(&self) -> Result<Vec<CaseSummary>, ReviewError> {
        self.cases
            .iter()
            .map(|c| {
                let d = self.decision(&c.case_id)?;
                Ok(CaseSummary {
                    case_id: c.case_id.clone(),
                    dataset_id: c.dataset_id.clone(),
                    model_verdict: d.model_decision.verdict,
                    effective_verdict: d.effective_decision.verdict,
                    override_count: d.override_count,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record(index: u64, second: u32, sentence: &str, c: Criterion, action: OverrideAction) -> OverrideRecord {
        OverrideRecord {
            index,
            case_id: "c1".into(),
            sentence_id: sentence.into(),
            criterion: c,
            action,
            reviewer: "r".into(),
            timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, second).unwrap(),
            note: None,
        }
    }

    fn predicted(pairs: &[(&str, &[Criterion])]) -> BTreeMap<String, CriterionSet> {
        pairs
            .iter()
            .map(|(s, cs)| (s.to_string(), cs.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn add_and_remove() {
        let p = predicted(&[("s1", &[Criterion::A1])]);
        let out = effective_labels(&p, &[record(1, 0, "s1", Criterion::A1, OverrideAction::Remove)]).unwrap();
        assert!(out["s1"].is_empty());
        let p = predicted(&[("s1", &[])]);
        let out = effective_labels(&p, &[record(1, 0, "s1", Criterion::B2, OverrideAction::Add)]).unwrap();
        assert_eq!(out["s1"], [Criterion::B2].into_iter().collect());
    }

    #[test]
    fn later_timestamp_wins_and_ties_keep_store_order() {
        let p = predicted(&[("s1", &[])]);
        let add = record(1, 0, "s1", Criterion::A1, OverrideAction::Add);
        let remove = record(2, 1, "s1", Criterion::A1, OverrideAction::Remove);
        assert!(effective_labels(&p, &[add.clone(), remove.clone()]).unwrap()["s1"].is_empty());
        // Store order reversed, timestamps still decide.
        assert!(effective_labels(&p, &[remove.clone(), add.clone()]).unwrap()["s1"].is_empty());
        let tie = record(3, 0, "s1", Criterion::A1, OverrideAction::Remove);
        assert!(effective_labels(&p, &[add.clone(), tie.clone()]).unwrap()["s1"].is_empty());
        assert!(!effective_labels(&p, &[tie, add]).unwrap()["s1"].is_empty());
    }

    #[test]
    fn unknown_sentence_is_an_error() {
        let p = predicted(&[("s1", &[])]);
        let r = effective_labels(&p, &[record(1, 0, "s9", Criterion::A1, OverrideAction::Add)]);
        assert!(matches!(r, Err(ReviewError::UnknownSentence { .. })));
    }
}
