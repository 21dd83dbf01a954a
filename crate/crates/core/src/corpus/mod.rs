//! Corpus data model, JSON Lines ingestion and dataset statistics.

mod criterion;
mod text;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use criterion::{Criterion, CriterionSet};
pub use text::{segment_note, tokenize, MAX_TOKENS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate case id {0:?}")]
    DuplicateCaseId(String),
    #[error("case {case_id:?}: duplicate sentence id {sentence_id:?}")]
    DuplicateSentenceId { case_id: String, sentence_id: String },
    #[error("unknown criterion {code:?}{}", .line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownCriterion { code: String, line: Option<usize> },
    #[error("case {0:?} has no sentences")]
    EmptyCase(String),
    #[error("case {case_id:?} belongs to dataset {found:?}, expected {expected:?}")]
    DatasetMismatch {
        case_id: String,
        expected: String,
        found: String,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub text: String,
    pub gold_criteria: CriterionSet,
    /// Line-level ASD label, when the source provides one.
    pub gold_line_asd: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub dataset_id: String,
    pub gold_case_asd: bool,
    pub sentences: Vec<Sentence>,
}

impl Case {
    /// Union of the gold criteria over all sentences.
    pub fn gold_present(&self) -> CriterionSet {
        self.sentences
            .iter()
            .fold(CriterionSet::EMPTY, |acc, s| acc.union(s.gold_criteria))
    }
}

/// A validated collection of cases.
///
/// A corpus assembled with [`Corpus::merge`] carries a `+`-joined dataset id; each of its
/// cases keeps the id of the dataset it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub dataset_id: String,
    pub cases: Vec<Case>,
}

impl Corpus {
    /// Builds a corpus, checking every structural invariant.
    pub fn new(dataset_id: impl Into<String>, cases: Vec<Case>) -> Result<Corpus, CorpusError> {
        let corpus = Corpus {
            dataset_id: dataset_id.into(),
            cases,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let members: Vec<&str> = self.dataset_id.split('+').collect();
        let mut case_ids = HashSet::new();
        for case in &self.cases {
            if !case_ids.insert(case.case_id.as_str()) {
                return Err(CorpusError::DuplicateCaseId(case.case_id.clone()));
            }
            if !members.contains(&case.dataset_id.as_str()) {
                return Err(CorpusError::DatasetMismatch {
                    case_id: case.case_id.clone(),
                    expected: self.dataset_id.clone(),
                    found: case.dataset_id.clone(),
                });
            }
            if case.sentences.is_empty() {
                return Err(CorpusError::EmptyCase(case.case_id.clone()));
            }
            let mut sentence_ids = HashSet::new();
            for (i, s) in case.sentences.iter().enumerate() {
                if !sentence_ids.insert(s.sentence_id.as_str()) {
                    return Err(CorpusError::DuplicateSentenceId {
                        case_id: case.case_id.clone(),
                        sentence_id: s.sentence_id.clone(),
                    });
                }
                if s.text.trim().is_empty() {
                    return Err(CorpusError::Malformed {
                        line: i + 1,
                        reason: format!("case {:?} sentence {:?} has empty text", case.case_id, s.sentence_id),
                    });
                }
            }
        }
        Ok(())
    }

    /// Concatenates corpora from different datasets into one.
    pub fn merge(parts: &[&Corpus]) -> Result<Corpus, CorpusError> {
        let id = parts
            .iter()
            .map(|c| c.dataset_id.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let cases = parts.iter().flat_map(|c| c.cases.iter().cloned()).collect();
        Corpus::new(id, cases)
    }

    pub fn case(&self, case_id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn sentence_count(&self) -> usize {
        self.cases.iter().map(|c| c.sentences.len()).sum()
    }
}

/// One line of the corpus JSON Lines format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    dataset_id: String,
    case_id: String,
    case_asd: bool,
    sentence_id: String,
    text: String,
    criteria: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    line_asd: Option<bool>,
}

/// Reads a JSON Lines corpus. Blank lines are ignored; any malformed record aborts.
pub fn parse_corpus<R: BufRead>(source: R, dataset_id: &str) -> Result<Corpus, CorpusError> {
    let mut cases: Vec<Case> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SentenceRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if record.dataset_id != dataset_id {
            return Err(CorpusError::DatasetMismatch {
                case_id: record.case_id,
                expected: dataset_id.to_string(),
                found: record.dataset_id,
            });
        }
        if record.text.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "empty sentence text".into(),
            });
        }
        let mut criteria = CriterionSet::EMPTY;
        for code in &record.criteria {
            let c: Criterion = code.parse().map_err(|_| CorpusError::UnknownCriterion {
                code: code.clone(),
                line: Some(line_no),
            })?;
            criteria.insert(c);
        }
        let sentence = Sentence {
            sentence_id: record.sentence_id,
            text: record.text,
            gold_criteria: criteria,
            gold_line_asd: record.line_asd,
        };
        match cases.last_mut() {
            Some(case) if case.case_id == record.case_id => {
                if case.gold_case_asd != record.case_asd {
                    return Err(CorpusError::Malformed {
                        line: line_no,
                        reason: format!("case {:?} changes its case_asd label", record.case_id),
                    });
                }
                if case.sentences.iter().any(|s| s.sentence_id == sentence.sentence_id) {
                    return Err(CorpusError::DuplicateSentenceId {
                        case_id: record.case_id,
                        sentence_id: sentence.sentence_id,
                    });
                }
                case.sentences.push(sentence);
            }
            _ => {
                if !seen.insert(record.case_id.clone()) {
                    return Err(CorpusError::DuplicateCaseId(record.case_id));
                }
                cases.push(Case {
                    case_id: record.case_id,
                    dataset_id: record.dataset_id,
                    gold_case_asd: record.case_asd,
                    sentences: vec![sentence],
                });
            }
        }
    }
    Corpus::new(dataset_id, cases)
}

/// Reads a corpus file, taking the dataset id from its first record.
pub fn read_corpus_file(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let dataset_id = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| {
            #[derive(Deserialize)]
            struct Head {
                dataset_id: String,
            }
            serde_json::from_str::<Head>(l)
                .map(|h| h.dataset_id)
                .map_err(|e| CorpusError::Malformed {
                    line: 1,
                    reason: e.to_string(),
                })
        })
        .transpose()?
        .unwrap_or_default();
    parse_corpus(text.as_bytes(), &dataset_id)
}

/// Writes the corpus in the JSON Lines format read by [`parse_corpus`].
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for case in &corpus.cases {
        for s in &case.sentences {
            let record = SentenceRecord {
                dataset_id: case.dataset_id.clone(),
                case_id: case.case_id.clone(),
                case_asd: case.gold_case_asd,
                sentence_id: s.sentence_id.clone(),
                text: s.text.clone(),
                criteria: s.gold_criteria.iter().map(|c| c.code().to_string()).collect(),
                line_asd: s.gold_line_asd,
            };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset_id: String,
    pub line_count: usize,
    pub case_count: usize,
    pub case_asd_fraction: f64,
    pub labeled_line_fraction: f64,
    pub per_criterion_counts: BTreeMap<Criterion, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> DatasetStats {
    let mut per_criterion_counts: BTreeMap<Criterion, usize> = Criterion::ALL.iter().map(|c| (*c, 0)).collect();
    let mut line_count = 0;
    let mut labeled = 0;
    for s in corpus.cases.iter().flat_map(|c| &c.sentences) {
        line_count += 1;
        if !s.gold_criteria.is_empty() {
            labeled += 1;
        }
        for c in s.gold_criteria.iter() {
            *per_criterion_counts.entry(c).or_default() += 1;
        }
    }
    let asd = corpus.cases.iter().filter(|c| c.gold_case_asd).count();
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    DatasetStats {
        dataset_id: corpus.dataset_id.clone(),
        line_count,
        case_count: corpus.cases.len(),
        case_asd_fraction: frac(asd, corpus.cases.len()),
        labeled_line_fraction: frac(labeled, line_count),
        per_criterion_counts,
    }
}

/// `notes/addm.jsonl` -> `notes/addm.stats.json`
pub fn stats_sidecar_path(corpus_path: &Path) -> PathBuf {
    let stem = corpus_path.file_stem().unwrap_or_default().to_string_lossy();
    corpus_path.with_file_name(format!("{stem}.stats.json"))
}

pub fn write_stats_sidecar(corpus_path: &Path, stats: &DatasetStats) -> Result<PathBuf, CorpusError> {
    let path = stats_sidecar_path(corpus_path);
    let mut body = serde_json::to_string_pretty(stats).map_err(std::io::Error::from)?;
    body.push('\n');
    std::fs::write(&path, body)?;
    Ok(path)
}
