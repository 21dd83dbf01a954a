//! Case-level decisions from sentence-level labels.
//!
//! Two rules are supported: the transparent DSM-5 rule (all three A criteria plus at
//! least two B criteria, each evidenced by at least one sentence) and the black-box rule
//! (fraction of ASD-labelled sentences at or above a threshold). Threshold comparisons are
//! exact rational arithmetic so that `4/5 >= 0.8` holds.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Criterion, CriterionSet};

/// Exact non-negative fraction.
pub type Fraction = Ratio<u64>;

/// Default black-box case thresholds.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.2, 0.4, 0.5, 0.6, 0.8];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregationError {
    #[error("case has no sentences")]
    EmptyCase,
    #[error("threshold {0} is not a finite value in [0, 1]")]
    InvalidThreshold(String),
}

/// A case threshold, held as an exact decimal fraction (up to six places).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Threshold(Fraction);

impl Threshold {
    const SCALE: u64 = 1_000_000;

    pub fn from_decimal(value: f64) -> Result<Threshold, AggregationError> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(AggregationError::InvalidThreshold(value.to_string()));
        }
        let scaled = (value * Self::SCALE as f64).round() as u64;
        Ok(Threshold(Fraction::new(scaled, Self::SCALE)))
    }

    pub fn from_fraction(fraction: Fraction) -> Result<Threshold, AggregationError> {
        if fraction > Fraction::from_integer(1) {
            return Err(AggregationError::InvalidThreshold(fraction.to_string()));
        }
        Ok(Threshold(fraction))
    }

    pub fn fraction(self) -> Fraction {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn defaults() -> Vec<Threshold> {
        DEFAULT_THRESHOLDS
            .iter()
            .map(|t| Threshold::from_decimal(*t).expect("default thresholds are valid"))
            .collect()
    }
}

impl fmt::Debug for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Threshold({})", self.as_f64())
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Threshold::from_decimal(value).map_err(serde::de::Error::custom)
    }
}

/// Sentences assigned to each criterion, with the probability that assigned them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriterionEvidence {
    pub by_criterion: BTreeMap<Criterion, Vec<(String, f64)>>,
}

impl CriterionEvidence {
    pub fn add(&mut self, criterion: Criterion, sentence_id: impl Into<String>, probability: f64) {
        self.by_criterion
            .entry(criterion)
            .or_default()
            .push((sentence_id.into(), probability));
    }

    /// Evidence from per-sentence label sets (probability 1 for each assignment).
    pub fn from_labels<'a, I>(labels: I) -> CriterionEvidence
    where
        I: IntoIterator<Item = (&'a str, CriterionSet)>,
    {
        let mut evidence = CriterionEvidence::default();
        for (sentence_id, set) in labels {
            for c in set.iter() {
                evidence.add(c, sentence_id, 1.0);
            }
        }
        evidence
    }

    pub fn count(&self, criterion: Criterion) -> usize {
        self.by_criterion.get(&criterion).map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum DecisionBasis {
    Transparent {
        satisfied_criteria: CriterionSet,
    },
    Blackbox {
        numerator: u64,
        denominator: u64,
        fraction: f64,
        threshold: Threshold,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDecision {
    pub verdict: bool,
    #[serde(flatten)]
    pub basis: DecisionBasis,
}

/// Criteria with at least `min_evidence` supporting sentences. `min_evidence` of 0 is
/// treated as 1.
pub fn criteria_present(evidence: &CriterionEvidence, min_evidence: usize) -> CriterionSet {
    let min = min_evidence.max(1);
    Criterion::ALL
        .into_iter()
        .filter(|c| evidence.count(*c) >= min)
        .collect()
}

/// ASD iff all of A1, A2, A3 and at least two of B1..B4 are present.
pub fn transparent_decision(present: CriterionSet) -> CaseDecision {
    let verdict = present.a_count() == Criterion::A_GROUP.len() && present.b_count() >= 2;
    CaseDecision {
        verdict,
        basis: DecisionBasis::Transparent {
            satisfied_criteria: present,
        },
    }
}

pub fn blackbox_fraction(line_verdicts: &[bool]) -> Result<Fraction, AggregationError> {
    if line_verdicts.is_empty() {
        return Err(AggregationError::EmptyCase);
    }
    let asd = line_verdicts.iter().filter(|v| **v).count() as u64;
    Ok(Fraction::new(asd, line_verdicts.len() as u64))
}

/// ASD iff `fraction >= threshold`, compared exactly.
pub fn blackbox_decision(fraction: Fraction, threshold: Threshold) -> CaseDecision {
    CaseDecision {
        verdict: fraction >= threshold.fraction(),
        basis: DecisionBasis::Blackbox {
            numerator: *fraction.numer(),
            denominator: *fraction.denom(),
            fraction: *fraction.numer() as f64 / *fraction.denom() as f64,
            threshold,
        },
    }
}

/// Black-box decision straight from line verdicts; an empty case is decided "not ASD".
pub fn blackbox_case(line_verdicts: &[bool], threshold: Threshold) -> CaseDecision {
    match blackbox_fraction(line_verdicts) {
        Ok(fraction) => blackbox_decision(fraction, threshold),
        Err(_) => CaseDecision {
            verdict: false,
            basis: DecisionBasis::Blackbox {
                numerator: 0,
                denominator: 0,
                fraction: 0.0,
                threshold,
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Criterion::*;

    fn set(cs: &[Criterion]) -> CriterionSet {
        cs.iter().copied().collect()
    }

    #[test]
    fn present_respects_min_evidence() {
        let mut ev = CriterionEvidence::default();
        ev.add(A1, "s3", 0.9);
        assert_eq!(criteria_present(&ev, 1), set(&[A1]));
        assert_eq!(criteria_present(&CriterionEvidence::default(), 1), CriterionSet::EMPTY);
        let mut ev = CriterionEvidence::default();
        ev.add(A1, "s1", 0.9);
        ev.add(B3, "s2", 0.7);
        ev.add(B3, "s4", 0.6);
        assert_eq!(criteria_present(&ev, 2), set(&[B3]));
    }

    #[test]
    fn transparent_rule_examples() {
        assert!(transparent_decision(set(&[A1, A2, A3, B1, B2])).verdict);
        assert!(!transparent_decision(set(&[A1, A2, B1, B2, B3, B4])).verdict);
        assert!(!transparent_decision(CriterionSet::EMPTY).verdict);
        assert!(!transparent_decision(set(&[A1, A2, A3, B4])).verdict);
    }

    #[test]
    fn blackbox_fraction_examples() {
        assert_eq!(
            blackbox_fraction(&[true, false, false, false, false]).unwrap(),
            Fraction::new(1, 5)
        );
        assert_eq!(blackbox_fraction(&[false; 4]).unwrap(), Fraction::from_integer(0));
        assert_eq!(blackbox_fraction(&[]), Err(AggregationError::EmptyCase));
    }

    #[test]
    fn blackbox_threshold_is_inclusive_and_exact() {
        let t = |x| Threshold::from_decimal(x).unwrap();
        assert!(blackbox_decision(Fraction::new(2, 10), t(0.2)).verdict);
        assert!(!blackbox_decision(Fraction::new(7, 10), t(0.8)).verdict);
        assert!(blackbox_decision(Fraction::new(4, 5), t(0.8)).verdict);
        assert!(!blackbox_case(&[], t(0.2)).verdict);
    }

    #[test]
    fn thresholds_parse_exactly() {
        assert_eq!(Threshold::from_decimal(0.2).unwrap().fraction(), Fraction::new(1, 5));
        assert_eq!(Threshold::from_decimal(0.6).unwrap().fraction(), Fraction::new(3, 5));
        assert!(Threshold::from_decimal(1.5).is_err());
        assert!(Threshold::from_decimal(f64::NAN).is_err());
        let json = serde_json::to_string(&Threshold::defaults()).unwrap();
        assert_eq!(json, "[0.2,0.4,0.5,0.6,0.8]");
    }

    #[test]
    fn decision_serializes_flat() {
        let d = transparent_decision(set(&[A1, A2, A3, B1, B2]));
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["verdict"], true);
        assert_eq!(v["basis"], "transparent");
        assert_eq!(v["satisfied_criteria"][4], "B2");
    }
}
