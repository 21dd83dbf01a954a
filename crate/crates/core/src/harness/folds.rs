use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::Corpus;
use crate::hashing::derive_seed;

/// Case-level assignment of a corpus to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn test_cases(&self, fold: usize) -> BTreeSet<&str> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.assignment.values() {
            sizes[*f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold partition of cases.
///
/// Cases are grouped by (dataset, gold label); each group is shuffled and dealt round-robin
/// with the deal position carried across groups. Fold sizes then differ by at most one and
/// every fold holds `floor` or `ceil` of its proportional share of each group.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan, HarnessError> {
    if k < 2 {
        return Err(HarnessError::InvalidSpec(format!("k must be at least 2, got {k}")));
    }
    if corpus.cases.len() < k {
        return Err(HarnessError::TooFewCases {
            cases: corpus.cases.len(),
            k,
        });
    }
    let mut strata: BTreeMap<(&str, bool), Vec<&str>> = BTreeMap::new();
    for case in &corpus.cases {
        strata
            .entry((case.dataset_id.as_str(), case.gold_case_asd))
            .or_default()
            .push(case.case_id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf01d));
    let mut assignment = BTreeMap::new();
    let mut position = 0usize;
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            assignment.insert((*id).to_string(), position % k);
            position += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified: true,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Case, Sentence};

    fn corpus(n: usize, asd: usize) -> Corpus {
        let cases = (0..n)
            .map(|i| Case {
                case_id: format!("c{i:03}"),
                dataset_id: "d".into(),
                gold_case_asd: i < asd,
                sentences: vec![Sentence {
                    sentence_id: "s1".into(),
                    text: "x".into(),
                    gold_criteria: Default::default(),
                    gold_line_asd: None,
                }],
            })
            .collect();
        Corpus::new("d", cases).unwrap()
    }

    #[test]
    fn two_hundred_cases_in_ten_folds() {
        let c = corpus(200, 136);
        let plan = make_folds(&c, 10, 42).unwrap();
        assert_eq!(plan.fold_sizes(), vec![20; 10]);
        for f in 0..10 {
            let asd = plan
                .test_cases(f)
                .iter()
                .filter(|id| c.case(id).unwrap().gold_case_asd)
                .count();
            assert!(asd == 13 || asd == 14, "fold {f} has {asd}");
        }
        assert_eq!(plan, make_folds(&c, 10, 42).unwrap());
        assert_ne!(plan, make_folds(&c, 10, 43).unwrap());
    }

    #[test]
    fn too_few_cases() {
        assert!(matches!(
            make_folds(&corpus(3, 1), 10, 0),
            Err(HarnessError::TooFewCases { cases: 3, k: 10 })
        ));
        assert!(make_folds(&corpus(3, 1), 1, 0).is_err());
    }
}
