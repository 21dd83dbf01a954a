//! Brute-force oracles for the decision rules, metrics and statistics.

use std::collections::BTreeMap;

use criterion_lab::aggregation::{
    blackbox_case, blackbox_decision, blackbox_fraction, criteria_present, transparent_decision, CriterionEvidence,
    Fraction, Threshold,
};
use criterion_lab::corpus::{Criterion, CriterionSet};
use criterion_lab::evaluation::{
    bonferroni, case_metrics, criterion_confusion, macro_average, paired_t_test, prf, student_t_two_tailed,
    CaseMetrics, ConfusionCounts, Prf,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn has(bits: u8, c: Criterion) -> bool {
    bits & (1 << c.index()) != 0
}

#[test]
fn rule_matches_boolean_formula_on_all_subsets() {
    use Criterion::*;
    let mut positives = 0;
    for bits in 0u8..128 {
        let set = CriterionSet::from_bits(bits);
        let b = [B1, B2, B3, B4].iter().filter(|c| has(bits, **c)).count();
        let expected = has(bits, A1) && has(bits, A2) && has(bits, A3) && b >= 2;
        assert_eq!(transparent_decision(set).verdict, expected, "{set}");
        positives += usize::from(expected);
    }
    // all three A plus any 2, 3 or 4 of the B group: 6 + 4 + 1
    assert_eq!(positives, 11);
}

#[test]
fn threshold_matches_integer_comparison() {
    for tenths in [2u64, 4, 5, 6, 8] {
        let tau = Threshold::from_decimal(tenths as f64 / 10.0).unwrap();
        for n in 1u64..=20 {
            for k in 0..=n {
                let expected = 10 * k >= tenths * n;
                let verdicts: Vec<bool> = (0..n).map(|i| i < k).collect();
                assert_eq!(
                    blackbox_decision(Fraction::new(k, n), tau).verdict,
                    expected,
                    "{k}/{n} vs {tau}"
                );
                assert_eq!(blackbox_case(&verdicts, tau).verdict, expected);
            }
        }
    }
}

#[test]
fn decision_examples() {
    use Criterion::*;
    let set = |cs: &[Criterion]| cs.iter().copied().collect::<CriterionSet>();
    assert!(transparent_decision(set(&[A1, A2, A3, B1, B2])).verdict);
    assert!(!transparent_decision(set(&[A1, A2, B1, B2, B3, B4])).verdict);
    assert!(!transparent_decision(CriterionSet::EMPTY).verdict);

    let mut ev = CriterionEvidence::default();
    ev.add(A1, "s1", 0.9);
    ev.add(B3, "s2", 0.8);
    ev.add(B3, "s4", 0.7);
    assert_eq!(criteria_present(&ev, 2), set(&[B3]));
    assert_eq!(criteria_present(&ev, 1), set(&[A1, B3]));
    assert!(criteria_present(&CriterionEvidence::default(), 1).is_empty());

    assert_eq!(
        blackbox_fraction(&[true, false, false, false, false]).unwrap(),
        Fraction::new(1, 5)
    );
    assert_eq!(blackbox_fraction(&[false; 4]).unwrap(), Fraction::new(0, 1));
    assert!(blackbox_fraction(&[]).is_err());
    let t = |x| Threshold::from_decimal(x).unwrap();
    assert!(blackbox_decision(Fraction::new(2, 10), t(0.2)).verdict);
    assert!(!blackbox_decision(Fraction::new(7, 10), t(0.8)).verdict);
    assert!(blackbox_decision(Fraction::new(4, 5), t(0.8)).verdict);
}

proptest! {
    #[test]
    fn adding_a_criterion_never_removes_asd(bits in 0u8..128, extra in 0usize..7) {
        let set = CriterionSet::from_bits(bits);
        let bigger = set.with(Criterion::from_index(extra).unwrap());
        prop_assert!(!transparent_decision(set).verdict || transparent_decision(bigger).verdict);
    }

    #[test]
    fn raising_threshold_never_adds_asd(verdicts in proptest::collection::vec(any::<bool>(), 1..40), lo in 0usize..5, hi in 0usize..5) {
        let ts = Threshold::defaults();
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let low = blackbox_case(&verdicts, ts[lo]).verdict;
        let high = blackbox_case(&verdicts, ts[hi]).verdict;
        prop_assert!(low || !high);
    }

    #[test]
    fn blackbox_ignores_line_order(verdicts in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = verdicts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for t in Threshold::defaults() {
            prop_assert_eq!(blackbox_case(&verdicts, t), blackbox_case(&shuffled, t));
        }
    }

    #[test]
    fn t_test_is_antisymmetric(a in proptest::collection::vec(0.0f64..1.0, 7), b in proptest::collection::vec(0.0f64..1.0, 7)) {
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p_two_tailed, ba.p_two_tailed);
        prop_assert_eq!(ab.df, 6);
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[test]
fn metrics_match_recount_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let n = rng.random_range(1..=200usize);
        let mut gold = BTreeMap::new();
        let mut pred = BTreeMap::new();
        let mut gold_case = BTreeMap::new();
        let mut pred_case = BTreeMap::new();
        for i in 0..n {
            gold.insert(i, CriterionSet::from_bits(rng.random_range(0..128)));
            pred.insert(i, CriterionSet::from_bits(rng.random_range(0..128)));
            gold_case.insert(i, rng.random_bool(0.6));
            pred_case.insert(i, rng.random_bool(0.5));
        }
        let confusion = criterion_confusion(&gold, &pred).unwrap();
        for c in Criterion::ALL {
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for i in 0..n {
                match (gold[&i].contains(c), pred[&i].contains(c)) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            assert_eq!(confusion[&c], ConfusionCounts { tp, fp, fn_, tn });
            let p: Prf<f64> = prf(&confusion[&c]);
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert_eq!((p.precision, p.recall, p.f1), (precision, recall, f1));
        }

        let metrics: CaseMetrics<f64> = case_metrics(&gold_case, &pred_case).unwrap();
        let agree = (0..n).filter(|i| gold_case[i] == pred_case[i]).count() as u64;
        let pos = (0..n).filter(|i| gold_case[i]).count() as u64;
        let tp = (0..n).filter(|i| gold_case[i] && pred_case[i]).count() as u64;
        let tn = (0..n).filter(|i| !gold_case[i] && !pred_case[i]).count() as u64;
        assert_eq!(metrics.accuracy, ratio(agree, n as u64));
        assert_eq!(metrics.sensitivity, ratio(tp, pos));
        assert_eq!(metrics.specificity, ratio(tn, n as u64 - pos));
    }
}

#[test]
fn metric_examples() {
    let c = |tp, fp, fn_, tn| ConfusionCounts { tp, fp, fn_, tn };
    let p: Prf<f64> = prf(&c(3, 1, 2, 0));
    assert_eq!(p.precision, 0.75);
    assert_eq!(p.recall, 0.6);
    assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(prf::<f64>(&c(0, 0, 0, 0)), Prf::default());
    let perfect: Prf<f64> = prf(&c(5, 0, 0, 0));
    assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

    let m: CaseMetrics<f64> = CaseMetrics::from_confusion(c(8, 1, 2, 9));
    assert!((m.accuracy - 0.85).abs() < 1e-12);
    assert!((m.sensitivity - 0.80).abs() < 1e-12);
    assert!((m.specificity - 0.90).abs() < 1e-12);

    // predicting ASD for every case of a 68 % prevalence set
    let all_pos: CaseMetrics<f64> = CaseMetrics::from_confusion(c(68, 32, 0, 0));
    assert_eq!(
        (all_pos.accuracy, all_pos.sensitivity, all_pos.specificity),
        (0.68, 1.0, 0.0)
    );
}

#[test]
fn published_addm_rows_reproduce_the_macro_row() {
    let precision = [0.63, 0.78, 0.68, 0.68, 0.69, 0.72, 0.65];
    let recall = [0.53, 0.76, 0.57, 0.65, 0.64, 0.39, 0.62];
    let rows: Vec<Prf<f64>> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| Prf {
            precision: p,
            recall: r,
            f1: 2.0 * p * r / (p + r),
        })
        .collect();
    let m = macro_average(&rows);
    assert!((m.precision - 0.69).abs() <= 0.005);
    // the published recall column averages to 0.5943, below the printed 0.60
    assert!((m.recall - 4.16 / 7.0).abs() < 1e-12);
    assert!((m.f1 - 0.64).abs() <= 0.005);
    assert_eq!(m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall));
    // the mean of per-criterion F1 lands on a different rounded value
    assert!((m.mean_f1 - 0.633).abs() < 0.001);
    assert_eq!(macro_average::<f64>(&[Prf::default(); 7]).f1, 0.0);
}

#[test]
fn t_test_on_one_to_seven() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    let r = paired_t_test(&a, &[0.0; 7]).unwrap();
    assert!((r.t - 4.89898).abs() < 0.001);
    assert_eq!(r.df, 6);
    assert!((r.p_two_tailed - 0.00271).abs() < 0.0005);
    let same = paired_t_test(&a, &a).unwrap();
    assert_eq!((same.t, same.p_two_tailed), (0.0, 1.0));
}

#[test]
fn bonferroni_levels() {
    assert!((bonferroni(0.05, 6) - 0.008333).abs() < 1e-6);
    assert_eq!(bonferroni(0.05, 1), 0.05);
    assert_eq!(bonferroni(0.01, 2), 0.005);
}

#[test]
fn student_t_matches_reference_table() {
    let table = include_str!("fixtures/student_t.csv");
    let mut rows = 0;
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let t: f64 = cols[0].parse().unwrap();
        let df: u64 = cols[1].parse().unwrap();
        let p: f64 = cols[2].parse().unwrap();
        let got = student_t_two_tailed(t, df);
        assert!((got - p).abs() < 1e-4, "t={t} df={df}: {got} vs {p}");
        rows += 1;
    }
    assert_eq!(rows, 64);
}
