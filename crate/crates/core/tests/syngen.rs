use criterion_lab::aggregation::transparent_decision;
use criterion_lab::corpus::{corpus_stats, write_corpus};
use criterion_lab::syngen::{builtin_profiles, dialect_shift, generate, SynthProfile, VocabularyBank};
use proptest::prelude::*;

fn profile(name: &str) -> SynthProfile {
    builtin_profiles()[name].clone()
}

fn smaller(mut p: SynthProfile, n_cases: usize) -> SynthProfile {
    p.n_cases = n_cases;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gold_labels_follow_the_rule(seed in any::<u64>(), cdw in any::<bool>(), intensity in 0.0f64..1.0) {
        let base = profile(if cdw { "cdw-like" } else { "addm-like" });
        let p = dialect_shift(&smaller(base, 40), intensity);
        let corpus = generate(&p, seed).unwrap();
        for case in &corpus.cases {
            prop_assert_eq!(transparent_decision(case.gold_present()).verdict, case.gold_case_asd, "case {}", case.case_id);
        }
    }
}

#[test]
fn labeled_fraction_averages_to_profile_over_twenty_seeds() {
    for name in ["addm-like", "cdw-like"] {
        let p = profile(name);
        let mean = (0..20u64)
            .map(|seed| corpus_stats(&generate(&p, seed).unwrap()).labeled_line_fraction)
            .sum::<f64>()
            / 20.0;
        assert!(
            (mean - p.labeled_line_fraction).abs() <= 0.01,
            "{name}: mean labeled fraction {mean}"
        );
    }
}

#[test]
fn addm_seed_42_matches_table_shape() {
    let corpus = generate(&profile("addm-like"), 42).unwrap();
    let stats = corpus_stats(&corpus);
    assert_eq!(stats.case_count, 200);
    assert!((stats.case_asd_fraction - 0.68).abs() <= 0.05);
    assert!((stats.labeled_line_fraction - 0.109).abs() <= 0.02);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let p = dialect_shift(&smaller(profile("cdw-like"), 60), 0.6);
    let write = |seed| {
        let mut buf = Vec::new();
        write_corpus(&generate(&p, seed).unwrap(), &mut buf).unwrap();
        buf
    };
    assert_eq!(write(42), write(42));
    assert_ne!(write(42), write(43));
}

#[test]
fn half_intensity_bank_replaces_half_the_words() {
    let swappable: Vec<&str> = VocabularyBank::swappable_words().collect();
    let bank = VocabularyBank::build("cdw-like", 0.5);
    assert_eq!(bank.len(), (swappable.len() as f64 * 0.5).round() as usize);
    assert_eq!(bank, VocabularyBank::build("cdw-like", 0.5));
    for (word, replacement) in &bank.replacements {
        assert!(swappable.contains(word));
        assert_ne!(word, replacement);
    }
    let full = VocabularyBank::build("cdw-like", 1.0);
    assert_eq!(full.len(), swappable.len());
    assert!(VocabularyBank::build("cdw-like", 0.0).is_empty());
}

#[test]
fn shifted_text_differs_from_base() {
    let base = smaller(profile("addm-like"), 20);
    let shifted = dialect_shift(&base, 1.0);
    let a = generate(&base, 7).unwrap();
    let b = generate(&shifted, 7).unwrap();
    let differing = a
        .cases
        .iter()
        .zip(&b.cases)
        .flat_map(|(x, y)| x.sentences.iter().zip(&y.sentences))
        .filter(|(x, y)| x.text != y.text)
        .count();
    assert!(differing > 0);
    assert_eq!(dialect_shift(&base, 0.0), base);
}
