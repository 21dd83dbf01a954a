use std::collections::BTreeMap;

use criterion_lab::corpus::{
    corpus_stats, parse_corpus, read_corpus_file, segment_note, tokenize, write_corpus, Case, Corpus, CorpusError,
    Criterion, CriterionSet, Sentence, MAX_TOKENS,
};
use proptest::prelude::*;
use serde::Deserialize;

fn arb_sentence(id: usize) -> impl Strategy<Value = Sentence> {
    (
        "[A-Za-z][A-Za-z .,!?'\"-]{0,40}",
        0u8..128,
        proptest::option::of(any::<bool>()),
    )
        .prop_map(move |(text, bits, line_asd)| Sentence {
            sentence_id: format!("s{id}"),
            text,
            gold_criteria: CriterionSet::from_bits(bits),
            gold_line_asd: line_asd,
        })
}

fn arb_case(id: usize) -> impl Strategy<Value = Case> {
    (any::<bool>(), 1usize..6)
        .prop_flat_map(move |(asd, n)| {
            let sentences: Vec<_> = (0..n).map(arb_sentence).collect();
            (Just(asd), sentences)
        })
        .prop_map(move |(asd, sentences)| Case {
            case_id: format!("case-{id}"),
            dataset_id: "toy".into(),
            gold_case_asd: asd,
            sentences,
        })
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..8).prop_flat_map(|n| {
        let cases: Vec<_> = (0..n).map(arb_case).collect();
        cases.prop_map(|cases| Corpus::new("toy", cases).unwrap())
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(corpus in arb_corpus()) {
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let back = parse_corpus(buf.as_slice(), "toy").unwrap();
        prop_assert_eq!(&back, &corpus);
        let mut again = Vec::new();
        write_corpus(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn stats_match_recount(corpus in arb_corpus()) {
        let stats = corpus_stats(&corpus);
        let mut lines = 0usize;
        let mut labeled = 0usize;
        let mut per: BTreeMap<Criterion, usize> = BTreeMap::new();
        for case in &corpus.cases {
            for s in &case.sentences {
                lines += 1;
                if !s.gold_criteria.is_empty() {
                    labeled += 1;
                }
                for c in Criterion::ALL {
                    if s.gold_criteria.contains(c) {
                        *per.entry(c).or_default() += 1;
                    }
                }
            }
        }
        let asd = corpus.cases.iter().filter(|c| c.gold_case_asd).count();
        prop_assert_eq!(stats.line_count, lines);
        prop_assert_eq!(stats.case_count, corpus.cases.len());
        prop_assert_eq!(stats.labeled_line_fraction, labeled as f64 / lines as f64);
        prop_assert_eq!(stats.case_asd_fraction, asd as f64 / corpus.cases.len() as f64);
        for c in Criterion::ALL {
            prop_assert_eq!(stats.per_criterion_counts.get(&c).copied().unwrap_or(0), per.get(&c).copied().unwrap_or(0));
        }
    }

    #[test]
    fn segments_are_fixed_points(text in "[A-Za-z .!?\n\"()]{0,120}") {
        for segment in segment_note(&text) {
            prop_assert_eq!(segment_note(&segment), vec![segment.clone()]);
        }
    }

    #[test]
    fn tokenize_budget_is_a_prefix(text in "[A-Za-z0-9 .,;:!?'-]{0,80}", k in 0usize..30) {
        let short = tokenize(&text, k);
        let long = tokenize(&text, k + 1);
        prop_assert!(short.len() <= k);
        prop_assert!(long.starts_with(&short));
    }
}

#[derive(Deserialize)]
struct SegmentationCase {
    text: String,
    segments: Vec<String>,
}

#[test]
fn segmentation_fixture() {
    let raw = include_str!("fixtures/segmentation.jsonl");
    let cases: Vec<SegmentationCase> = raw.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(cases.len(), 50);
    for case in cases {
        assert_eq!(segment_note(&case.text), case.segments, "input {:?}", case.text);
    }
}

#[test]
fn segmentation_examples() {
    assert_eq!(segment_note("He lines up toys. He avoids eye contact.").len(), 2);
    assert!(segment_note("").is_empty());
    assert_eq!(
        segment_note("Seen by Dr. Smith today."),
        vec!["Seen by Dr. Smith today."]
    );
}

#[test]
fn tokenizer_examples() {
    assert_eq!(
        tokenize("He lines up toys.", MAX_TOKENS),
        vec!["he", "lines", "up", "toys", "."]
    );
    assert_eq!(tokenize("He lines up toys.", 1), vec!["he"]);
    let long = vec!["word"; 600].join(" ");
    assert_eq!(tokenize(&long, MAX_TOKENS).len(), 512);
}

#[test]
fn ingestion_errors() {
    let dup = concat!(
        r#"{"dataset_id":"d","case_id":"c1","case_asd":true,"sentence_id":"s1","text":"a","criteria":[]}"#,
        "\n",
        r#"{"dataset_id":"d","case_id":"c2","case_asd":true,"sentence_id":"s1","text":"b","criteria":[]}"#,
        "\n",
        r#"{"dataset_id":"d","case_id":"c1","case_asd":true,"sentence_id":"s2","text":"c","criteria":[]}"#,
        "\n",
    );
    match parse_corpus(dup.as_bytes(), "d") {
        Err(CorpusError::DuplicateCaseId(id)) => assert_eq!(id, "c1"),
        other => panic!("expected duplicate case id, got {other:?}"),
    }
    let bad = r#"{"dataset_id":"d","case_id":"c1","case_asd":true,"sentence_id":"s1","text":"a","criteria":["C9"]}"#;
    assert!(matches!(
        parse_corpus(bad.as_bytes(), "d"),
        Err(CorpusError::UnknownCriterion { .. })
    ));
}

#[test]
fn file_round_trip_and_one_case_stats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.jsonl");
    let text = concat!(
        r#"{"dataset_id":"d","case_id":"c1","case_asd":true,"sentence_id":"s1","text":"Avoids eye contact.","criteria":["A1"]}"#,
        "\n",
        r#"{"dataset_id":"d","case_id":"c1","case_asd":true,"sentence_id":"s2","text":"Likes trains.","criteria":[]}"#,
        "\n",
    );
    std::fs::write(&path, text).unwrap();
    let corpus = read_corpus_file(&path).unwrap();
    assert_eq!(corpus.cases.len(), 1);
    assert_eq!(corpus.sentence_count(), 2);
    let stats = corpus_stats(&corpus);
    assert_eq!(stats.per_criterion_counts[&Criterion::A1], 1);
    assert_eq!(stats.labeled_line_fraction, 0.5);
}

#[test]
fn case_fraction_counts_asd_cases() {
    let cases = (0..10)
        .map(|i| Case {
            case_id: format!("c{i}"),
            dataset_id: "d".into(),
            gold_case_asd: i < 7,
            sentences: vec![Sentence {
                sentence_id: "s".into(),
                text: "text".into(),
                gold_criteria: CriterionSet::EMPTY,
                gold_line_asd: None,
            }],
        })
        .collect();
    let stats = corpus_stats(&Corpus::new("d", cases).unwrap());
    assert_eq!(stats.case_asd_fraction, 0.7);
    assert_eq!(stats.labeled_line_fraction, 0.0);
}
