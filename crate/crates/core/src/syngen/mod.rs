//! Deterministic synthetic corpora shaped like the two clinical-note datasets.
//!
//! Gold labels are constructed so the DSM-5 rule holds exactly: every ASD case has
//! sentences for all three A criteria and at least two B criteria, and no non-ASD case
//! does. Any end-to-end error is therefore attributable to the sentence classifier.

mod banks;

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Case, Corpus, Criterion, CriterionSet, Sentence};
use crate::hashing::{derive_seed, fnv1a64};

/// Shortest note a generated case can have.
pub const MIN_LINES_PER_CASE: usize = 5;

/// Dialect id of the unshifted vocabulary.
pub const BASE_DIALECT: &str = "base";

const MULTI_LABEL_RATE: f64 = 0.03;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("infeasible profile: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinesPerCase {
    pub mean: f64,
    /// Log-scale standard deviation of the per-case note length.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProfile {
    pub name: String,
    pub n_cases: usize,
    pub asd_prevalence: f64,
    pub labeled_line_fraction: f64,
    pub lines_per_case: LinesPerCase,
    pub criterion_weights: BTreeMap<Criterion, f64>,
    /// Vocabulary bank id; [`BASE_DIALECT`] is the unshifted vocabulary.
    pub dialect: String,
    #[serde(default)]
    pub dialect_intensity: f64,
    pub noise_rate: f64,
}

impl SynthProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ratio = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidProfile(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        ratio("asd_prevalence", self.asd_prevalence)?;
        ratio("labeled_line_fraction", self.labeled_line_fraction)?;
        ratio("noise_rate", self.noise_rate)?;
        ratio("dialect_intensity", self.dialect_intensity)?;
        if self.n_cases < 10 {
            return Err(SynthError::InvalidProfile(format!(
                "n_cases = {} (need at least 10)",
                self.n_cases
            )));
        }
        if !(self.lines_per_case.mean >= MIN_LINES_PER_CASE as f64) || !(self.lines_per_case.spread >= 0.0) {
            return Err(SynthError::InvalidProfile(format!(
                "lines_per_case mean must be >= {MIN_LINES_PER_CASE} and spread >= 0"
            )));
        }
        for c in Criterion::ALL {
            match self.criterion_weights.get(&c) {
                Some(w) if *w > 0.0 && w.is_finite() => {}
                _ => {
                    return Err(SynthError::InvalidProfile(format!(
                        "criterion weight for {c} must be a positive number"
                    )))
                }
            }
        }
        let labeled_per_case = self.labeled_line_fraction * self.lines_per_case.mean;
        let needed_per_case = (Criterion::A_GROUP.len() + 2) as f64 * self.asd_prevalence;
        if self.asd_prevalence > 0.0 && labeled_per_case < needed_per_case {
            return Err(SynthError::Infeasible(format!(
                "{labeled_per_case:.3} labeled lines per case cannot give every ASD case \
                 its 5 criterion sentences at prevalence {}",
                self.asd_prevalence
            )));
        }
        Ok(())
    }
}

fn table_weights(counts: [f64; 7]) -> BTreeMap<Criterion, f64> {
    Criterion::ALL.into_iter().zip(counts).collect()
}

/// Profiles mirroring the two source datasets' case counts, prevalence, labeled-line
/// rate, note length and per-criterion frequencies.
pub fn builtin_profiles() -> BTreeMap<String, SynthProfile> {
    let addm = SynthProfile {
        name: "addm-like".into(),
        n_cases: 200,
        asd_prevalence: 0.68,
        labeled_line_fraction: 0.109,
        lines_per_case: LinesPerCase {
            mean: 44_429.0 / 200.0,
            spread: 0.4,
        },
        criterion_weights: table_weights([1167.0, 611.0, 738.0, 692.0, 485.0, 226.0, 917.0]),
        dialect: BASE_DIALECT.into(),
        dialect_intensity: 0.0,
        noise_rate: 0.02,
    };
    let cdw = SynthProfile {
        name: "cdw-like".into(),
        n_cases: 600,
        asd_prevalence: 0.1983,
        labeled_line_fraction: 0.046,
        lines_per_case: LinesPerCase {
            mean: 101_174.0 / 600.0,
            spread: 0.4,
        },
        criterion_weights: table_weights([969.0, 712.0, 698.0, 830.0, 410.0, 250.0, 809.0]),
        dialect: BASE_DIALECT.into(),
        dialect_intensity: 0.0,
        noise_rate: 0.02,
    };
    [addm, cdw].into_iter().map(|p| (p.name.clone(), p)).collect()
}

/// Returns `profile` with a dataset-specific vocabulary in which an `intensity` fraction
/// of the swappable content words are replaced. Intensity 0 returns the profile unchanged.
pub fn dialect_shift(profile: &SynthProfile, intensity: f64) -> SynthProfile {
    if intensity <= 0.0 {
        return profile.clone();
    }
    let mut shifted = profile.clone();
    if shifted.dialect == BASE_DIALECT {
        shifted.dialect = profile.name.clone();
    }
    shifted.dialect_intensity = intensity.min(1.0);
    shifted
}

/// Word substitutions of one dialect.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VocabularyBank {
    pub replacements: BTreeMap<&'static str, &'static str>,
}

impl VocabularyBank {
    pub fn swappable_words() -> impl Iterator<Item = &'static str> {
        banks::SWAP_TABLE.iter().map(|(w, _)| *w)
    }

    /// Selects `round(intensity * n)` of the swappable words, in an order fixed by the
    /// dialect id, and one synonym for each.
    pub fn build(dialect: &str, intensity: f64) -> VocabularyBank {
        if dialect == BASE_DIALECT || intensity <= 0.0 {
            return VocabularyBank::default();
        }
        let key = fnv1a64(0, dialect.as_bytes());
        let mut entries: Vec<&(&str, &[&str])> = banks::SWAP_TABLE.iter().collect();
        entries.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
        let take = (intensity.min(1.0) * entries.len() as f64).round() as usize;
        let replacements = entries[..take]
            .iter()
            .map(|(word, synonyms)| {
                let pick = fnv1a64(key, word.as_bytes()) as usize % synonyms.len();
                (*word, synonyms[pick])
            })
            .collect();
        VocabularyBank { replacements }
    }

    pub fn len(&self) -> usize {
        self.replacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replacements.is_empty()
    }

    /// Replaces whole words, keeping an initial capital.
    pub fn apply(&self, text: &str) -> String {
        if self.replacements.is_empty() {
            return text.to_string();
        }
        let mut out = String::with_capacity(text.len() + 8);
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut String| {
            if word.is_empty() {
                return;
            }
            let lower = word.to_lowercase();
            match self.replacements.get(lower.as_str()) {
                Some(rep) if word.starts_with(|c: char| c.is_uppercase()) => out.push_str(&capitalize(rep)),
                Some(rep) => out.push_str(rep),
                None => out.push_str(word),
            }
            word.clear();
        };
        for c in text.chars() {
            if c.is_alphanumeric() {
                word.push(c);
            } else {
                flush(&mut word, &mut out);
                out.push(c);
            }
        }
        flush(&mut word, &mut out);
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn decapitalize(s: &str) -> String {
    // keep acronyms such as "MRI" intact
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(first), Some(second)) if second.is_uppercase() => format!("{first}{second}{}", chars.as_str()),
        (Some(first), _) => first.to_lowercase().chain(s.chars().skip(1)).collect(),
        (None, _) => String::new(),
    }
}

struct CaseBuilder<'a> {
    profile: &'a SynthProfile,
    bank: &'a VocabularyBank,
    rng: ChaCha8Rng,
}

impl CaseBuilder<'_> {
    fn weighted_pick(&mut self, allowed: &[Criterion]) -> Criterion {
        let weights: Vec<f64> = allowed.iter().map(|c| self.profile.criterion_weights[c]).collect();
        let total: f64 = weights.iter().sum();
        let mut x = self.rng.random::<f64>() * total;
        for (c, w) in allowed.iter().zip(&weights) {
            if x < *w {
                return *c;
            }
            x -= w;
        }
        *allowed.last().expect("allowed set is never empty")
    }

    fn note_length(&mut self) -> usize {
        let LinesPerCase { mean, spread } = self.profile.lines_per_case;
        // Box-Muller; log-normal with the requested mean
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let mu = mean.ln() - spread * spread / 2.0;
        ((mu + spread * z).exp().round() as usize).max(MIN_LINES_PER_CASE)
    }

    fn stochastic_round(&mut self, x: f64) -> usize {
        let floor = x.floor();
        floor as usize + usize::from(self.rng.random::<f64>() < x - floor)
    }

    /// Criterion sets for the labeled sentences of one case.
    fn label_plan(&mut self, asd: bool, labeled: usize) -> Vec<CriterionSet> {
        let mut plan = Vec::with_capacity(labeled);
        let allowed: Vec<Criterion> = if asd {
            let mut b_pool = Criterion::B_GROUP.to_vec();
            let n_b = self.rng.random_range(2..=4);
            let mut chosen_b = Vec::new();
            for _ in 0..n_b {
                let b = self.weighted_pick(&b_pool);
                b_pool.retain(|x| *x != b);
                chosen_b.push(b);
            }
            for c in Criterion::A_GROUP.iter().chain(&chosen_b) {
                plan.push(CriterionSet::EMPTY.with(*c));
            }
            Criterion::ALL.to_vec()
        } else if self.rng.random_bool(0.5) {
            let dropped = self.weighted_pick(&Criterion::A_GROUP);
            Criterion::ALL.into_iter().filter(|c| *c != dropped).collect()
        } else {
            let kept_b = self.weighted_pick(&Criterion::B_GROUP);
            Criterion::ALL
                .into_iter()
                .filter(|c| c.is_a() || *c == kept_b)
                .collect()
        };
        while plan.len() < labeled {
            let mut set = CriterionSet::EMPTY.with(self.weighted_pick(&allowed));
            if self.rng.random_bool(MULTI_LABEL_RATE) {
                set.insert(self.weighted_pick(&allowed));
            }
            plan.push(set);
        }
        plan
    }

    fn render(&mut self, template: &str) -> String {
        let prefix = *banks::PREFIXES.choose(&mut self.rng).expect("non-empty");
        let suffix = *banks::SUFFIXES.choose(&mut self.rng).expect("non-empty");
        let subject = *banks::SUBJECTS.choose(&mut self.rng).expect("non-empty");
        let body = template.replace("{S}", subject);
        let body = if prefix.is_empty() { body } else { decapitalize(&body) };
        format!("{prefix}{body}{suffix}")
    }

    fn labeled_text(&mut self, set: CriterionSet) -> String {
        let clauses: Vec<String> = set
            .iter()
            .map(|c| {
                let template = *banks::criterion_templates(c).choose(&mut self.rng).expect("non-empty");
                self.render(template)
            })
            .collect();
        let joined = clauses
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    c.clone()
                } else {
                    format!("also, {}", decapitalize(c))
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        format!("{joined}.")
    }

    fn filler_text(&mut self) -> String {
        let template = *banks::FILLER.choose(&mut self.rng).expect("non-empty");
        format!("{}.", self.render(template))
    }

    fn add_noise(&mut self, text: String) -> String {
        let mut words: Vec<&str> = text.split(' ').collect();
        let at = self.rng.random_range(0..=words.len());
        words.insert(at, "xxx");
        words.join(" ")
    }

    fn build(mut self, case_id: String, asd: bool) -> Case {
        let n_lines = self.note_length();
        let target = self.profile.labeled_line_fraction * n_lines as f64;
        let mut labeled = self.stochastic_round(target).min(n_lines);
        if asd {
            labeled = labeled.max(Criterion::A_GROUP.len() + 2);
        }
        let plan = self.label_plan(asd, labeled);
        let mut slots: Vec<Option<CriterionSet>> = plan.into_iter().map(Some).collect();
        slots.resize(n_lines, None);
        slots.shuffle(&mut self.rng);

        let sentences = slots
            .into_iter()
            .enumerate()
            .map(|(i, slot)| {
                let text = match slot {
                    Some(set) => self.labeled_text(set),
                    None => self.filler_text(),
                };
                let text = self.bank.apply(&text);
                let text = if self.rng.random_bool(self.profile.noise_rate) {
                    self.add_noise(text)
                } else {
                    text
                };
                Sentence {
                    sentence_id: format!("s{:04}", i + 1),
                    text,
                    gold_criteria: slot.unwrap_or_default(),
                    gold_line_asd: None,
                }
            })
            .collect();
        Case {
            case_id,
            dataset_id: self.profile.name.clone(),
            gold_case_asd: asd,
            sentences,
        }
    }
}

/// Generates a corpus; a pure function of `(profile, seed)`.
///
/// Exactly `round(asd_prevalence * n_cases)` cases are ASD. Each case draws from its own
/// random stream derived from `(seed, case index)`, so cases are built in parallel.
pub fn generate(profile: &SynthProfile, seed: u64) -> Result<Corpus, SynthError> {
    profile.validate()?;
    let bank = VocabularyBank::build(&profile.dialect, profile.dialect_intensity);
    let n_asd = (profile.asd_prevalence * profile.n_cases as f64).round() as usize;
    let mut order: Vec<usize> = (0..profile.n_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)));
    let mut is_asd = vec![false; profile.n_cases];
    for i in &order[..n_asd] {
        is_asd[*i] = true;
    }
    let cases = (0..profile.n_cases)
        .into_par_iter()
        .map(|i| {
            let builder = CaseBuilder {
                profile,
                bank: &bank,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64)),
            };
            builder.build(format!("{}-{:04}", profile.name, i + 1), is_asd[i])
        })
        .collect();
    Corpus::new(profile.name.clone(), cases).map_err(|e| SynthError::InvalidProfile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_stats;

    fn small(name: &str) -> SynthProfile {
        let mut p = builtin_profiles()["addm-like"].clone();
        p.name = name.into();
        p.n_cases = 20;
        p.lines_per_case.mean = 30.0;
        p.labeled_line_fraction = 0.3;
        p
    }

    #[test]
    fn builtin_values() {
        let profiles = builtin_profiles();
        let addm = &profiles["addm-like"];
        let cdw = &profiles["cdw-like"];
        assert_eq!(addm.asd_prevalence, 0.68);
        assert_eq!(addm.n_cases, 200);
        assert_eq!(cdw.labeled_line_fraction, 0.046);
        assert_eq!(cdw.asd_prevalence, 0.1983);
        assert_eq!(cdw.n_cases, 600);
        let ratio = addm.criterion_weights[&Criterion::A1] / addm.criterion_weights[&Criterion::B3];
        assert!((ratio - 1167.0 / 226.0).abs() < 1e-12);
        assert!((addm.lines_per_case.mean - 222.145).abs() < 1e-9);
        for p in profiles.values() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn zero_labeled_lines_is_infeasible() {
        let mut p = small("x");
        p.labeled_line_fraction = 0.0;
        p.asd_prevalence = 0.5;
        assert!(matches!(generate(&p, 1), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let mut p = small("x");
        p.n_cases = 9;
        assert!(matches!(p.validate(), Err(SynthError::InvalidProfile(_))));
        let mut p = small("x");
        p.noise_rate = 1.5;
        assert!(matches!(p.validate(), Err(SynthError::InvalidProfile(_))));
        let mut p = small("x");
        p.criterion_weights.insert(Criterion::B2, 0.0);
        assert!(matches!(p.validate(), Err(SynthError::InvalidProfile(_))));
    }

    #[test]
    fn generation_is_deterministic_and_exact_in_prevalence() {
        let p = small("x");
        let a = generate(&p, 7).unwrap();
        let b = generate(&p, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&p, 8).unwrap());
        let asd = a.cases.iter().filter(|c| c.gold_case_asd).count();
        assert_eq!(asd, (0.68f64 * 20.0).round() as usize);
        assert!(a.cases.iter().all(|c| c.sentences.len() >= MIN_LINES_PER_CASE));
    }

    #[test]
    fn dialect_shift_identity_and_full() {
        let p = small("x");
        assert_eq!(dialect_shift(&p, 0.0), p);
        let full = dialect_shift(&p, 1.0);
        let bank = VocabularyBank::build(&full.dialect, full.dialect_intensity);
        assert_eq!(bank.len(), VocabularyBank::swappable_words().count());
        for word in VocabularyBank::swappable_words() {
            assert_ne!(bank.replacements[word], word);
        }
    }

    #[test]
    fn half_dialect_is_deterministic() {
        let p = dialect_shift(&small("x"), 0.5);
        let a = VocabularyBank::build(&p.dialect, p.dialect_intensity);
        let b = VocabularyBank::build(&p.dialect, p.dialect_intensity);
        assert_eq!(a, b);
        let n = VocabularyBank::swappable_words().count();
        // recount: entries that differ from the base vocabulary
        let replaced = VocabularyBank::swappable_words()
            .filter(|w| a.replacements.get(w).is_some_and(|r| r != w))
            .count();
        assert_eq!(replaced, (0.5 * n as f64).round() as usize);
        let other = VocabularyBank::build("another-dataset", 0.5);
        assert_ne!(a, other);
    }

    #[test]
    fn bank_apply_keeps_case_and_boundaries() {
        let bank = VocabularyBank::build("x", 1.0);
        let out = bank.apply("Toys, toys! Lines up toys.");
        let rep = bank.replacements["toys"];
        assert!(out.starts_with(&capitalize(rep)));
        assert!(out.contains(&format!("{rep}!")));
        assert!(!out.to_lowercase().contains("toys"));
    }

    #[test]
    fn noise_inserts_deidentification_tokens() {
        let mut p = small("x");
        p.noise_rate = 1.0;
        let corpus = generate(&p, 3).unwrap();
        assert!(corpus
            .cases
            .iter()
            .flat_map(|c| &c.sentences)
            .all(|s| s.text.split(' ').any(|w| w == "xxx")));
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.case_count, 20);
    }
}
