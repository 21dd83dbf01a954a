//! Sentence segmentation and tokenization of clinical note text.

/// Per-sentence token budget of the encoder input.
pub const MAX_TOKENS: usize = 512;

/// Lowercased words ending in `.` that do not terminate a sentence.
const ABBREVIATIONS: &[&str] = &[
    "a.m", "al", "approx", "b.i.d", "cf", "dept", "dr", "e.g", "fig", "hr", "hrs", "hx", "i.e", "inc", "jr", "m.d",
    "min", "mo", "mos", "mr", "mrs", "ms", "no", "p.m", "ph.d", "prof", "sr", "st", "u.s", "vs", "wk", "wks", "y.o",
    "yr", "yrs",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// True when the word that ends right before `dot` (a byte offset of a `.`) is a known
/// abbreviation or a single-letter initial.
fn ends_with_abbreviation(line: &str, dot: usize) -> bool {
    let head = &line[..dot];
    let word_start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map_or(0, |(i, c)| i + c.len_utf8());
    let word = head[word_start..].trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let mut chars = word.chars();
    if let (Some(first), None) = (chars.next(), chars.next()) {
        if first.is_alphabetic() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits raw note text into sentences.
///
/// Breaks on newlines and on runs of `.`, `!`, `?` (plus any closing quotes or brackets)
/// that are followed by whitespace. A period closing a known abbreviation ("Dr.", "vs.")
/// or a single-letter initial does not break. Segments are trimmed; empty ones are dropped.
pub fn segment_note(raw_text: &str) -> Vec<String> {
    let mut segments = Vec::new();
    for line in raw_text.split(['\n', '\r']) {
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if !is_terminator(c) {
                continue;
            }
            let mut end = i + c.len_utf8();
            let mut only_period = c == '.';
            while let Some(&(j, next)) = chars.peek() {
                if is_terminator(next) || is_closer(next) {
                    only_period &= next == '.' || is_closer(next);
                    end = j + next.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let followed_by_space = line[end..].chars().next().is_some_and(char::is_whitespace);
            if !followed_by_space {
                continue;
            }
            if only_period && end == i + 1 && ends_with_abbreviation(line, i) {
                continue;
            }
            push_trimmed(&mut segments, &line[start..end]);
            start = end;
        }
        push_trimmed(&mut segments, &line[start..]);
    }
    segments
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

/// Lowercases `text` and splits it into word tokens (alphanumeric runs) and single-character
/// punctuation tokens, keeping at most `max_tokens` of them.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if tokens.len() >= max_tokens {
            return tokens;
        }
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() && tokens.len() < max_tokens {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() && tokens.len() < max_tokens {
        tokens.push(word);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_terminators_and_newlines() {
        assert_eq!(
            segment_note("He lines up toys. He avoids eye contact."),
            vec!["He lines up toys.", "He avoids eye contact."]
        );
        assert_eq!(
            segment_note("Mother concerned\nNo eye contact!  Why? unclear"),
            vec!["Mother concerned", "No eye contact!", "Why?", "unclear"]
        );
        assert!(segment_note("").is_empty());
        assert!(segment_note(" \n\t ").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            segment_note("Seen by Dr. Smith today."),
            vec!["Seen by Dr. Smith today."]
        );
        assert_eq!(
            segment_note("Home vs. school behavior differs. Next."),
            vec!["Home vs. school behavior differs.", "Next."]
        );
        assert_eq!(
            segment_note("Referred by J. Doe for eval."),
            vec!["Referred by J. Doe for eval."]
        );
    }

    #[test]
    fn closing_quotes_stay_with_their_sentence() {
        assert_eq!(
            segment_note(r#"He said "no." Then he left."#),
            vec![r#"He said "no.""#, "Then he left."]
        );
    }

    #[test]
    fn deidentification_noise_is_kept() {
        assert_eq!(
            tokenize("Last Name xxx 1 is here", MAX_TOKENS),
            vec!["last", "name", "xxx", "1", "is", "here"]
        );
    }

    #[test]
    fn tokenizes_words_and_punctuation() {
        assert_eq!(
            tokenize("He lines up toys.", MAX_TOKENS),
            vec!["he", "lines", "up", "toys", "."]
        );
        assert_eq!(tokenize("He lines up toys.", 1), vec!["he"]);
        assert_eq!(tokenize("(flaps)", MAX_TOKENS), vec!["(", "flaps", ")"]);
        assert!(tokenize("   ", 5).is_empty());
    }

    #[test]
    fn long_sentence_is_truncated_to_budget() {
        let text = vec!["word"; 600].join(" ");
        assert_eq!(tokenize(&text, MAX_TOKENS).len(), 512);
    }
}
