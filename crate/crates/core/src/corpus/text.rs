use unicode_general_category::get_general_category;
use unicode_normalization::UnicodeNormalization;

use super::LanguageSpec;
use crate::error::{Error, Result};

fn is_stripped(c: char) -> bool {
    if c == '\'' {
        return false;
    }
    matches!(get_general_category(c).abbreviation().as_bytes()[0], b'P' | b'S')
}

fn pass(raw: &str, spec: &LanguageSpec) -> String {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase();
    let stripped: String = folded.chars().filter(|&c| !is_stripped(c)).nfkc().collect();
    let words: Vec<&str> = stripped
        .split_whitespace()
        .filter(|w| w.chars().all(|c| spec.has_grapheme(c)))
        .collect();
    words.join(if spec.space_free() { "" } else { " " })
}

/// NFKC, lowercase, drop punctuation and symbols (apostrophe kept), drop
/// words with symbols outside the language's graphemes, collapse whitespace.
///
/// Iterated to a fixed point so the result is idempotent even when a
/// grapheme set holds characters that NFKC would rewrite.
pub fn normalize_text(raw: &str, spec: &LanguageSpec) -> Result<String> {
    let mut cur = pass(raw, spec);
    for _ in 0..16 {
        let next = pass(&cur, spec);
        if next == cur {
            break;
        }
        cur = next;
    }
    if cur.is_empty() {
        return Err(Error::EmptyTranscript);
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MetricKind;
    use proptest::prelude::*;

    fn latin() -> LanguageSpec {
        LanguageSpec::new("xx", "abcdefghijklmnopqrstuvwxyzé'", MetricKind::Wer, 0)
    }

    #[test]
    fn strips_and_folds() {
        assert_eq!(normalize_text("Héllo, world!", &latin()).unwrap(), "héllo world");
        // decomposed e + combining acute composes to the grapheme
        assert_eq!(normalize_text("He\u{301}llo", &latin()).unwrap(), "héllo");
        assert_eq!(normalize_text("  don't   stop ", &latin()).unwrap(), "don't stop");
        assert_eq!(normalize_text("naïve words", &latin()).unwrap(), "words");
        assert_eq!(normalize_text("ﬁne", &latin()).unwrap(), "fine");
    }

    #[test]
    fn empty_results_are_errors() {
        assert!(matches!(
            normalize_text("?!., ;", &latin()),
            Err(Error::EmptyTranscript)
        ));
        assert!(matches!(normalize_text("", &latin()), Err(Error::EmptyTranscript)));
        assert!(normalize_text("жжж", &latin()).is_err());
    }

    #[test]
    fn clean_input_unchanged() {
        assert_eq!(normalize_text("the cat sat", &latin()).unwrap(), "the cat sat");
    }

    #[test]
    fn space_free_joins_words() {
        let spec = LanguageSpec::new("zz", "abc", MetricKind::Cer, 0);
        assert_eq!(normalize_text("ab, c", &spec).unwrap(), "abc");
    }

    #[test]
    fn idempotent_on_fuzz_set() {
        use rand::{Rng, SeedableRng};
        let pool: Vec<char> = "abcxyzéE\u{301}\u{308}İß ﬁ\u{a0}\t\n,.;!?-'\"()[]$€+=<>^`~ЖжΩω日本ｱ①²\u{200b}\u{0}"
            .chars()
            .collect();
        let spec = latin();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let len = rng.random_range(0..24);
            let s: String = (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            if let Ok(once) = normalize_text(&s, &spec) {
                assert_eq!(normalize_text(&once, &spec).unwrap(), once, "input {s:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn idempotent_on_arbitrary_strings(s in "\\PC{0,40}") {
            if let Ok(once) = normalize_text(&s, &latin()) {
                prop_assert_eq!(normalize_text(&once, &latin()).unwrap(), once);
            }
        }
    }
}
