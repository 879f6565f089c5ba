//! Tokenization shared by the matcher, the entailment baseline and the
//! similarity scorers.
//!
//! Offsets are counted in Unicode scalar values (chars) of the original
//! string, not bytes, so they line up with what Python callers and the UI
//! see when slicing text.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

/// One normalized token and the char span it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Case-folded, NFKC-normalized tokens split on whitespace and punctuation.
///
/// A token is a maximal run of alphanumeric characters. Offsets index the
/// original string in chars.
pub fn normalize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;

    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(fold(&current, start, pos));
            current.clear();
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(fold(&current, start, pos));
    }
    tokens
}

fn fold(raw: &str, start: usize, end: usize) -> Token {
    let text: String = raw.nfkc().collect::<String>().to_lowercase();
    Token { text, start, end }
}

/// Normalized tokens joined by single spaces; the stored form of lexicon
/// phrases.
pub fn normalize_phrase(text: &str) -> String {
    normalize(text)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Slice `text` by char offsets.
pub fn slice_chars(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "are", "as", "at", "be", "been", "being", "by", "can", "could",
    "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "me", "my", "of", "on", "or", "our", "she", "so", "that",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "us", "was",
    "we", "were", "what", "when", "where", "which", "who", "why", "will", "with", "would", "you",
    "your",
];

/// Negation markers. `t` is the tail of a split `n't` contraction.
const NEGATIONS: &[&str] = &[
    "not", "no", "never", "nor", "neither", "none", "nothing", "nobody", "without", "cannot", "t",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

pub fn is_negation(token: &str) -> bool {
    NEGATIONS.contains(&token)
}

/// Set of all normalized tokens.
pub fn token_set(text: &str) -> BTreeSet<String> {
    normalize(text).into_iter().map(|t| t.text).collect()
}

/// Tokens that are neither stopwords nor negation markers. Falls back to the
/// full token set when nothing content-bearing remains, so that a phrase made
/// only of function words still compares equal to itself.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    let all = token_set(text);
    let content: BTreeSet<String> = all
        .iter()
        .filter(|t| !is_stopword(t) && !is_negation(t))
        .cloned()
        .collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

/// |a ∩ b| / |a ∪ b|, with two empty sets counted as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

/// A text-pair similarity in [0, 1]. Implementations must be deterministic
/// and give 1.0 for identical inputs.
pub trait SimilarityScorer {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Content-token Jaccard similarity.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccard;

impl SimilarityScorer for TokenJaccard {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        jaccard(&content_tokens(a), &content_tokens(b))
    }
}

impl<F> SimilarityScorer for F
where
    F: Fn(&str, &str) -> f64,
{
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn contraction_splits_on_apostrophe() {
        let toks = normalize("I can't sleep.");
        assert_eq!(texts(&toks), ["i", "can", "t", "sleep"]);
        assert_eq!((toks[0].start, toks[0].end), (0, 1));
        assert_eq!((toks[1].start, toks[1].end), (2, 5));
        assert_eq!((toks[2].start, toks[2].end), (6, 7));
        assert_eq!((toks[3].start, toks[3].end), (8, 13));
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(normalize("").is_empty());
        assert!(normalize("  ...  ").is_empty());
    }

    #[test]
    fn case_fold_across_ellipsis() {
        let toks = normalize("Overdose…OVERDOSE");
        assert_eq!(texts(&toks), ["overdose", "overdose"]);
        assert_eq!((toks[1].start, toks[1].end), (9, 17));
    }

    #[test]
    fn offsets_are_chars_not_bytes() {
        let text = "café déjà vu";
        let toks = normalize(text);
        assert_eq!(texts(&toks), ["café", "déjà", "vu"]);
        assert_eq!(slice_chars(text, toks[1].start, toks[1].end), "déjà");
    }

    #[test]
    fn compatibility_forms_are_folded() {
        // fullwidth letters and the "fi" ligature
        assert_eq!(normalize_phrase("ＳＬＥＥＰ ﬁne"), "sleep fine");
    }

    #[test]
    fn jaccard_basics() {
        let a = content_tokens("low calorie dinner");
        let b = content_tokens("a low calorie dinner idea");
        assert!((jaccard(&a, &b) - 0.75).abs() < 1e-12);
        assert_eq!(TokenJaccard.similarity("the", "the"), 1.0);
    }
}
