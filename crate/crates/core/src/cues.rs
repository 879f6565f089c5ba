//! Concept-phrase lexicons, matching them in free text, and turning the
//! matches into answers for instrument questions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pk::{AnswerValue, ProcessKnowledgeDoc};
use crate::text::{normalize, normalize_phrase};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("malformed lexicon: {0}")]
    Parse(String),
    #[error("concept {0:?}: {1}")]
    Invalid(String, String),
}

/// concept id -> phrases, phrases stored normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub id: String,
    pub entries: BTreeMap<String, Vec<String>>,
}

impl CueLexicon {
    /// Build from raw phrases, normalizing each one. Phrases that normalize
    /// to nothing are dropped; a concept left without phrases is an error.
    pub fn new(id: impl Into<String>, entries: BTreeMap<String, Vec<String>>) -> Result<Self, LexiconError> {
        let mut normalized = BTreeMap::new();
        for (concept, phrases) in entries {
            if concept.trim().is_empty() {
                return Err(LexiconError::Invalid(concept, "empty concept id".into()));
            }
            let mut seen = BTreeSet::new();
            let list: Vec<String> = phrases
                .iter()
                .map(|p| normalize_phrase(p))
                .filter(|p| !p.is_empty() && seen.insert(p.clone()))
                .collect();
            if list.is_empty() {
                return Err(LexiconError::Invalid(concept, "no usable phrases".into()));
            }
            normalized.insert(concept, list);
        }
        Ok(CueLexicon { id: id.into(), entries: normalized })
    }

    /// Parse a `{concept_id: [phrases]}` lexicon file.
    pub fn from_json(id: impl Into<String>, bytes: &[u8]) -> Result<Self, LexiconError> {
        let entries: BTreeMap<String, Vec<String>> =
            serde_json::from_slice(bytes).map_err(|e| LexiconError::Parse(e.to_string()))?;
        Self::new(id, entries)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A lexicon phrase found in text. `span` is a char range into the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueMatch {
    pub concept_id: String,
    pub phrase: String,
    pub span: (usize, usize),
}

#[derive(Default)]
struct TrieNode {
    children: HashMap<String, TrieNode>,
    /// (concept, phrase) ending here; lowest concept id wins on duplicates
    terminal: Option<(String, String)>,
}

/// Token trie compiled from a lexicon. Reuse it when matching many texts.
pub struct PhraseMatcher {
    root: TrieNode,
}

impl PhraseMatcher {
    pub fn new(lexicon: &CueLexicon) -> Self {
        let mut root = TrieNode::default();
        // BTreeMap iteration is by concept id, so the first insert is the
        // lexicographically smallest concept for a shared phrase.
        for (concept, phrases) in &lexicon.entries {
            for phrase in phrases {
                let mut node = &mut root;
                for token in phrase.split(' ') {
                    node = node.children.entry(token.to_string()).or_default();
                }
                node.terminal.get_or_insert_with(|| (concept.clone(), phrase.clone()));
            }
        }
        PhraseMatcher { root }
    }

    /// Leftmost-longest, non-overlapping matches ordered by start offset.
    pub fn find_all(&self, text: &str) -> Vec<CueMatch> {
        let tokens = normalize(text);
        let mut matches = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut node = &self.root;
            let mut best: Option<(usize, &(String, String))> = None;
            for (j, token) in tokens[i..].iter().enumerate() {
                match node.children.get(&token.text) {
                    Some(next) => {
                        node = next;
                        if let Some(term) = &node.terminal {
                            best = Some((j + 1, term));
                        }
                    }
                    None => break,
                }
            }
            match best {
                Some((len, (concept, phrase))) => {
                    matches.push(CueMatch {
                        concept_id: concept.clone(),
                        phrase: phrase.clone(),
                        span: (tokens[i].start, tokens[i + len - 1].end),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        matches
    }
}

pub fn match_text(text: &str, lexicon: &CueLexicon) -> Vec<CueMatch> {
    PhraseMatcher::new(lexicon).find_all(text)
}

/// Answers derived from cue matches, with the matches that support them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerMap {
    pub answers: BTreeMap<String, AnswerValue>,
    pub provenance: BTreeMap<String, Vec<CueMatch>>,
    /// node id -> the competing values, in domain order
    pub conflicts: BTreeMap<String, Vec<AnswerValue>>,
}

impl AnswerMap {
    pub fn is_empty(&self) -> bool {
        self.answers.is_empty() && self.conflicts.is_empty()
    }
}

/// Answer every node whose evidence is supported by exactly one answer value.
/// Unsupported nodes stay unanswered; nodes supported for two or more values
/// stay unanswered and are listed under `conflicts`.
pub fn derive_answers(matches: &[CueMatch], doc: &ProcessKnowledgeDoc) -> AnswerMap {
    let mut map = AnswerMap::default();
    for node in &doc.nodes {
        let mut supported: Vec<(AnswerValue, Vec<CueMatch>)> = Vec::new();
        for value in node.domain() {
            let Some(concepts) = node.evidence.get(&value.key()) else {
                continue;
            };
            let hits: Vec<CueMatch> = matches
                .iter()
                .filter(|m| concepts.contains(&m.concept_id))
                .cloned()
                .collect();
            if !hits.is_empty() {
                supported.push((value, hits));
            }
        }
        match supported.len() {
            0 => {}
            1 => {
                let (value, hits) = supported.pop().expect("one entry");
                map.answers.insert(node.id.clone(), value);
                map.provenance.insert(node.id.clone(), hits);
            }
            _ => {
                map.conflicts
                    .insert(node.id.clone(), supported.into_iter().map(|(v, _)| v).collect());
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::slice_chars;

    fn lex(entries: &[(&str, &[&str])]) -> CueLexicon {
        CueLexicon::new(
            "test",
            entries
                .iter()
                .map(|(c, ps)| (c.to_string(), ps.iter().map(|p| p.to_string()).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn longest_phrase_suppresses_overlap() {
        let lexicon = lex(&[("C1", &["end my life"]), ("C2", &["life"])]);
        let text = "I want to end my life";
        let found = match_text(text, &lexicon);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].concept_id, "C1");
        assert_eq!(slice_chars(text, found[0].span.0, found[0].span.1), "end my life");
    }

    #[test]
    fn repeated_phrase_matches_twice() {
        let lexicon = lex(&[("C3", &["overdose"])]);
        let found = match_text("an overdose, then another OVERDOSE", &lexicon);
        assert_eq!(found.len(), 2);
        assert!(found[0].span.0 < found[1].span.0);
    }

    #[test]
    fn empty_text_no_matches() {
        assert!(match_text("", &lex(&[("C3", &["overdose"])])).is_empty());
    }

    #[test]
    fn shared_phrase_goes_to_smallest_concept() {
        let lexicon = lex(&[("B", &["hopeless"]), ("A", &["Hopeless"])]);
        let found = match_text("feeling hopeless", &lexicon);
        assert_eq!(found[0].concept_id, "A");
    }

    #[test]
    fn empty_phrase_list_rejected() {
        let entries = BTreeMap::from([("C".to_string(), vec!["...".to_string()])]);
        assert!(CueLexicon::new("x", entries).is_err());
    }
}
