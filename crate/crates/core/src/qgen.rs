//! Constraint layer for follow-up question generation: tag-transition rules,
//! a textual-entailment contract with a lexical baseline, and filtering and
//! ranking of externally generated candidates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pk::Tag;
use crate::text::{content_tokens, is_negation, is_stopword, jaccard, normalize};

#[derive(Debug, Error, PartialEq)]
pub enum QgenError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("invalid candidate on line {line}: {message}")]
    Candidate { line: usize, message: String },
    #[error("invalid tag rules: {0}")]
    Rules(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateQuestion {
    pub id: String,
    pub text: String,
    pub tag: Tag,
    pub rank: u32,
    #[serde(default)]
    pub source: String,
}

impl CandidateQuestion {
    fn check(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("candidate {:?} has empty text", self.id));
        }
        if self.rank == 0 {
            return Err(format!("candidate {:?} has rank 0", self.id));
        }
        if !self.tag.is_valid() {
            return Err(format!("candidate {:?} has an empty tag", self.id));
        }
        Ok(())
    }
}

/// Parse a JSON-lines candidate batch. Blank lines are skipped.
pub fn parse_candidates(jsonl: &str) -> Result<Vec<CandidateQuestion>, QgenError> {
    let mut out = Vec::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let candidate: CandidateQuestion = serde_json::from_str(line).map_err(|e| QgenError::Candidate {
            line: i + 1,
            message: e.to_string(),
        })?;
        candidate
            .check()
            .map_err(|message| QgenError::Candidate { line: i + 1, message })?;
        out.push(candidate);
    }
    Ok(out)
}

/// Allowed tag successions: tag -> tags the next question may carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagRuleSet {
    pub transitions: BTreeMap<Tag, BTreeSet<Tag>>,
}

impl TagRuleSet {
    pub fn new(transitions: BTreeMap<Tag, BTreeSet<Tag>>) -> Result<Self, QgenError> {
        if transitions.is_empty() {
            return Err(QgenError::Rules("rule set is empty".into()));
        }
        let all_valid = transitions
            .iter()
            .all(|(from, tos)| from.is_valid() && tos.iter().all(Tag::is_valid));
        if !all_valid {
            return Err(QgenError::Rules("empty tag label".into()));
        }
        Ok(TagRuleSet { transitions })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, QgenError> {
        let transitions = serde_json::from_slice(bytes).map_err(|e| QgenError::Rules(e.to_string()))?;
        Self::new(transitions)
    }

    pub fn allowed(&self, previous: &Tag) -> Option<&BTreeSet<Tag>> {
        self.transitions.get(previous)
    }

    pub fn allows(&self, previous: &Tag, next: &Tag) -> bool {
        self.allowed(previous).is_some_and(|s| s.contains(next))
    }
}

/// The four-step clinical questioning cycle:
/// yes/no -> degree/frequency -> causes -> treatment -> side effects.
/// Nothing follows the side-effects question.
pub fn default_tag_rules() -> TagRuleSet {
    let chain = [
        (Tag::YesNo, Tag::DegreeFrequency),
        (Tag::DegreeFrequency, Tag::Causes),
        (Tag::Causes, Tag::TreatmentRemedies),
        (Tag::TreatmentRemedies, Tag::SideEffectsInfo),
    ];
    TagRuleSet {
        transitions: chain
            .into_iter()
            .map(|(from, to)| (from, BTreeSet::from([to])))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Entail,
    Neutral,
    Contradict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub relation: Relation,
    pub confidence: f64,
}

/// Three-way directional relation between a premise and a hypothesis.
///
/// Implementations must be deterministic for fixed inputs and configuration,
/// and must score any text against itself as entail with confidence 1.0.
pub trait EntailmentScorer {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<EntailmentVerdict, QgenError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntailmentConfig {
    /// containment needed for entail
    pub theta_e: f64,
    /// token Jaccard needed for the scored neutral tier
    pub theta_n: f64,
    /// content overlap needed before a negation counts as contradiction
    pub theta_c: f64,
}

impl Default for EntailmentConfig {
    fn default() -> Self {
        EntailmentConfig {
            theta_e: 0.6,
            theta_n: 0.3,
            theta_c: 0.5,
        }
    }
}

/// Lexical baseline: negation polarity, directional token containment and
/// token Jaccard.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineEntailment {
    pub config: EntailmentConfig,
}

impl BaselineEntailment {
    pub fn new(config: EntailmentConfig) -> Self {
        BaselineEntailment { config }
    }
}

impl EntailmentScorer for BaselineEntailment {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<EntailmentVerdict, QgenError> {
        baseline_entailment(premise, hypothesis, &self.config)
    }
}

/// Whether a negation marker in `tokens` is followed by a content token that
/// also occurs in `other`.
fn negates_shared(tokens: &[String], other: &BTreeSet<String>) -> bool {
    tokens.iter().enumerate().any(|(i, t)| {
        is_negation(t)
            && tokens[i + 1..]
                .iter()
                .any(|u| !is_stopword(u) && !is_negation(u) && other.contains(u))
    })
}

fn polarity(tokens: &[String]) -> bool {
    tokens.iter().filter(|t| is_negation(t)).count() % 2 == 1
}

pub fn baseline_entailment(
    premise: &str,
    hypothesis: &str,
    config: &EntailmentConfig,
) -> Result<EntailmentVerdict, QgenError> {
    let p: Vec<String> = normalize(premise).into_iter().map(|t| t.text).collect();
    let h: Vec<String> = normalize(hypothesis).into_iter().map(|t| t.text).collect();
    if p.is_empty() || h.is_empty() {
        return Err(QgenError::EmptyText);
    }
    let p_set: BTreeSet<String> = p.iter().cloned().collect();
    let h_set: BTreeSet<String> = h.iter().cloned().collect();

    // Contradiction: the two sides disagree in polarity and the negated side
    // scopes its negation over something the other side says.
    let (p_neg, h_neg) = (polarity(&p), polarity(&h));
    if p_neg != h_neg {
        let scoped = if h_neg {
            negates_shared(&h, &p_set)
        } else {
            negates_shared(&p, &h_set)
        };
        let overlap = jaccard(&content_tokens(premise), &content_tokens(hypothesis));
        if scoped && overlap >= config.theta_c {
            return Ok(EntailmentVerdict {
                relation: Relation::Contradict,
                confidence: overlap,
            });
        }
    }

    let containment = h_set.intersection(&p_set).count() as f64 / h_set.len() as f64;
    if containment >= config.theta_e {
        return Ok(EntailmentVerdict {
            relation: Relation::Entail,
            confidence: containment,
        });
    }
    let overlap = jaccard(&p_set, &h_set);
    let confidence = if overlap >= config.theta_n { overlap } else { 0.0 };
    Ok(EntailmentVerdict {
        relation: Relation::Neutral,
        confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Tag { previous: Tag, candidate: Tag },
    /// `history_position` is 1-based, oldest first
    Contradiction { history_position: usize, history_id: String },
    Unscorable { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

/// Check one candidate against the tag rules (last history item only) and
/// for contradiction against every history item.
pub fn validate_next(
    history: &[CandidateQuestion],
    candidate: &CandidateQuestion,
    rules: &TagRuleSet,
    scorer: &dyn EntailmentScorer,
) -> Decision {
    if let Some(last) = history.last() {
        if !rules.allows(&last.tag, &candidate.tag) {
            return Decision::Reject(RejectReason::Tag {
                previous: last.tag.clone(),
                candidate: candidate.tag.clone(),
            });
        }
    }
    for (i, prior) in history.iter().enumerate() {
        match scorer.score(&prior.text, &candidate.text) {
            Ok(v) if v.relation == Relation::Contradict => {
                return Decision::Reject(RejectReason::Contradiction {
                    history_position: i + 1,
                    history_id: prior.id.clone(),
                })
            }
            Ok(_) => {}
            Err(e) => {
                return Decision::Reject(RejectReason::Unscorable {
                    message: format!("against {}: {e}", prior.id),
                })
            }
        }
    }
    Decision::Accept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: CandidateQuestion,
    /// entail confidence against the last history item, 0 otherwise
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub candidate: CandidateQuestion,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub accepted: Vec<RankedCandidate>,
    pub rejected: Vec<RejectedCandidate>,
}

fn candidate_key(a: &CandidateQuestion, b: &CandidateQuestion) -> Ordering {
    a.id.cmp(&b.id)
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.tag.cmp(&b.tag))
        .then_with(|| a.rank.cmp(&b.rank))
}

/// Keep accepted candidates ordered by rank, then entailment confidence
/// against the last history item (descending), then id. The result does not
/// depend on the order of `candidates`.
pub fn filter_and_rank(
    candidates: &[CandidateQuestion],
    history: &[CandidateQuestion],
    rules: &TagRuleSet,
    scorer: &dyn EntailmentScorer,
) -> Ranking {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for candidate in candidates {
        match validate_next(history, candidate, rules, scorer) {
            Decision::Accept => {
                let confidence = history
                    .last()
                    .and_then(|last| scorer.score(&last.text, &candidate.text).ok())
                    .filter(|v| v.relation == Relation::Entail)
                    .map_or(0.0, |v| v.confidence);
                accepted.push(RankedCandidate {
                    candidate: candidate.clone(),
                    confidence,
                });
            }
            Decision::Reject(reason) => rejected.push(RejectedCandidate {
                candidate: candidate.clone(),
                reason,
            }),
        }
    }
    accepted.sort_by(|a, b| {
        a.candidate
            .rank
            .cmp(&b.candidate.rank)
            .then_with(|| b.confidence.total_cmp(&a.confidence))
            .then_with(|| candidate_key(&a.candidate, &b.candidate))
    });
    rejected.sort_by(|a, b| candidate_key(&a.candidate, &b.candidate));
    Ranking { accepted, rejected }
}
