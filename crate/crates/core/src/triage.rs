//! Deterministic traversal of a process-knowledge document, from live answers
//! or from answers derived from cue matches, with an explanation trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{derive_answers, AnswerMap, CueLexicon, CueMatch, PhraseMatcher};
use crate::pk::{AnswerValue, Mode, ProcessKnowledgeDoc, Tag, Transition};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TriageError {
    #[error("answer {value:?} is not in the domain of question {node}")]
    Domain { node: String, value: String },
    #[error("session is already complete")]
    SessionDone,
    #[error("session belongs to document {session}, not {doc}")]
    DocMismatch { session: String, doc: String },
    #[error("document has no question to start from")]
    NoQuestions,
    #[error("document is inconsistent: {0}")]
    InvalidDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Cue,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsweredStep {
    pub node_id: String,
    pub value: AnswerValue,
    pub source: AnswerSource,
    pub provenance: Vec<CueMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Question(String),
    Done(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub doc_id: String,
    pub answered: Vec<AnsweredStep>,
    pub position: Position,
    pub flat_running_total: i64,
}

impl SessionState {
    pub fn is_done(&self) -> bool {
        matches!(self.position, Position::Done(_))
    }

    pub fn outcome(&self) -> Option<&str> {
        match &self.position {
            Position::Done(label) => Some(label),
            Position::Question(_) => None,
        }
    }

    pub fn current_question(&self) -> Option<&str> {
        match &self.position {
            Position::Question(id) => Some(id),
            Position::Done(_) => None,
        }
    }
}

/// Where an answer leads, without committing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preview {
    Question { node_id: String, text: String },
    Outcome { label: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub question: String,
    pub answer: AnswerValue,
    pub source: AnswerSource,
    pub evidence: Vec<CueMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationTrace {
    pub doc_id: String,
    pub steps: Vec<TraceStep>,
    pub outcome: Option<String>,
}

/// A question the engine needs answered before it can continue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingQuestion {
    pub node_id: String,
    pub text: String,
    pub tag: Tag,
    /// true when cues supported more than one answer for this question
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Classification {
    Outcome {
        label: String,
        trace: ExplanationTrace,
    },
    NeedsInput {
        question: PendingQuestion,
        trace: ExplanationTrace,
        conflicts: std::collections::BTreeMap<String, Vec<AnswerValue>>,
    },
}

impl Classification {
    pub fn trace(&self) -> &ExplanationTrace {
        match self {
            Classification::Outcome { trace, .. } | Classification::NeedsInput { trace, .. } => trace,
        }
    }
}

pub fn start_session(doc: &ProcessKnowledgeDoc, session_id: impl Into<String>) -> Result<SessionState, TriageError> {
    let root = doc.root().ok_or(TriageError::NoQuestions)?;
    Ok(SessionState {
        session_id: session_id.into(),
        doc_id: doc.id.clone(),
        answered: Vec::new(),
        position: Position::Question(root.id.clone()),
        flat_running_total: 0,
    })
}

/// The position reached by answering the current question with `value`,
/// plus the points it scores in flat mode.
fn step(
    doc: &ProcessKnowledgeDoc,
    session: &SessionState,
    value: &AnswerValue,
) -> Result<(Position, i64), TriageError> {
    if session.doc_id != doc.id {
        return Err(TriageError::DocMismatch {
            session: session.doc_id.clone(),
            doc: doc.id.clone(),
        });
    }
    let node_id = match &session.position {
        Position::Done(_) => return Err(TriageError::SessionDone),
        Position::Question(id) => id,
    };
    let node = doc
        .node(node_id)
        .ok_or_else(|| TriageError::InvalidDocument(format!("unknown question {node_id}")))?;
    if !node.accepts(value) {
        return Err(TriageError::Domain {
            node: node.id.clone(),
            value: value.key(),
        });
    }

    match doc.mode {
        Mode::Flow => match doc.transition(node_id, value) {
            Some(Transition::Node(next)) => Ok((Position::Question(next.id.clone()), 0)),
            Some(Transition::Outcome(outcome)) => Ok((Position::Done(outcome.label.clone()), 0)),
            None => Err(TriageError::InvalidDocument(format!(
                "answer {} of {node_id} leads nowhere",
                value.key()
            ))),
        },
        Mode::Flat => {
            let points = doc
                .points(node_id, value)
                .ok_or_else(|| TriageError::InvalidDocument(format!("no points for {node_id}={}", value.key())))?;
            let index = doc
                .nodes
                .iter()
                .position(|n| n.id == *node_id)
                .expect("node looked up above");
            match doc.nodes.get(index + 1) {
                Some(next) => Ok((Position::Question(next.id.clone()), points)),
                None => {
                    let total = session.flat_running_total + points;
                    let threshold = doc
                        .threshold_for(total)
                        .ok_or_else(|| TriageError::InvalidDocument(format!("total {total} matches no threshold")))?;
                    Ok((Position::Done(threshold.outcome.clone()), points))
                }
            }
        }
    }
}

fn apply(
    doc: &ProcessKnowledgeDoc,
    session: &mut SessionState,
    value: AnswerValue,
    source: AnswerSource,
    provenance: Vec<CueMatch>,
) -> Result<(), TriageError> {
    let (next, points) = step(doc, session, &value)?;
    let node_id = session.current_question().expect("step checked position").to_string();
    session.answered.push(AnsweredStep {
        node_id,
        value,
        source,
        provenance,
    });
    session.flat_running_total += points;
    session.position = next;
    Ok(())
}

/// Record a user answer to the current question and advance.
pub fn submit_answer<'s>(
    doc: &ProcessKnowledgeDoc,
    session: &'s mut SessionState,
    value: AnswerValue,
) -> Result<&'s Position, TriageError> {
    apply(doc, session, value, AnswerSource::User, Vec::new())?;
    Ok(&session.position)
}

/// Where `value` would lead from the current question. Never mutates.
pub fn what_if(doc: &ProcessKnowledgeDoc, session: &SessionState, value: &AnswerValue) -> Result<Preview, TriageError> {
    let (next, _) = step(doc, session, value)?;
    Ok(match next {
        Position::Done(label) => Preview::Outcome { label },
        Position::Question(id) => {
            let text = doc.node(&id).map(|n| n.text.clone()).unwrap_or_default();
            Preview::Question { node_id: id, text }
        }
    })
}

pub fn explanation_trace(doc: &ProcessKnowledgeDoc, session: &SessionState) -> ExplanationTrace {
    let steps = session
        .answered
        .iter()
        .map(|a| TraceStep {
            question: doc.node(&a.node_id).map(|n| n.text.clone()).unwrap_or_else(|| a.node_id.clone()),
            answer: a.value.clone(),
            source: a.source,
            evidence: a.provenance.clone(),
        })
        .collect();
    ExplanationTrace {
        doc_id: session.doc_id.clone(),
        steps,
        outcome: session.outcome().map(str::to_string),
    }
}

/// Answer reached questions from `answers` (source = cue) until an outcome or
/// the first question the map does not answer. Never skips a question.
pub fn prefill(doc: &ProcessKnowledgeDoc, session: &mut SessionState, answers: &AnswerMap) -> Result<(), TriageError> {
    while let Some(node_id) = session.current_question() {
        let Some(value) = answers.answers.get(node_id) else {
            break;
        };
        let provenance = answers.provenance.get(node_id).cloned().unwrap_or_default();
        apply(doc, session, value.clone(), AnswerSource::Cue, provenance)?;
    }
    Ok(())
}

/// Classify free text against an instrument, returning the session the
/// classification left behind so a caller can continue it interactively.
pub fn classify_session(
    doc: &ProcessKnowledgeDoc,
    matcher: &PhraseMatcher,
    text: &str,
    session_id: impl Into<String>,
) -> Result<(SessionState, Classification), TriageError> {
    let matches = matcher.find_all(text);
    let answers = derive_answers(&matches, doc);
    let mut session = start_session(doc, session_id)?;
    prefill(doc, &mut session, &answers)?;
    let trace = explanation_trace(doc, &session);
    let result = match &session.position {
        Position::Done(label) => Classification::Outcome {
            label: label.clone(),
            trace,
        },
        Position::Question(id) => {
            let node = doc
                .node(id)
                .ok_or_else(|| TriageError::InvalidDocument(format!("unknown question {id}")))?;
            Classification::NeedsInput {
                question: PendingQuestion {
                    node_id: node.id.clone(),
                    text: node.text.clone(),
                    tag: node.tag.clone(),
                    conflict: answers.conflicts.contains_key(id),
                },
                trace,
                conflicts: answers.conflicts,
            }
        }
    };
    Ok((session, result))
}

pub fn classify_text(doc: &ProcessKnowledgeDoc, lexicon: &CueLexicon, text: &str) -> Result<Classification, TriageError> {
    classify_session(doc, &PhraseMatcher::new(lexicon), text, "classify").map(|(_, c)| c)
}

/// Start a session and submit `answers` in order as user answers.
pub fn replay(doc: &ProcessKnowledgeDoc, answers: &[AnswerValue]) -> Result<SessionState, TriageError> {
    let mut session = start_session(doc, "replay")?;
    for value in answers {
        submit_answer(doc, &mut session, value.clone())?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn flow_walk_yes_yes_no() {
        let doc = fixtures::toy_flow();
        let mut s = start_session(&doc, "s1").unwrap();
        assert_eq!(s.position, Position::Question("Q1".into()));
        for v in ["yes", "yes"] {
            submit_answer(&doc, &mut s, v.into()).unwrap();
        }
        assert_eq!(s.position, Position::Question("Q3".into()));
        submit_answer(&doc, &mut s, "no".into()).unwrap();
        assert_eq!(s.outcome(), Some("level 2"));
        assert_eq!(submit_answer(&doc, &mut s, "yes".into()), Err(TriageError::SessionDone));
    }

    #[test]
    fn flat_total_picks_threshold() {
        let doc = fixtures::toy_flat();
        let mut s = start_session(&doc, "s").unwrap();
        assert_eq!(s.current_question(), Some("I1"));
        for v in [1, 2, 0] {
            submit_answer(&doc, &mut s, v.into()).unwrap();
        }
        assert_eq!(s.flat_running_total, 3);
        assert_eq!(s.outcome(), Some("mild"));
    }

    #[test]
    fn out_of_domain_answer() {
        let doc = fixtures::toy_flow();
        let mut s = start_session(&doc, "s").unwrap();
        let err = submit_answer(&doc, &mut s, "maybe".into()).unwrap_err();
        assert!(matches!(err, TriageError::Domain { .. }));
        assert!(s.answered.is_empty());
        let flat = fixtures::toy_flat();
        let mut s = start_session(&flat, "s").unwrap();
        assert!(submit_answer(&flat, &mut s, 4.into()).is_err());
        assert!(submit_answer(&flat, &mut s, "1".into()).is_err());
    }

    #[test]
    fn what_if_previews_without_mutation() {
        let doc = fixtures::toy_flow();
        let s = replay(&doc, &["yes".into(), "yes".into()]).unwrap();
        let before = serde_json::to_string(&s).unwrap();
        assert_eq!(
            what_if(&doc, &s, &"no".into()).unwrap(),
            Preview::Outcome { label: "level 2".into() }
        );
        assert!(matches!(
            what_if(&doc, &s, &"yes".into()).unwrap(),
            Preview::Question { node_id, .. } if node_id == "Q4"
        ));
        assert_eq!(serde_json::to_string(&s).unwrap(), before);

        let done = replay(&doc, &["no".into()]).unwrap();
        assert_eq!(what_if(&doc, &done, &"yes".into()), Err(TriageError::SessionDone));
    }

    #[test]
    fn trace_of_fresh_and_finished_sessions() {
        let doc = fixtures::toy_flow();
        let fresh = start_session(&doc, "s").unwrap();
        let t = explanation_trace(&doc, &fresh);
        assert!(t.steps.is_empty());
        assert_eq!(t.outcome, None);

        let done = replay(&doc, &["yes".into(), "yes".into(), "no".into()]).unwrap();
        let t = explanation_trace(&doc, &done);
        assert_eq!(t.steps.len(), 3);
        assert_eq!(t.outcome.as_deref(), Some("level 2"));
        assert_eq!(t.steps[2].question, doc.node("Q3").unwrap().text);
    }

    #[test]
    fn doc_mismatch_is_rejected() {
        let flow = fixtures::toy_flow();
        let flat = fixtures::toy_flat();
        let mut s = start_session(&flat, "s").unwrap();
        assert!(matches!(
            submit_answer(&flow, &mut s, "yes".into()),
            Err(TriageError::DocMismatch { .. })
        ));
    }
}
