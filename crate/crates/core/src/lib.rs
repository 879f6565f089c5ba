//! Process-knowledge engine.
//!
//! Expert-authored instruments ([`pk`]) drive deterministic triage sessions
//! ([`triage`]) that can be pre-filled from concept cues found in free text
//! ([`cues`]). Follow-up questions proposed by an external generator are
//! filtered by tag-transition and entailment constraints ([`qgen`]), and
//! conversational outputs are scored with safety metrics ([`metrics`]).
//! [`kg`] builds user-facing explanation trees over an is-a hierarchy and
//! [`food`] checks recipes against cooking-action and dietary rules.

pub mod canonical;
pub mod cues;
pub mod fixtures;
pub mod food;
pub mod kg;
pub mod metrics;
pub mod pk;
pub mod qgen;
pub mod text;
pub mod triage;

pub use canonical::to_canonical_json;
pub use cues::{derive_answers, match_text, AnswerMap, CueLexicon, CueMatch, PhraseMatcher};
pub use pk::{answer_domain, load_pk, validate_pk, AnswerValue, Mode, PkError, ProcessKnowledgeDoc, Tag};
pub use triage::{
    classify_text, explanation_trace, start_session, submit_answer, what_if, Classification, ExplanationTrace,
    SessionState,
};
