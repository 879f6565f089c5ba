//! Request bodies and the stateless operations behind them. The HTTP handlers
//! and the CLI both go through these so their output cannot drift apart.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use prokno_core::cues::CueLexicon;
use prokno_core::food::{self, Profile, Recipe, RecipeVerdict, Recommendation, RuleBook};
use prokno_core::kg::{build_context_tree, ContextTree, KnowledgeGraph, TreeConfig};
use prokno_core::metrics::{
    self, AnnotatedSample, BenefitDenominator, GenerationLog, GoldRule, MetricReport, RiskConfig, RiskReport,
};
use prokno_core::pk::{AnswerType, AnswerValue, ProcessKnowledgeDoc, QuestionNode, Tag};
use prokno_core::qgen::{
    default_tag_rules, filter_and_rank, validate_next, BaselineEntailment, CandidateQuestion, Decision,
    EntailmentConfig, Ranking, TagRuleSet,
};
use prokno_core::text::TokenJaccard;
use prokno_core::triage::ExplanationTrace;

use crate::config::MetricDefaults;
use crate::error::ApiError;

/// What a client needs to render a question and its answer controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionView {
    pub node_id: String,
    pub text: String,
    pub tag: Tag,
    pub rank: u32,
    pub answer_type: AnswerType,
}

impl From<&QuestionNode> for QuestionView {
    fn from(node: &QuestionNode) -> Self {
        QuestionView {
            node_id: node.id.clone(),
            text: node.text.clone(),
            tag: node.tag.clone(),
            rank: node.rank,
            answer_type: node.answer_type.clone(),
        }
    }
}

/// Session snapshot returned after every state change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub question: Option<QuestionView>,
    pub outcome: Option<String>,
    pub trace: ExplanationTrace,
}

#[derive(Debug, Clone, Serialize)]
pub struct DocSummary {
    pub id: String,
    pub title: String,
    pub mode: prokno_core::Mode,
    pub questions: usize,
}

impl From<&ProcessKnowledgeDoc> for DocSummary {
    fn from(doc: &ProcessKnowledgeDoc) -> Self {
        DocSummary {
            id: doc.id.clone(),
            title: doc.title.clone(),
            mode: doc.mode,
            questions: doc.nodes.len(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub doc_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub value: AnswerValue,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub doc_id: String,
    pub text: String,
    /// defaults to the document id
    #[serde(default)]
    pub lexicon_id: Option<String>,
    /// keep the resulting session open for further answers
    #[serde(default)]
    pub open_session: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesRequest {
    #[serde(default)]
    pub history: Vec<CandidateQuestion>,
    pub candidates: Vec<CandidateQuestion>,
    #[serde(default)]
    pub rules: Option<TagRuleSet>,
    #[serde(default)]
    pub entailment: Option<EntailmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateVerdict {
    pub candidate_id: String,
    #[serde(flatten)]
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatesResponse {
    /// one per candidate, in request order
    pub verdicts: Vec<CandidateVerdict>,
    pub ranking: Ranking,
}

pub fn validate_candidates(
    history: &[CandidateQuestion],
    candidates: &[CandidateQuestion],
    rules: Option<&TagRuleSet>,
    entailment: EntailmentConfig,
) -> CandidatesResponse {
    let defaults;
    let rules = match rules {
        Some(r) => r,
        None => {
            defaults = default_tag_rules();
            &defaults
        }
    };
    let scorer = BaselineEntailment::new(entailment);
    let verdicts = candidates
        .iter()
        .map(|c| CandidateVerdict {
            candidate_id: c.id.clone(),
            decision: validate_next(history, c, rules, &scorer),
        })
        .collect();
    CandidatesResponse {
        verdicts,
        ranking: filter_and_rank(candidates, history, rules, &scorer),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsafeRequest {
    pub query: String,
    pub generations: Vec<String>,
    /// a lexicon loaded by the service
    #[serde(default)]
    pub lexicon_id: Option<String>,
    /// an inline lexicon, concept id to phrases
    #[serde(default)]
    pub lexicon: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub harmful_concepts: Option<BTreeSet<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskRequest {
    pub samples: Vec<AnnotatedSample>,
    #[serde(default)]
    pub gold_rule: Option<GoldRule>,
    #[serde(default)]
    pub benefit_denominator: Option<BenefitDenominator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticRequest {
    pub query: String,
    pub generations: Vec<String>,
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicalRequest {
    pub query: String,
    pub generations: Vec<String>,
    #[serde(default)]
    pub entailment: Option<EntailmentConfig>,
}

pub fn unsafe_matches(
    log: &GenerationLog,
    lexicon: &CueLexicon,
    concepts: Option<&BTreeSet<String>>,
) -> Result<MetricReport, ApiError> {
    Ok(metrics::avg_unsafe_matches(log, lexicon, concepts)?)
}

pub fn risk(samples: &[AnnotatedSample], config: RiskConfig) -> Result<RiskReport, ApiError> {
    Ok(metrics::perceived_risk(samples, config)?)
}

pub fn semantic(log: &GenerationLog, threshold: f64) -> Result<MetricReport, ApiError> {
    Ok(metrics::semantic_relation(log, &TokenJaccard, threshold)?)
}

pub fn logical(log: &GenerationLog, entailment: EntailmentConfig) -> Result<MetricReport, ApiError> {
    Ok(metrics::logical_agreement(log, &BaselineEntailment::new(entailment))?)
}

impl RiskRequest {
    pub fn config(&self, defaults: &MetricDefaults) -> RiskConfig {
        RiskConfig {
            gold_rule: self.gold_rule.unwrap_or(defaults.risk.gold_rule),
            benefit_denominator: self.benefit_denominator.unwrap_or(defaults.risk.benefit_denominator),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub recipe: Recipe,
    pub profile: Profile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub recipes: Vec<Recipe>,
    pub profile: Profile,
}

pub fn evaluate(recipe: &Recipe, profile: &Profile, rules: &RuleBook) -> Result<RecipeVerdict, ApiError> {
    Ok(food::evaluate_recipe(recipe, profile, rules)?)
}

pub fn recommend(recipes: &[Recipe], profile: &Profile, rules: &RuleBook) -> Result<Recommendation, ApiError> {
    Ok(food::recommend(recipes, profile, rules)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRequest {
    pub phrases: Vec<String>,
    /// required when the service holds more than one graph
    #[serde(default)]
    pub kg_id: Option<String>,
    #[serde(default)]
    pub config: Option<TreeConfig>,
}

pub fn explain(phrases: &[String], kg: &KnowledgeGraph, config: &TreeConfig) -> Result<ContextTree, ApiError> {
    Ok(build_context_tree(phrases, kg, &TokenJaccard, config)?)
}
