//! Python bindings. Structured results cross the boundary as plain Python
//! objects built from the same canonical JSON the CLI and service emit.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use prokno_core::food::{self, Profile, Recipe, RuleBook};
use prokno_core::kg::{self as kg, KnowledgeGraph, TreeConfig};
use prokno_core::metrics::{self, AnnotatedSample, GenerationLog, RiskConfig};
use prokno_core::pk::{self as pk, AnswerValue, PkError};
use prokno_core::qgen::{self as qgen, BaselineEntailment, CandidateQuestion, EntailmentConfig, TagRuleSet};
use prokno_core::text::TokenJaccard;
use prokno_core::triage::{self, SessionState, TriageError};

create_exception!(prokno, ProknoError, PyException);
create_exception!(prokno, DocumentError, ProknoError);
create_exception!(prokno, DomainError, ProknoError);
create_exception!(prokno, SessionDoneError, ProknoError);

fn err(e: impl std::fmt::Display) -> PyErr {
    ProknoError::new_err(e.to_string())
}

fn pk_err(e: PkError) -> PyErr {
    DocumentError::new_err(e.to_string())
}

fn triage_err(e: TriageError) -> PyErr {
    match e {
        TriageError::Domain { .. } => DomainError::new_err(e.to_string()),
        TriageError::SessionDone => SessionDoneError::new_err(e.to_string()),
        other => ProknoError::new_err(other.to_string()),
    }
}

/// Serialize through canonical JSON and hand Python the decoded value.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = prokno_core::to_canonical_json(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn answer(value: &Bound<'_, PyAny>) -> PyResult<AnswerValue> {
    if let Ok(i) = value.extract::<i64>() {
        if !value.is_instance_of::<pyo3::types::PyBool>() {
            return Ok(AnswerValue::Int(i));
        }
    }
    value
        .extract::<String>()
        .map(AnswerValue::Text)
        .map_err(|_| PyValueError::new_err("answers are ints or strings"))
}

#[pyclass(name = "ProcessKnowledgeDoc", frozen)]
struct PyDoc {
    inner: pk::ProcessKnowledgeDoc,
}

#[pymethods]
impl PyDoc {
    /// Parse and validate a document from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        pk::load_pk(text.as_bytes()).map(|inner| PyDoc { inner }).map_err(pk_err)
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            pk::Mode::Flow => "flow",
            pk::Mode::Flat => "flat",
        }
    }

    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.id.clone()).collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("ProcessKnowledgeDoc(id={:?}, mode={:?})", self.inner.id, self.mode())
    }
}

/// Validation report for a document given as JSON text. Documents that do
/// not parse raise `DocumentError`.
#[pyfunction]
fn validate_pk(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    match pk::load_pk(text.as_bytes()) {
        Ok(doc) => to_py(py, &pk::validate_pk(&doc)),
        Err(PkError::Validation(report)) => to_py(py, &report),
        Err(e) => Err(pk_err(e)),
    }
}

#[pyclass(name = "CueLexicon", frozen)]
struct PyLexicon {
    inner: prokno_core::CueLexicon,
    matcher: prokno_core::PhraseMatcher,
}

#[pymethods]
impl PyLexicon {
    #[new]
    fn new(id: String, entries: BTreeMap<String, Vec<String>>) -> PyResult<Self> {
        let inner = prokno_core::CueLexicon::new(id, entries).map_err(err)?;
        let matcher = prokno_core::PhraseMatcher::new(&inner);
        Ok(PyLexicon { inner, matcher })
    }

    #[staticmethod]
    fn from_json(id: String, text: &str) -> PyResult<Self> {
        let inner = prokno_core::CueLexicon::from_json(id, text.as_bytes()).map_err(err)?;
        let matcher = prokno_core::PhraseMatcher::new(&inner);
        Ok(PyLexicon { inner, matcher })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    /// Leftmost-longest concept matches with character offsets.
    fn find_all(&self, py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.matcher.find_all(text))
    }
}

#[pyclass(name = "Session")]
struct PySession {
    doc: Py<PyDoc>,
    state: SessionState,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (doc, session_id = "session"))]
    fn new(doc: Py<PyDoc>, session_id: &str) -> PyResult<Self> {
        let state = triage::start_session(&doc.get().inner, session_id).map_err(triage_err)?;
        Ok(PySession { doc, state })
    }

    /// Current question id, or None once an outcome is reached.
    #[getter]
    fn question(&self) -> Option<String> {
        self.state.current_question().map(str::to_string)
    }

    #[getter]
    fn outcome(&self) -> Option<String> {
        self.state.outcome().map(str::to_string)
    }

    fn submit_answer(&mut self, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let value = answer(value)?;
        triage::submit_answer(&self.doc.get().inner, &mut self.state, value).map_err(triage_err)?;
        Ok(())
    }

    fn what_if(&self, py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let preview = triage::what_if(&self.doc.get().inner, &self.state, &answer(value)?).map_err(triage_err)?;
        to_py(py, &preview)
    }

    fn trace(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &triage::explanation_trace(&self.doc.get().inner, &self.state))
    }

    fn state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.state)
    }
}

#[pyfunction]
fn classify_text(py: Python<'_>, doc: &PyDoc, lexicon: &PyLexicon, text: &str) -> PyResult<Py<PyAny>> {
    let (_, result) =
        triage::classify_session(&doc.inner, &lexicon.matcher, text, "classify").map_err(triage_err)?;
    to_py(py, &result)
}

/// Canonical JSON of `classify_text`, byte-identical to the CLI output.
#[pyfunction]
fn classify_text_json(doc: &PyDoc, lexicon: &PyLexicon, text: &str) -> PyResult<String> {
    let (_, result) =
        triage::classify_session(&doc.inner, &lexicon.matcher, text, "classify").map_err(triage_err)?;
    prokno_core::to_canonical_json(&result).map_err(err)
}

fn entailment(theta_e: f64, theta_n: f64, theta_c: f64) -> EntailmentConfig {
    EntailmentConfig {
        theta_e,
        theta_n,
        theta_c,
    }
}

#[pyfunction]
#[pyo3(signature = (premise, hypothesis, theta_e = 0.6, theta_n = 0.3, theta_c = 0.5))]
fn entailment_score(
    py: Python<'_>,
    premise: &str,
    hypothesis: &str,
    theta_e: f64,
    theta_n: f64,
    theta_c: f64,
) -> PyResult<Py<PyAny>> {
    let verdict = qgen::baseline_entailment(premise, hypothesis, &entailment(theta_e, theta_n, theta_c)).map_err(err)?;
    to_py(py, &verdict)
}

/// Filter and rank candidates given as lists of dicts (or JSON text).
#[pyfunction]
#[pyo3(signature = (candidates_json, history_json = "[]", rules_json = None))]
fn filter_and_rank(py: Python<'_>, candidates_json: &str, history_json: &str, rules_json: Option<&str>) -> PyResult<Py<PyAny>> {
    let candidates: Vec<CandidateQuestion> = from_json(candidates_json)?;
    let history: Vec<CandidateQuestion> = from_json(history_json)?;
    let rules = match rules_json {
        Some(text) => TagRuleSet::from_json(text.as_bytes()).map_err(err)?,
        None => qgen::default_tag_rules(),
    };
    let scorer = BaselineEntailment::default();
    to_py(py, &qgen::filter_and_rank(&candidates, &history, &rules, &scorer))
}

#[pyfunction]
fn default_tag_rules(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &qgen::default_tag_rules())
}

#[pyfunction]
#[pyo3(name = "avg_unsafe_matches", signature = (query, generations, lexicon, harmful_concepts = None))]
fn harmful_matches(
    py: Python<'_>,
    query: String,
    generations: Vec<String>,
    lexicon: &PyLexicon,
    harmful_concepts: Option<BTreeSet<String>>,
) -> PyResult<Py<PyAny>> {
    let log = GenerationLog { query, generations };
    to_py(py, &metrics::avg_unsafe_matches(&log, &lexicon.inner, harmful_concepts.as_ref()).map_err(err)?)
}

/// `samples_json` is a JSON array of {sample_id, predicted, annotators}.
#[pyfunction]
#[pyo3(signature = (samples_json, gold_rule = "plurality", benefit_denominator = "verbatim"))]
fn perceived_risk(py: Python<'_>, samples_json: &str, gold_rule: &str, benefit_denominator: &str) -> PyResult<Py<PyAny>> {
    let samples: Vec<AnnotatedSample> = from_json(samples_json)?;
    let config: RiskConfig = serde_json::from_value(serde_json::json!({
        "gold_rule": gold_rule,
        "benefit_denominator": benefit_denominator,
    }))
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &metrics::perceived_risk(&samples, config).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (query, generations, threshold = 0.5))]
fn semantic_relation(py: Python<'_>, query: String, generations: Vec<String>, threshold: f64) -> PyResult<Py<PyAny>> {
    let log = GenerationLog { query, generations };
    to_py(py, &metrics::semantic_relation(&log, &TokenJaccard, threshold).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (query, generations, theta_e = 0.6, theta_n = 0.3, theta_c = 0.5))]
fn logical_agreement(
    py: Python<'_>,
    query: String,
    generations: Vec<String>,
    theta_e: f64,
    theta_n: f64,
    theta_c: f64,
) -> PyResult<Py<PyAny>> {
    let log = GenerationLog { query, generations };
    let scorer = BaselineEntailment::new(entailment(theta_e, theta_n, theta_c));
    to_py(py, &metrics::logical_agreement(&log, &scorer).map_err(err)?)
}

#[pyclass(name = "KnowledgeGraph", frozen)]
struct PyGraph {
    inner: KnowledgeGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        kg::load_kg(text.as_bytes()).map(|inner| PyGraph { inner }).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.nodes.len()
    }

    #[pyo3(signature = (phrases, theta_anchor = 0.6, theta_stop = 0.8, max_depth = 6))]
    fn context_tree(
        &self,
        py: Python<'_>,
        phrases: Vec<String>,
        theta_anchor: f64,
        theta_stop: f64,
        max_depth: usize,
    ) -> PyResult<Py<PyAny>> {
        let config = TreeConfig {
            theta_anchor,
            theta_stop,
            max_depth,
        };
        to_py(py, &kg::build_context_tree(&phrases, &self.inner, &TokenJaccard, &config).map_err(err)?)
    }
}

#[pyclass(name = "RuleBook", frozen)]
struct PyRuleBook {
    inner: RuleBook,
}

#[pymethods]
impl PyRuleBook {
    #[new]
    #[pyo3(signature = (actions_json = "[]", dietary_json = "[]"))]
    fn new(actions_json: &str, dietary_json: &str) -> PyResult<Self> {
        let actions = RuleBook::parse_actions(actions_json.as_bytes()).map_err(err)?;
        let dietary = RuleBook::parse_dietary(dietary_json.as_bytes()).map_err(err)?;
        RuleBook::new(actions, dietary).map(|inner| PyRuleBook { inner }).map_err(err)
    }

    fn conditions(&self) -> Vec<String> {
        self.inner.conditions().into_iter().map(str::to_string).collect()
    }

    /// Verdict for one recipe (JSON object) under a profile (JSON object).
    fn evaluate(&self, py: Python<'_>, recipe_json: &str, profile_json: &str) -> PyResult<Py<PyAny>> {
        let recipe: Recipe = from_json(recipe_json)?;
        let profile: Profile = from_json(profile_json)?;
        to_py(py, &food::evaluate_recipe(&recipe, &profile, &self.inner).map_err(err)?)
    }

    fn recommend(&self, py: Python<'_>, recipes_jsonl: &str, profile_json: &str) -> PyResult<Py<PyAny>> {
        let recipes = food::parse_recipes(recipes_jsonl).map_err(err)?;
        let profile: Profile = from_json(profile_json)?;
        to_py(py, &food::recommend(&recipes, &profile, &self.inner).map_err(err)?)
    }
}

#[pymodule]
fn prokno(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ProknoError", py.get_type::<ProknoError>())?;
    m.add("DocumentError", py.get_type::<DocumentError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("SessionDoneError", py.get_type::<SessionDoneError>())?;
    m.add_class::<PyDoc>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyRuleBook>()?;
    m.add_function(wrap_pyfunction!(validate_pk, m)?)?;
    m.add_function(wrap_pyfunction!(classify_text, m)?)?;
    m.add_function(wrap_pyfunction!(classify_text_json, m)?)?;
    m.add_function(wrap_pyfunction!(entailment_score, m)?)?;
    m.add_function(wrap_pyfunction!(filter_and_rank, m)?)?;
    m.add_function(wrap_pyfunction!(default_tag_rules, m)?)?;
    m.add_function(wrap_pyfunction!(harmful_matches, m)?)?;
    m.add_function(wrap_pyfunction!(perceived_risk, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_relation, m)?)?;
    m.add_function(wrap_pyfunction!(logical_agreement, m)?)?;
    Ok(())
}
