//! The JSON-over-HTTP API.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;

use prokno_core::metrics::GenerationLog;
use prokno_core::pk::ProcessKnowledgeDoc;
use prokno_core::triage::{self, SessionState};
use prokno_core::{explanation_trace, to_canonical_json, CueLexicon};

use crate::artifacts::Artifacts;
use crate::config::MetricDefaults;
use crate::error::ApiError;
use crate::ops::{self, *};

struct SessionEntry {
    state: SessionState,
    last_used: Instant,
}

/// In-memory sessions. The outer lock only guards the map; each session has
/// its own async lock, so requests to one session run one at a time while
/// other sessions proceed in parallel.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<SessionEntry>>>>,
    idle_timeout: Duration,
}

impl SessionStore {
    pub fn new(idle_timeout: Duration) -> Self {
        SessionStore {
            sessions: Mutex::new(HashMap::new()),
            idle_timeout,
        }
    }

    fn insert(&self, state: SessionState) {
        let entry = SessionEntry {
            state,
            last_used: Instant::now(),
        };
        let mut map = self.sessions.lock().expect("session map poisoned");
        map.insert(entry.state.session_id.clone(), Arc::new(tokio::sync::Mutex::new(entry)));
    }

    fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<SessionEntry>>> {
        self.sessions.lock().expect("session map poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop sessions idle for longer than the timeout as of `now`. Sessions
    /// currently locked by a request are in use and are kept.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let before = map.len();
        map.retain(|_, entry| match entry.try_lock() {
            Ok(e) => now.saturating_duration_since(e.last_used) <= self.idle_timeout,
            Err(_) => true,
        });
        before - map.len()
    }
}

pub struct AppState {
    pub artifacts: Artifacts,
    pub defaults: MetricDefaults,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(artifacts: Artifacts, defaults: MetricDefaults, idle_timeout: Duration) -> Self {
        AppState {
            artifacts,
            defaults,
            sessions: SessionStore::new(idle_timeout),
        }
    }

    fn doc(&self, id: &str) -> Result<&ProcessKnowledgeDoc, ApiError> {
        self.artifacts.docs.get(id).ok_or_else(|| ApiError::not_found("document", id))
    }
}

type Shared = Arc<AppState>;

/// 200 with a canonical JSON body.
pub struct Canonical(pub String);

impl IntoResponse for Canonical {
    fn into_response(self) -> Response {
        (StatusCode::OK, [("content-type", "application/json")], self.0).into_response()
    }
}

fn respond<T: Serialize>(value: &T) -> Result<Canonical, ApiError> {
    to_canonical_json(value)
        .map(Canonical)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), ""))
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("parse_error", e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/pk", get(list_docs))
        .route("/sessions", post(start))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/classify", post(classify))
        .route("/candidates/validate", post(candidates))
        .route("/metrics/{kind}", post(metric))
        .route("/recipes/evaluate", post(recipes_evaluate))
        .route("/recipes/recommend", post(recipes_recommend))
        .route("/explain/tree", post(explain_tree))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", "") })
        .with_state(state)
}

fn view(doc: &ProcessKnowledgeDoc, state: &SessionState) -> SessionView {
    SessionView {
        session_id: state.session_id.clone(),
        question: state.current_question().and_then(|id| doc.node(id)).map(QuestionView::from),
        outcome: state.outcome().map(str::to_string),
        trace: explanation_trace(doc, state),
    }
}

async fn list_docs(State(app): State<Shared>) -> Result<Canonical, ApiError> {
    let docs: Vec<DocSummary> = app.artifacts.docs.values().map(DocSummary::from).collect();
    respond(&docs)
}

async fn start(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: StartRequest = parse(&body)?;
    let doc = app.doc(&req.doc_id)?;
    let state = triage::start_session(doc, uuid::Uuid::new_v4().to_string())?;
    let out = view(doc, &state);
    app.sessions.insert(state);
    respond(&out)
}

async fn with_session<T>(
    app: &AppState,
    id: &str,
    f: impl FnOnce(&ProcessKnowledgeDoc, &mut SessionState) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let entry = app.sessions.get(id).ok_or_else(|| ApiError::not_found("session", id))?;
    let mut entry = entry.lock().await;
    entry.last_used = Instant::now();
    let doc = app.doc(&entry.state.doc_id)?;
    f(doc, &mut entry.state)
}

async fn answer(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: AnswerRequest = parse(&body)?;
    let out = with_session(&app, &id, |doc, state| {
        triage::submit_answer(doc, state, req.value)?;
        Ok(view(doc, state))
    })
    .await?;
    respond(&out)
}

async fn trace(State(app): State<Shared>, Path(id): Path<String>) -> Result<Canonical, ApiError> {
    let out = with_session(&app, &id, |doc, state| Ok(explanation_trace(doc, state))).await?;
    respond(&out)
}

async fn whatif(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: AnswerRequest = parse(&body)?;
    let out = with_session(&app, &id, |doc, state| Ok(triage::what_if(doc, state, &req.value)?)).await?;
    respond(&out)
}

async fn classify(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: ClassifyRequest = parse(&body)?;
    let doc = app.doc(&req.doc_id)?;
    let lexicon_id = req.lexicon_id.as_deref().unwrap_or(&req.doc_id);
    let lexicon = app
        .artifacts
        .lexicons
        .get(lexicon_id)
        .ok_or_else(|| ApiError::not_found("lexicon", lexicon_id))?;
    if !req.open_session {
        let (_, result) = triage::classify_session(doc, &lexicon.matcher, &req.text, "classify")?;
        return respond(&result);
    }
    let id = uuid::Uuid::new_v4().to_string();
    let (state, result) = triage::classify_session(doc, &lexicon.matcher, &req.text, id.clone())?;
    app.sessions.insert(state);
    let mut body = serde_json::to_value(&result).expect("classification serializes");
    body["session_id"] = id.into();
    respond(&body)
}

async fn candidates(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: CandidatesRequest = parse(&body)?;
    let entailment = req.entailment.unwrap_or(app.defaults.entailment);
    respond(&validate_candidates(&req.history, &req.candidates, req.rules.as_ref(), entailment))
}

async fn metric(State(app): State<Shared>, Path(kind): Path<String>, body: Bytes) -> Result<Canonical, ApiError> {
    match kind.as_str() {
        "unsafe" => {
            let req: UnsafeRequest = parse(&body)?;
            let log = GenerationLog {
                query: req.query,
                generations: req.generations,
            };
            let inline;
            let lexicon = match (&req.lexicon_id, req.lexicon) {
                (Some(_), Some(_)) => {
                    return Err(ApiError::bad_request("invalid_input", "give lexicon_id or lexicon, not both"))
                }
                (Some(id), None) => {
                    &app.artifacts
                        .lexicons
                        .get(id)
                        .ok_or_else(|| ApiError::not_found("lexicon", id))?
                        .lexicon
                }
                (None, Some(entries)) => {
                    inline = CueLexicon::new("inline", entries)
                        .map_err(|e| ApiError::bad_request("invalid_lexicon", e.to_string()))?;
                    &inline
                }
                (None, None) => return Err(ApiError::bad_request("invalid_input", "a lexicon is required")),
            };
            respond(&ops::unsafe_matches(&log, lexicon, req.harmful_concepts.as_ref())?)
        }
        "risk" => {
            let req: RiskRequest = parse(&body)?;
            respond(&ops::risk(&req.samples, req.config(&app.defaults))?)
        }
        "semantic" => {
            let req: SemanticRequest = parse(&body)?;
            let log = GenerationLog {
                query: req.query,
                generations: req.generations,
            };
            respond(&ops::semantic(&log, req.threshold.unwrap_or(app.defaults.semantic_threshold))?)
        }
        "logical" => {
            let req: LogicalRequest = parse(&body)?;
            let log = GenerationLog {
                query: req.query,
                generations: req.generations,
            };
            respond(&ops::logical(&log, req.entailment.unwrap_or(app.defaults.entailment))?)
        }
        other => Err(ApiError::not_found("metric", other)),
    }
}

async fn recipes_evaluate(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: EvaluateRequest = parse(&body)?;
    respond(&ops::evaluate(&req.recipe, &req.profile, &app.artifacts.rules)?)
}

async fn recipes_recommend(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: RecommendRequest = parse(&body)?;
    respond(&ops::recommend(&req.recipes, &req.profile, &app.artifacts.rules)?)
}

async fn explain_tree(State(app): State<Shared>, body: Bytes) -> Result<Canonical, ApiError> {
    let req: TreeRequest = parse(&body)?;
    let graphs = &app.artifacts.graphs;
    let kg = match &req.kg_id {
        Some(id) => graphs.get(id).ok_or_else(|| ApiError::not_found("graph", id))?,
        None if graphs.len() == 1 => graphs.values().next().expect("one graph"),
        None => return Err(ApiError::bad_request("invalid_input", "kg_id is required")),
    };
    let config = req.config.unwrap_or(app.defaults.tree);
    respond(&ops::explain(&req.phrases, kg, &config)?)
}

/// Serve until ctrl-c, sweeping idle sessions in the background.
pub async fn serve(state: Arc<AppState>, bind: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let sweeper = {
        let state = state.clone();
        let period = (state.sessions.idle_timeout / 2).max(Duration::from_secs(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                state.sessions.evict_idle(Instant::now());
            }
        })
    };
    eprintln!("listening on {}", listener.local_addr()?);
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eviction_drops_only_idle_sessions() {
        let store = SessionStore::new(Duration::from_secs(10));
        let doc = prokno_core::fixtures::toy_flow();
        store.insert(triage::start_session(&doc, "a").unwrap());
        store.insert(triage::start_session(&doc, "b").unwrap());
        let now = Instant::now();
        assert_eq!(store.evict_idle(now), 0);
        let held = store.get("a").unwrap();
        let _guard = held.try_lock().unwrap();
        assert_eq!(store.evict_idle(now + Duration::from_secs(11)), 1);
        assert!(store.get("a").is_some());
        assert!(store.get("b").is_none());
    }
}
