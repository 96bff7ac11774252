//! HTTP+JSON session API for stepping and inspecting live training runs.
//!
//! Every session owns a [`Trainer`]. Requests against one session are
//! serialized by its mutex; different sessions proceed independently.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use embedscope_core::embeddings::{Embeddings, Neighbor};
use embedscope_core::model::Activation;
use embedscope_core::pca::{self, Basis};
use embedscope_core::{
    presets, Architecture, Corpus, Error, ModelConfig, ModelState, Objective, Schedule, StepSummary, TrainPlan, Trainer,
    Vocabulary,
};

/// Upper bound on a single step request.
pub const MAX_STEP: u64 = 10_000_000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NonFiniteLoss { .. } | Error::NonFiniteWeights { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(e.status(), e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn default_dim() -> usize {
    10
}
fn default_window() -> usize {
    2
}
fn default_negative() -> usize {
    5
}
fn default_eta() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_min_count() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

/// Body of `POST /sessions`. Either `corpus` or `preset` must be given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub corpus: Option<String>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "cbow")]
    pub mode: Architecture,
    #[serde(default = "softmax")]
    pub objective: Objective,
    #[serde(default = "default_negative")]
    pub negative: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default)]
    pub shuffle: bool,
}

fn cbow() -> Architecture {
    Architecture::Cbow
}
fn softmax() -> Objective {
    Objective::Softmax
}

impl Default for CreateRequest {
    fn default() -> Self {
        Self {
            corpus: None,
            preset: None,
            dim: default_dim(),
            window: default_window(),
            mode: Architecture::Cbow,
            objective: Objective::Softmax,
            negative: default_negative(),
            eta: default_eta(),
            seed: default_seed(),
            min_count: default_min_count(),
            lowercase: true,
            shuffle: false,
        }
    }
}

pub struct Session {
    trainer: Trainer,
    vocab: Vocabulary,
    corpus: String,
    window: usize,
    version: u64,
}

impl Session {
    pub fn create(req: &CreateRequest) -> ApiResult<Self> {
        let corpus = match (&req.corpus, &req.preset) {
            (Some(text), None) => text.clone(),
            (None, Some(name)) => presets::by_name(name)
                .ok_or_else(|| ApiError::bad_request(format!("unknown preset {name:?}")))?
                .to_owned(),
            (None, None) => return Err(ApiError::bad_request("one of corpus or preset is required")),
            (Some(_), Some(_)) => return Err(ApiError::bad_request("corpus and preset are mutually exclusive")),
        };
        if !(req.eta.is_finite() && req.eta > 0.0) {
            return Err(ApiError::bad_request(format!("eta must be positive, got {}", req.eta)));
        }
        let Corpus { vocab, ids } = Corpus::from_text(&corpus, req.lowercase, req.min_count)?;
        let config = ModelConfig {
            vocab_size: vocab.len(),
            dim: req.dim,
            architecture: req.mode,
            objective: req.objective,
            negatives: req.negative,
            eta: req.eta,
        };
        let plan = TrainPlan { schedule: Schedule::Constant, shuffle: req.shuffle, ..TrainPlan::new(1, req.eta, req.seed) };
        let trainer = Trainer::from_corpus(&ids, req.window, config, vocab.counts(), plan)?;
        Ok(Self { trainer, vocab, corpus, window: req.window, version: 0 })
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Advances the trainer by `n` instances. The version moves whenever
    /// any instance was consumed, even if a later one failed.
    pub fn step(&mut self, n: u64) -> embedscope_core::Result<StepSummary> {
        let before = self.trainer.steps_done();
        let result = self.trainer.step_n(n);
        if self.trainer.steps_done() != before {
            self.version += 1;
        }
        result
    }

    pub fn corpus(&self) -> &str {
        &self.corpus
    }

    fn state(&self) -> &ModelState {
        &self.trainer.model().state
    }

    /// Labels of the output rows: words, or inner-unit names under hs.
    fn output_labels(&self) -> Vec<String> {
        match self.trainer.model().config.objective {
            Objective::Hierarchical => (0..self.state().output.rows()).map(|i| format!("#{i}")).collect(),
            _ => self.vocab.words().to_vec(),
        }
    }

    pub fn snapshot(&self, id: &str) -> Snapshot {
        let model = self.trainer.model();
        Snapshot {
            id: id.to_owned(),
            version: self.version,
            mode: model.config.architecture,
            objective: model.config.objective,
            vocab_size: model.config.vocab_size,
            dim: model.config.dim,
            window: self.window,
            negative: model.config.negatives,
            words: self.vocab.words().to_vec(),
            counts: self.vocab.counts().to_vec(),
            output_labels: self.output_labels(),
            input: self.state().input.to_rows(),
            output: self.state().output.to_rows(),
            instances_per_epoch: self.trainer.instances().len(),
            instances_done: self.trainer.steps_done(),
            epoch: self.trainer.epoch(),
            position: self.trainer.position(),
            eta: self.trainer.current_eta(),
            digest: digest(self.state()),
        }
    }
}

/// SHA-256 over the shapes and the little-endian bit patterns of both matrices.
pub fn digest(state: &ModelState) -> String {
    let mut h = Sha256::new();
    for m in [&state.input, &state.output] {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for x in m.as_slice() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub version: u64,
    pub mode: Architecture,
    pub objective: Objective,
    pub vocab_size: usize,
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub words: Vec<String>,
    pub counts: Vec<u64>,
    pub output_labels: Vec<String>,
    pub input: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    pub instances_per_epoch: usize,
    pub instances_done: u64,
    pub epoch: u64,
    pub position: usize,
    pub eta: f64,
    pub digest: String,
}

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    fn insert(&self, session: Session) -> String {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n}");
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    fn get(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    fn remove(&self, id: &str) -> ApiResult<()> {
        lock(&self.sessions).remove(id).map(|_| ()).ok_or_else(|| ApiError::not_found(id))
    }
}

// a panic inside one handler must not wedge the session for good
fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn router() -> Router {
    router_with(Arc::new(AppState::default()))
}

pub fn router_with(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/presets", get(list_presets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/activate", post(activate))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/pca", get(get_pca))
        .route("/sessions/{id}/eta", post(set_eta))
        .route("/sessions/{id}/neighbors", get(neighbors))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

type Shared = State<Arc<AppState>>;

async fn list_presets() -> Json<serde_json::Value> {
    let corpora: HashMap<&str, &str> = presets::NAMES.iter().map(|&n| (n, presets::by_name(n).unwrap_or(""))).collect();
    Json(json!({ "names": presets::NAMES, "corpora": corpora }))
}

async fn create_session(
    State(app): Shared,
    body: std::result::Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Snapshot>)> {
    let Json(req) = body?;
    let session = Session::create(&req)?;
    let mut snap = session.snapshot("");
    snap.id = app.insert(session);
    Ok((StatusCode::CREATED, Json(snap)))
}

async fn delete_session(State(app): Shared, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub version: u64,
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub instances_done: u64,
    pub epoch: u64,
    pub position: usize,
    pub eta: f64,
}

async fn step(
    State(app): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<StepRequest>, JsonRejection>,
) -> ApiResult<Json<StepResponse>> {
    let Json(StepRequest { n }) = body?;
    if n == 0 || n > MAX_STEP {
        return Err(ApiError::bad_request(format!("n must be in 1..={MAX_STEP}, got {n}")));
    }
    let session = app.get(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut s = lock(&session);
        let summary = s.step(n)?;
        Ok(Json(StepResponse {
            version: s.version,
            losses: summary.losses,
            mean_loss: summary.mean_loss,
            instances_done: summary.instances_done,
            epoch: summary.epoch,
            position: summary.position,
            eta: s.trainer.current_eta(),
        }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivateRequest {
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActivateResponse {
    pub version: u64,
    pub words: Vec<String>,
    #[serde(flatten)]
    pub activation: Activation,
}

async fn activate(
    State(app): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<ActivateRequest>, JsonRejection>,
) -> ApiResult<Json<ActivateResponse>> {
    let Json(req) = body?;
    let session = app.get(&id)?;
    let s = lock(&session);
    let activation = s.trainer.model().activate(&req.ids)?;
    let words = req.ids.iter().map(|&i| s.vocab.words()[i].clone()).collect();
    Ok(Json(ActivateResponse { version: s.version, words, activation }))
}

#[derive(Debug, Deserialize)]
pub struct StateQuery {
    pub version: Option<u64>,
}

async fn get_state(
    State(app): Shared,
    Path(id): Path<String>,
    query: std::result::Result<Query<StateQuery>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Query(q) = query?;
    let session = app.get(&id)?;
    let s = lock(&session);
    if q.version == Some(s.version) {
        return Ok(Json(json!({ "id": id, "version": s.version, "unchanged": true })));
    }
    let snap = serde_json::to_value(s.snapshot(&id)).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(snap))
}

#[derive(Debug, Deserialize)]
pub struct PcaQuery {
    #[serde(default)]
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResponse {
    pub version: u64,
    pub basis: Basis,
    pub words: Vec<String>,
    pub output_labels: Vec<String>,
    pub input: Vec<[f64; 2]>,
    pub output: Vec<[f64; 2]>,
    pub explained_variance: [f64; 2],
    pub components: Vec<Vec<f64>>,
}

async fn get_pca(
    State(app): Shared,
    Path(id): Path<String>,
    query: std::result::Result<Query<PcaQuery>, QueryRejection>,
) -> ApiResult<Json<PcaResponse>> {
    let Query(q) = query?;
    let session = app.get(&id)?;
    let s = lock(&session);
    let state = s.state();
    let p = pca::project(&state.input, &state.output, q.basis);
    Ok(Json(PcaResponse {
        version: s.version,
        basis: q.basis,
        words: s.vocab.words().to_vec(),
        output_labels: s.output_labels(),
        input: p.input,
        output: p.output,
        explained_variance: p.explained_variance,
        components: p.components,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaRequest {
    pub eta: f64,
}

async fn set_eta(
    State(app): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<EtaRequest>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(req) = body?;
    let session = app.get(&id)?;
    let mut s = lock(&session);
    s.trainer.set_learning_rate(req.eta)?;
    Ok(Json(json!({ "id": id, "version": s.version, "eta": s.trainer.current_eta() })))
}

#[derive(Debug, Deserialize)]
pub struct NeighborsQuery {
    pub word: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborsResponse {
    pub version: u64,
    pub word: String,
    pub neighbors: Vec<Neighbor>,
}

async fn neighbors(
    State(app): Shared,
    Path(id): Path<String>,
    query: std::result::Result<Query<NeighborsQuery>, QueryRejection>,
) -> ApiResult<Json<NeighborsResponse>> {
    let Query(q) = query?;
    let session = app.get(&id)?;
    let s = lock(&session);
    let emb = Embeddings::new(s.vocab.words().to_vec(), s.state().input.clone())?;
    let neighbors = emb.neighbors(&q.word, q.k)?;
    Ok(Json(NeighborsResponse { version: s.version, word: q.word, neighbors }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(corpus: &str) -> CreateRequest {
        CreateRequest { corpus: Some(corpus.into()), dim: 2, ..CreateRequest::default() }
    }

    #[test]
    fn digest_tracks_bits() {
        let s = Session::create(&request("a b a b")).unwrap();
        let mut state = s.state().clone();
        let d0 = digest(&state);
        assert_eq!(d0.len(), 64);
        state.output.row_mut(0)[0] = -0.0;
        assert_ne!(digest(&state), d0);
    }

    #[test]
    fn create_validates() {
        assert!(Session::create(&CreateRequest { dim: 0, ..request("a b") }).is_err());
        assert!(Session::create(&request("a a a")).is_err());
        assert!(Session::create(&CreateRequest { eta: 0.0, ..request("a b") }).is_err());
        assert!(Session::create(&CreateRequest::default()).is_err());
        let both = CreateRequest { preset: Some("analogy".into()), ..request("a b") };
        assert!(Session::create(&both).is_err());
        let preset = CreateRequest { corpus: None, preset: Some("alternating".into()), ..CreateRequest::default() };
        assert_eq!(Session::create(&preset).unwrap().vocab.len(), 2);
    }

    #[test]
    fn hs_output_rows_are_inner_units() {
        let s = Session::create(&CreateRequest { objective: Objective::Hierarchical, ..request("a b c a b a") }).unwrap();
        assert_eq!(s.output_labels(), ["#0", "#1"]);
        assert_eq!(s.snapshot("x").output.len(), 2);
    }
}
