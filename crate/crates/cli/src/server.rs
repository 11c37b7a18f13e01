//! HTTP session service.
//!
//! Collections, trees and sessions are kept in memory and mirrored to a
//! data directory (`collections/{id}/…`, `sessions/{id}.json`) so a
//! restarted service resumes where it stopped. Only paths to photos are
//! stored, never image bytes.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use reviver_core::builder::{build_memory_tree, BuildError, BuildOptions};
use reviver_core::dialogue::DialogueError;
use reviver_core::domain::{
    load_manifest, load_tree, save_json, save_tree, ChatTurn, CollectionManifest, EngineKind, GuidanceKind,
    MemoryTree, Phase, SessionState, Transcript, ValidationReport,
};
use reviver_core::engine::{ChatEngine, EngineError};
use reviver_core::gateway::Gateway;

use crate::config::{Config, ModelMode};
use crate::setup;

const RETRY_ADVICE: &str = "The model service failed for this turn. Send the same message again to retry.";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": message.into() }) }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).unwrap_or(Value::Null);
        self
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        tracing::error!("internal error: {err}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Collection {
    manifest: Mutex<CollectionManifest>,
    /// Directory the mock backend reads its annotations from.
    annotations_dir: Option<PathBuf>,
    gateway: Arc<Gateway>,
    tree: RwLock<Option<Arc<MemoryTree>>>,
}

impl Collection {
    fn tree(&self) -> Option<Arc<MemoryTree>> {
        self.tree.read().unwrap().clone()
    }
}

/// On-disk form of a collection.
#[derive(Serialize, Deserialize)]
struct CollectionRecord {
    manifest: CollectionManifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct SessionRecord {
    engine: EngineKind,
    state: SessionState,
}

struct Session {
    engine: ChatEngine,
    collection: Arc<Collection>,
    state: Arc<tokio::sync::Mutex<SessionState>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub collection_id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

pub struct AppState {
    cfg: Config,
    data_dir: PathBuf,
    collections: RwLock<HashMap<String, Arc<Collection>>>,
    jobs: RwLock<HashMap<String, Job>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    /// Opens (or creates) the data directory and restores what it holds.
    pub fn open(cfg: Config, data_dir: &Path) -> anyhow::Result<Arc<Self>> {
        std::fs::create_dir_all(data_dir.join("collections"))?;
        std::fs::create_dir_all(data_dir.join("sessions"))?;
        let app = Arc::new(AppState {
            cfg,
            data_dir: data_dir.to_path_buf(),
            collections: Default::default(),
            jobs: Default::default(),
            sessions: Default::default(),
        });
        app.restore()?;
        Ok(app)
    }

    fn collection_dir(&self, id: &str) -> PathBuf {
        self.data_dir.join("collections").join(id)
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.data_dir.join("sessions").join(format!("{id}.json"))
    }

    fn restore(&self) -> anyhow::Result<()> {
        for entry in std::fs::read_dir(self.data_dir.join("collections"))? {
            let dir = entry?.path();
            let record_path = dir.join("collection.json");
            if !record_path.exists() {
                continue;
            }
            let record: CollectionRecord = serde_json::from_str(&std::fs::read_to_string(&record_path)?)
                .with_context(|| format!("reading {}", record_path.display()))?;
            let collection = self.make_collection(record.manifest, record.annotations_dir, self.cfg.mode)?;
            let tree_path = dir.join("tree.json");
            if tree_path.exists() {
                *collection.tree.write().unwrap() = Some(Arc::new(load_tree(&tree_path)?));
            }
            let id = collection.manifest.lock().unwrap().collection_id.clone();
            self.collections.write().unwrap().insert(id, collection);
        }
        for entry in std::fs::read_dir(self.data_dir.join("sessions"))? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let record: SessionRecord = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .with_context(|| format!("reading {}", path.display()))?;
            let collection = self.collections.read().unwrap().get(&record.state.collection_id).cloned();
            let Some(collection) = collection else {
                tracing::warn!(session = %record.state.session_id, "collection gone; session not restored");
                continue;
            };
            match self.make_engine(&collection, record.engine) {
                Ok(engine) => {
                    let id = record.state.session_id.clone();
                    let session = Session { engine, collection, state: Arc::new(tokio::sync::Mutex::new(record.state)) };
                    self.sessions.write().unwrap().insert(id, Arc::new(session));
                }
                Err(e) => tracing::warn!(session = %record.state.session_id, "session not restored: {e:?}"),
            }
        }
        Ok(())
    }

    fn make_collection(
        &self,
        manifest: CollectionManifest,
        annotations_dir: Option<PathBuf>,
        mode: ModelMode,
    ) -> anyhow::Result<Arc<Collection>> {
        // the mock backend looks for its annotation file next to a manifest
        let probe = annotations_dir.as_ref().map(|d| d.join("manifest.json"));
        let gateway = Arc::new(self.cfg.gateway_in(mode, probe.as_deref())?);
        Ok(Arc::new(Collection {
            manifest: Mutex::new(manifest),
            annotations_dir,
            gateway,
            tree: RwLock::new(None),
        }))
    }

    fn persist_collection(&self, c: &Collection) -> anyhow::Result<()> {
        let manifest = c.manifest.lock().unwrap().clone();
        let dir = self.collection_dir(&manifest.collection_id);
        std::fs::create_dir_all(&dir)?;
        save_json(&manifest, &dir.join("manifest.json"))?;
        let record = CollectionRecord { manifest, annotations_dir: c.annotations_dir.clone() };
        save_json(&record, &dir.join("collection.json"))?;
        Ok(())
    }

    fn make_engine(&self, c: &Collection, kind: EngineKind) -> anyhow::Result<ChatEngine> {
        match kind {
            EngineKind::Reviver => {
                let tree = c.tree().context("collection has no tree yet; build it first")?;
                let manifest = c.manifest.lock().unwrap().clone();
                setup::reviver(&self.cfg, tree, Some(&manifest), c.gateway.clone())
            }
            EngineKind::Baseline => {
                let mut manifest = c.manifest.lock().unwrap().clone();
                let engine = setup::baseline(&self.cfg, &mut manifest, c.gateway.clone())?;
                *c.manifest.lock().unwrap() = manifest;
                Ok(engine)
            }
        }
    }

    fn collection(&self, id: &str) -> ApiResult<Arc<Collection>> {
        self.collections.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("collection", id))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/collections", post(create_collection))
        .route("/collections/{id}/build", post(start_build))
        .route("/collections/{id}/tree", get(get_tree))
        .route("/jobs/{id}", get(get_job))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .with_state(app)
}

#[derive(Deserialize)]
struct CreateCollection {
    manifest: Option<CollectionManifest>,
    /// Base for relative photo paths of an inline manifest; also where the
    /// mock annotations are looked up.
    base_dir: Option<PathBuf>,
    manifest_path: Option<PathBuf>,
}

async fn create_collection(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateCollection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let unprocessable = |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg);
    let (manifest, annotations_dir) = match (req.manifest, req.manifest_path) {
        (Some(mut m), None) => {
            m.normalize(req.base_dir.as_deref());
            m.check().map_err(|e| unprocessable(e.to_string()))?;
            (m, req.base_dir)
        }
        (None, Some(path)) => {
            let m = load_manifest(&path).map_err(|e| unprocessable(e.to_string()))?;
            (m, path.parent().map(Path::to_path_buf))
        }
        _ => return Err(unprocessable("give exactly one of \"manifest\" or \"manifest_path\"".into())),
    };
    let id = manifest.collection_id.clone();
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(unprocessable(format!("collection_id {id:?} is not usable as an identifier")));
    }
    if app.collections.read().unwrap().contains_key(&id) {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("collection {id:?} already exists")));
    }
    let collection = app.make_collection(manifest, annotations_dir, app.cfg.mode).map_err(ApiError::internal)?;
    app.persist_collection(&collection).map_err(ApiError::internal)?;
    app.collections.write().unwrap().insert(id.clone(), collection);
    Ok((StatusCode::CREATED, Json(json!({ "collection_id": id }))))
}

#[derive(Deserialize, Default)]
struct BuildRequest {
    threshold: Option<f64>,
    mode: Option<ModelMode>,
}

async fn start_build(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let collection = app.collection(&id)?;
    let req: BuildRequest = if body.iter().all(u8::is_ascii_whitespace) {
        BuildRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?
    };
    let threshold = req.threshold.unwrap_or(app.cfg.build.threshold);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("threshold {threshold} not in (0, 1]")));
    }
    let gateway = match req.mode {
        Some(mode) if mode != app.cfg.mode => {
            let probe = collection.annotations_dir.as_ref().map(|d| d.join("manifest.json"));
            Arc::new(app.cfg.gateway_in(mode, probe.as_deref()).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{e:#}")))?)
        }
        _ => collection.gateway.clone(),
    };

    let job_id = uuid::Uuid::new_v4().to_string();
    let job = Job {
        job_id: job_id.clone(),
        collection_id: id.clone(),
        status: JobStatus::Running,
        scenes: None,
        error: None,
        validation: None,
    };
    app.jobs.write().unwrap().insert(job_id.clone(), job);

    let worker_app = app.clone();
    let worker_job = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let manifest = collection.manifest.lock().unwrap().clone();
        let dir = worker_app.collection_dir(&id);
        let opts = BuildOptions {
            threshold,
            exec: worker_app.cfg.build.exec,
            source_manifest: Some(PathBuf::from("manifest.json")),
            ..Default::default()
        };
        let outcome = build_memory_tree(&manifest, None, &gateway, &opts);
        let mut jobs = worker_app.jobs.write().unwrap();
        let job = jobs.get_mut(&worker_job).expect("job registered before spawn");
        match outcome {
            Ok(tree) => {
                if let Err(e) = save_tree(&tree, &dir.join("tree.json")) {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.to_string());
                    return;
                }
                job.status = JobStatus::Succeeded;
                job.scenes = Some(tree.scenes.len());
                *collection.tree.write().unwrap() = Some(Arc::new(tree));
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
                if let BuildError::Invalid(report) = e {
                    job.validation = Some(report);
                }
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn get_job(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    app.jobs.read().unwrap().get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

async fn get_tree(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<MemoryTree>> {
    let tree = app
        .collection(&id)?
        .tree()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("collection {id:?} has no tree yet")))?;
    Ok(Json((*tree).clone()))
}

#[derive(Deserialize)]
struct CreateSession {
    collection_id: String,
    #[serde(default = "default_engine")]
    engine: EngineKind,
}

fn default_engine() -> EngineKind {
    EngineKind::Reviver
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let collection = app.collection(&req.collection_id)?;
    if req.engine == EngineKind::Reviver && collection.tree().is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "collection has no tree yet; build it first"));
    }
    let worker_app = app.clone();
    let worker_collection = collection.clone();
    let kind = req.engine;
    let engine = tokio::task::spawn_blocking(move || {
        let engine = worker_app.make_engine(&worker_collection, kind)?;
        if kind == EngineKind::Baseline {
            worker_app.persist_collection(&worker_collection)?;
        }
        anyhow::Ok(engine)
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("{e:#}")).with("retry_advice", RETRY_ADVICE))?;

    let session_id = uuid::Uuid::new_v4().to_string();
    let state = engine.start_session(session_id.clone());
    let opening = state.history[0].text.clone();
    save_json(&SessionRecord { engine: kind, state: state.clone() }, &app.session_path(&session_id))
        .map_err(ApiError::internal)?;
    let session = Session { engine, collection, state: Arc::new(tokio::sync::Mutex::new(state)) };
    app.sessions.write().unwrap().insert(session_id.clone(), Arc::new(session));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session_id, "engine": kind, "opening_message": opening })),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub visited: usize,
    pub total: usize,
}

fn progress(kind: EngineKind, tree: Option<&MemoryTree>, state: &SessionState) -> Progress {
    let Some(tree) = tree else { return Progress { visited: 0, total: 0 } };
    let visited = match kind {
        EngineKind::Reviver => state.visited_scenes.len(),
        EngineKind::Baseline => state
            .history
            .iter()
            .filter_map(|t| t.annotations.selected_photos.as_ref())
            .flatten()
            .filter_map(|p| tree.scene_of_photo(p))
            .collect::<BTreeSet<_>>()
            .len(),
    };
    Progress { visited, total: tree.scenes.len() }
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: String,
    pub turn_index: usize,
    pub guidance_kind: Option<GuidanceKind>,
    pub scene_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_photos: Option<Vec<String>>,
    pub progress: Progress,
    pub phase: Phase,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(msg): Json<Message>,
) -> ApiResult<Json<MessageReply>> {
    let session = app.session(&id)?;
    let mut guard = session
        .state
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "another turn is in progress for this session"))?;
    if guard.phase == Phase::Concluded {
        return Err(ApiError::new(StatusCode::CONFLICT, "the session has concluded").with("phase", Phase::Concluded));
    }

    let worker_app = app.clone();
    let worker_session = session.clone();
    let (result, state) = tokio::task::spawn_blocking(move || {
        let result = worker_session.engine.reply(&mut guard, &msg.text);
        let record = SessionRecord { engine: worker_session.engine.kind(), state: guard.clone() };
        if let Err(e) = save_json(&record, &worker_app.session_path(&guard.session_id)) {
            tracing::error!(session = %guard.session_id, "could not persist session: {e}");
        }
        (result, record.state)
    })
    .await
    .map_err(ApiError::internal)?;

    let turn: ChatTurn = match result {
        Ok(turn) => turn,
        Err(EngineError::Dialogue(DialogueError::Concluded(_))) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "the session has concluded").with("phase", Phase::Concluded))
        }
        Err(e) => return Err(ApiError::internal(e)),
    };
    if let Some(err) = &turn.annotations.gateway_error {
        return Err(ApiError::new(StatusCode::BAD_GATEWAY, err.clone())
            .with("retry_advice", RETRY_ADVICE)
            .with("reply", &turn.text)
            .with("turn_index", turn.turn_index));
    }
    let kind = session.engine.kind();
    let tree = session.collection.tree();
    Ok(Json(MessageReply {
        reply: turn.text,
        turn_index: turn.turn_index,
        guidance_kind: turn.annotations.guidance_kind,
        scene_id: turn.annotations.selected_scene,
        selected_photos: turn.annotations.selected_photos,
        progress: progress(kind, tree.as_deref(), &state),
        phase: state.phase,
    }))
}

/// Session state without the chat history.
#[derive(Debug, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub collection_id: String,
    pub engine: EngineKind,
    pub current_scene: u32,
    pub visited_scenes: BTreeSet<u32>,
    pub discussed_details: std::collections::BTreeMap<u32, BTreeSet<String>>,
    pub pending_suggestion: Option<u32>,
    pub phase: Phase,
    pub turns: usize,
    pub progress: Progress,
}

async fn get_state(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StateView>> {
    let session = app.session(&id)?;
    let st = session.state.lock().await;
    let kind = session.engine.kind();
    let tree = session.collection.tree();
    Ok(Json(StateView {
        session_id: st.session_id.clone(),
        collection_id: st.collection_id.clone(),
        engine: kind,
        current_scene: st.current_scene,
        visited_scenes: st.visited_scenes.clone(),
        discussed_details: st.discussed_details.clone(),
        pending_suggestion: st.pending_suggestion,
        phase: st.phase,
        turns: st.history.len(),
        progress: progress(kind, tree.as_deref(), &st),
    }))
}

async fn get_transcript(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Transcript>> {
    let session = app.session(&id)?;
    let st = session.state.lock().await;
    Ok(Json(session.engine.transcript(&st)))
}

pub async fn serve(app: Arc<AppState>, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
