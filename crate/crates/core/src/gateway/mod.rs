//! Single entry point for every multimodal-model call.
//!
//! [`Gateway`] owns prompt construction, retries, output parsing and
//! post-conditions; a [`ModelBackend`] only turns a [`ModelRequest`] into raw
//! text. Two backends ship: [`LiveBackend`] (chat-completions over HTTPS) and
//! [`MockBackend`] (fixture-driven, deterministic).

mod live;
mod mock;
pub mod parse;
pub mod prompts;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{ChatTurn, PhotoRecord, SceneActivity, SceneDetail};

pub use live::{LiveBackend, LiveConfig};
pub use mock::{
    MockAnnotations, MockBackend, MockDetail, MockPair, MockPhoto, MockReply, MockScene,
    MockSelection, MOCK_ANNOTATIONS_FILE,
};

/// Temperature used for every task unless configured otherwise.
pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const MAX_SELECTED_PHOTOS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    DescribePhoto,
    ScoreSimilarity,
    ExtractScene,
    GenStoryline,
    GenReply,
    SelectPhotos,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::DescribePhoto,
        Task::ScoreSimilarity,
        Task::ExtractScene,
        Task::GenStoryline,
        Task::GenReply,
        Task::SelectPhotos,
    ];

    fn index(self) -> usize {
        Task::ALL.iter().position(|t| *t == self).unwrap()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::DescribePhoto => "describe_photo",
            Task::ScoreSimilarity => "score_similarity",
            Task::ExtractScene => "extract_scene",
            Task::GenStoryline => "gen_storyline",
            Task::GenReply => "gen_reply",
            Task::SelectPhotos => "select_photos",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub temperature: f64,
    pub max_output_chars: usize,
}

/// Structured arguments of a request. Live backends only look at the prompt
/// and images; the mock keys its fixtures on these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestSubject {
    Photo { photo_id: String },
    Pair { a: String, b: String },
    Scene { scene_id: u32, photo_ids: Vec<String> },
    Storyline { scenes: Vec<StorylineScene> },
    Reply { scene_id: Option<u32>, turn_index: usize, user_input: String, photo_ids: Vec<String> },
    Select { user_input: String, candidates: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorylineScene {
    pub scene_id: u32,
    pub photo_ids: Vec<String>,
    pub activity_sentence: String,
}

/// Why a request is a follow-up of an earlier attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    Json,
    ShortenActivity,
    StorylineCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub task: Task,
    pub prompt_text: String,
    pub image_refs: Vec<PathBuf>,
    pub params: ModelParams,
    pub subject: RequestSubject,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair: Option<Repair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse<T> {
    pub text: String,
    pub parsed: Option<T>,
    pub raw_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Network or server-side failure; retried with backoff.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("image unreadable: {}", path.display())]
    ImageUnreadable { path: PathBuf },
}

/// Turns a request into raw model text.
pub trait ModelBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ModelRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayErrorKind {
    #[error("image unreadable: {}", .0.display())]
    ImageUnreadable(PathBuf),
    #[error("backend unavailable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("unparseable model output: {0:?}")]
    Unparseable(String),
    #[error("model output violates the task contract: {0}")]
    Contract(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{task}: {kind}")]
pub struct GatewayError {
    pub task: Task,
    pub kind: GatewayErrorKind,
}

impl GatewayError {
    fn new(task: Task, kind: GatewayErrorKind) -> Self {
        GatewayError { task, kind }
    }

    /// Whether resending the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self.kind, GatewayErrorKind::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub temperature: f64,
    pub transport_retries: u32,
    pub parse_reprompts: u32,
    pub backoff_base_ms: u64,
    pub max_requests_per_second: Option<f64>,
    pub max_output_chars: usize,
    pub locale: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            temperature: DEFAULT_TEMPERATURE,
            transport_retries: 2,
            parse_reprompts: 1,
            backoff_base_ms: 500,
            max_requests_per_second: None,
            max_output_chars: 4000,
            locale: "en".to_string(),
        }
    }
}

#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rps: Option<f64>) -> Self {
        let interval = rps.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r));
        RateLimiter { interval, next_slot: Mutex::new(None) }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    config: GatewayConfig,
    descriptions: Mutex<HashMap<(String, PathBuf), String>>,
    calls: [AtomicUsize; 6],
    limiter: RateLimiter,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("model_id", &self.backend.model_id())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, config: GatewayConfig) -> Self {
        let limiter = RateLimiter::new(config.max_requests_per_second);
        Gateway {
            backend,
            config,
            descriptions: Mutex::new(HashMap::new()),
            calls: Default::default(),
            limiter,
        }
    }

    /// Mock gateway with no fixture annotations.
    pub fn mock() -> Self {
        Gateway::new(Arc::new(MockBackend::default()), GatewayConfig::default())
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Number of backend invocations issued for `task`, retries included.
    pub fn backend_calls(&self, task: Task) -> usize {
        self.calls[task.index()].load(Ordering::Relaxed)
    }

    fn params(&self) -> ModelParams {
        ModelParams { temperature: self.config.temperature, max_output_chars: self.config.max_output_chars }
    }

    fn request(&self, task: Task, prompt_text: String, image_refs: Vec<PathBuf>, subject: RequestSubject) -> ModelRequest {
        ModelRequest { task, prompt_text, image_refs, params: self.params(), subject, repair: None }
    }

    /// One logical call: transport retries with exponential backoff.
    pub fn call(&self, request: &ModelRequest) -> Result<ModelResponse<()>, GatewayError> {
        let task = request.task;
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            self.calls[task.index()].fetch_add(1, Ordering::Relaxed);
            let started = Instant::now();
            match self.backend.complete(request) {
                Ok(text) => {
                    return Ok(ModelResponse {
                        text,
                        parsed: None,
                        raw_latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(BackendError::Transport(message)) => {
                    if attempt >= self.config.transport_retries {
                        return Err(GatewayError::new(
                            task,
                            GatewayErrorKind::Transport { attempts: attempt + 1, message },
                        ));
                    }
                    let delay = self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(%task, attempt, delay_ms = delay, "transport failure, retrying: {message}");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(BackendError::Rejected(m)) => {
                    return Err(GatewayError::new(task, GatewayErrorKind::Rejected(m)))
                }
                Err(BackendError::ImageUnreadable { path }) => {
                    return Err(GatewayError::new(task, GatewayErrorKind::ImageUnreadable(path)))
                }
            }
        }
    }

    /// Calls and parses, re-prompting up to `parse_reprompts` times when the
    /// output does not parse.
    fn call_parsed<T>(
        &self,
        mut request: ModelRequest,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<ModelResponse<T>, GatewayError> {
        let base_prompt = request.prompt_text.clone();
        let mut last = String::new();
        for reprompt in 0..=self.config.parse_reprompts {
            if reprompt > 0 {
                request.repair = Some(Repair::Json);
                request.prompt_text = format!("{base_prompt}\n\n{}", prompts::json_repair());
            }
            let resp = self.call(&request)?;
            if let Some(parsed) = parse(&resp.text) {
                return Ok(ModelResponse { text: resp.text, parsed: Some(parsed), raw_latency_ms: resp.raw_latency_ms });
            }
            last = resp.text;
        }
        let excerpt: String = last.chars().take(120).collect();
        Err(GatewayError::new(request.task, GatewayErrorKind::Unparseable(excerpt)))
    }

    /// Single-paragraph description of a photo; cached per photo.
    pub fn describe_photo(&self, photo: &PhotoRecord) -> Result<String, GatewayError> {
        let key = (photo.photo_id.clone(), photo.source_path.clone());
        if let Some(hit) = self.descriptions.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let task = Task::DescribePhoto;
        ensure_readable(task, &photo.source_path)?;
        let req = self.request(
            task,
            prompts::describe_photo(&self.config.locale),
            vec![photo.source_path.clone()],
            RequestSubject::Photo { photo_id: photo.photo_id.clone() },
        );
        let resp = self.call(&req)?;
        let text = resp.text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(GatewayError::new(task, GatewayErrorKind::Contract("empty description".into())));
        }
        self.descriptions.lock().unwrap().insert(key, text.clone());
        Ok(text)
    }

    /// Activity similarity of two photos, clamped to [0, 1].
    pub fn score_similarity(&self, a: &PhotoRecord, b: &PhotoRecord) -> Result<f64, GatewayError> {
        let task = Task::ScoreSimilarity;
        ensure_readable(task, &a.source_path)?;
        ensure_readable(task, &b.source_path)?;
        let req = self.request(
            task,
            prompts::score_similarity(),
            vec![a.source_path.clone(), b.source_path.clone()],
            RequestSubject::Pair { a: a.photo_id.clone(), b: b.photo_id.clone() },
        );
        let resp = self.call_parsed(req, |t| parse::parse_similarity(t).filter(|v| v.is_finite()))?;
        Ok(resp.parsed.unwrap().clamp(0.0, 1.0))
    }

    /// Activity and details for one scene. All scene photos go into a single
    /// request, followed by the portrait when given. An over-long activity
    /// sentence is re-prompted once, then cut at a sentence boundary.
    pub fn extract_scene_info(
        &self,
        scene_id: u32,
        photos: &[&PhotoRecord],
        portrait: Option<&Path>,
        char_budget: usize,
    ) -> Result<(SceneActivity, Vec<SceneDetail>), GatewayError> {
        let task = Task::ExtractScene;
        if photos.is_empty() {
            return Err(GatewayError::new(task, GatewayErrorKind::InvalidRequest("scene has no photos".into())));
        }
        let mut images: Vec<PathBuf> = photos.iter().map(|p| p.source_path.clone()).collect();
        images.extend(portrait.map(Path::to_path_buf));
        for img in &images {
            ensure_readable(task, img)?;
        }
        let mut req = self.request(
            task,
            prompts::extract_scene(char_budget, portrait.is_some()),
            images,
            RequestSubject::Scene { scene_id, photo_ids: photos.iter().map(|p| p.photo_id.clone()).collect() },
        );
        let base_prompt = req.prompt_text.clone();
        let parse = |t: &str| parse::parse_scene(t, char_budget);
        let mut draft = self.call_parsed(req.clone(), parse)?.parsed.unwrap();

        if draft.activity.sentence.chars().count() > char_budget {
            req.repair = Some(Repair::ShortenActivity);
            req.prompt_text = format!("{base_prompt}\n\n{}", prompts::shorten_activity(char_budget, &draft.activity.sentence));
            match self.call_parsed(req, parse) {
                Ok(resp) => {
                    let retry = resp.parsed.unwrap();
                    if retry.activity.sentence.chars().count() <= char_budget {
                        draft = retry;
                    }
                }
                Err(e) => tracing::warn!(scene_id, "shortening re-prompt failed: {e}"),
            }
            draft.activity.sentence = parse::truncate_to_budget(&draft.activity.sentence, char_budget);
        }

        let details = draft
            .details
            .into_iter()
            .enumerate()
            .map(|(i, (category, description))| SceneDetail {
                detail_id: crate::domain::detail_id(scene_id, i + 1),
                category,
                description,
            })
            .collect();
        Ok((draft.activity, details))
    }

    /// One summary sentence per scene, in scene order. A count mismatch is
    /// re-prompted once.
    pub fn generate_storyline(&self, scenes: &[StorylineScene], activities: &[&SceneActivity]) -> Result<Vec<String>, GatewayError> {
        let task = Task::GenStoryline;
        if scenes.is_empty() || scenes.len() != activities.len() {
            return Err(GatewayError::new(task, GatewayErrorKind::InvalidRequest("storyline needs one activity per scene".into())));
        }
        let listed: Vec<(u32, &SceneActivity)> = scenes.iter().zip(activities).map(|(s, a)| (s.scene_id, *a)).collect();
        let mut req = self.request(
            task,
            prompts::generate_storyline(&listed),
            Vec::new(),
            RequestSubject::Storyline { scenes: scenes.to_vec() },
        );
        let base_prompt = req.prompt_text.clone();
        let expected = scenes.len();
        let mut got = 0;
        for attempt in 0..2 {
            let out = self.call_parsed(req.clone(), parse::parse_storyline)?.parsed.unwrap();
            if out.len() == expected {
                return Ok(out);
            }
            got = out.len();
            if attempt == 0 {
                req.repair = Some(Repair::StorylineCount);
                req.prompt_text = format!("{base_prompt}\n\n{}", prompts::storyline_count_fix(expected, got));
            }
        }
        Err(GatewayError::new(
            task,
            GatewayErrorKind::Contract(format!("expected {expected} storyline sentences, got {got}")),
        ))
    }

    /// Free-form reply grounded in the given photos. An empty input is passed
    /// through; the backend may answer with empty text.
    pub fn generate_raw_reply(
        &self,
        user_input: &str,
        history: &[ChatTurn],
        scene_id: Option<u32>,
        turn_index: usize,
        photos: &[(String, PathBuf)],
    ) -> Result<String, GatewayError> {
        let task = Task::GenReply;
        if photos.is_empty() {
            return Err(GatewayError::new(task, GatewayErrorKind::InvalidRequest("no photos for reply".into())));
        }
        let req = self.request(
            task,
            prompts::generate_reply(user_input, history),
            photos.iter().map(|(_, p)| p.clone()).collect(),
            RequestSubject::Reply {
                scene_id,
                turn_index,
                user_input: user_input.to_string(),
                photo_ids: photos.iter().map(|(id, _)| id.clone()).collect(),
            },
        );
        Ok(self.call(&req)?.text.trim().to_string())
    }

    /// Up to five distinct photo ids relevant to `user_input`. Collections of
    /// at most five photos are returned whole without a model call. Ids the
    /// model invents are dropped; if nothing valid remains the first five
    /// candidates are used.
    pub fn select_photos(
        &self,
        user_input: &str,
        history: &[ChatTurn],
        descriptions: &[(String, String)],
    ) -> Result<Vec<String>, GatewayError> {
        let task = Task::SelectPhotos;
        if descriptions.is_empty() {
            return Err(GatewayError::new(task, GatewayErrorKind::InvalidRequest("no photo descriptions".into())));
        }
        if descriptions.len() <= MAX_SELECTED_PHOTOS {
            return Ok(descriptions.iter().map(|(id, _)| id.clone()).collect());
        }
        let req = self.request(
            task,
            prompts::select_photos(user_input, history, descriptions),
            Vec::new(),
            RequestSubject::Select {
                user_input: user_input.to_string(),
                candidates: descriptions.iter().map(|(id, _)| id.clone()).collect(),
            },
        );
        let chosen = self.call_parsed(req, parse::parse_photo_ids)?.parsed.unwrap();
        let valid: BTreeSet<&str> = descriptions.iter().map(|(id, _)| id.as_str()).collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for id in chosen {
            if !valid.contains(id.as_str()) {
                tracing::debug!(%id, "dropping photo id not in the collection");
                continue;
            }
            if seen.insert(id.clone()) {
                out.push(id);
            }
            if out.len() == MAX_SELECTED_PHOTOS {
                break;
            }
        }
        if out.is_empty() {
            tracing::warn!("photo selection returned no valid ids; falling back to the first {MAX_SELECTED_PHOTOS}");
            out = descriptions.iter().take(MAX_SELECTED_PHOTOS).map(|(id, _)| id.clone()).collect();
        }
        Ok(out)
    }
}

fn ensure_readable(task: Task, path: &Path) -> Result<(), GatewayError> {
    match File::open(path) {
        Ok(f) if f.metadata().map(|m| m.is_file()).unwrap_or(false) => Ok(()),
        _ => Err(GatewayError::new(task, GatewayErrorKind::ImageUnreadable(path.to_path_buf()))),
    }
}
