//! Chat-completions backend over HTTPS.

use std::fs;
use std::path::Path;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ModelBackend, ModelRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model_id: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model_id: "gpt-4o".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_secs: 120,
        }
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl LiveBackend {
    pub fn from_env(config: LiveConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| format!("environment variable {} is not set", config.api_key_env))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LiveBackend { config, api_key, agent })
    }

    fn body(&self, req: &ModelRequest) -> Result<Value, BackendError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt_text})];
        for path in &req.image_refs {
            content.push(json!({"type": "image_url", "image_url": {"url": data_url(path)?}}));
        }
        Ok(json!({
            "model": self.config.model_id,
            "temperature": req.params.temperature,
            // rough chars-per-token conversion
            "max_tokens": (req.params.max_output_chars / 3).max(64),
            "messages": [{"role": "user", "content": content}],
        }))
    }
}

fn data_url(path: &Path) -> Result<String, BackendError> {
    let bytes = fs::read(path).map_err(|_| BackendError::ImageUnreadable { path: path.to_path_buf() })?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
}

impl ModelBackend for LiveBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        let body = self.body(req)?;
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Transport(format!("HTTP {status}: {text}"))),
            _ => return Err(BackendError::Rejected(format!("HTTP {status}: {text}"))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("bad JSON body: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Rejected(format!("response without message content: {text}")))
    }
}
