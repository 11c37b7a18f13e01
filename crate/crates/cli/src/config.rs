//! Service and CLI configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use reviver_core::builder::DEFAULT_SIMILARITY_THRESHOLD;
use reviver_core::dialogue::DialogueConfig;
use reviver_core::gateway::{Gateway, GatewayConfig, LiveBackend, LiveConfig, MockBackend};
use reviver_core::Exec;

pub const MODE_ENV: &str = "REVIVER_MODEL_MODE";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    #[default]
    Mock,
    Live,
}

impl std::str::FromStr for ModelMode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(ModelMode::Mock),
            "live" => Ok(ModelMode::Live),
            other => bail!("unknown model mode {other:?} (expected mock|live)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub threshold: f64,
    pub exec: Exec,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { threshold: DEFAULT_SIMILARITY_THRESHOLD, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub mode: ModelMode,
    pub live: LiveConfig,
    pub gateway: GatewayConfig,
    pub build: BuildConfig,
    /// Keyword lists; when absent the defaults for the collection's locale
    /// are used.
    pub dialogue: Option<DialogueConfig>,
    pub data_dir: Option<PathBuf>,
}

impl Config {
    /// Reads `path` (if given), then applies `REVIVER_MODEL_MODE`.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Ok(mode) = std::env::var(MODE_ENV) {
            if !mode.is_empty() {
                cfg.mode = mode.parse()?;
            }
        }
        Ok(cfg)
    }

    pub fn dialogue_for(&self, locale: &str) -> DialogueConfig {
        self.dialogue.clone().unwrap_or_else(|| DialogueConfig::for_locale(locale))
    }

    /// Gateway for a collection. In mock mode the fixture annotations next
    /// to `manifest_path` drive the answers.
    pub fn gateway(&self, manifest_path: Option<&Path>) -> anyhow::Result<Gateway> {
        self.gateway_in(self.mode, manifest_path)
    }

    pub fn gateway_in(&self, mode: ModelMode, manifest_path: Option<&Path>) -> anyhow::Result<Gateway> {
        let backend: Arc<dyn reviver_core::gateway::ModelBackend> = match mode {
            ModelMode::Mock => match manifest_path {
                Some(p) => Arc::new(MockBackend::for_manifest(p)?),
                None => Arc::new(MockBackend::default()),
            },
            ModelMode::Live => Arc::new(LiveBackend::from_env(self.live.clone()).map_err(anyhow::Error::msg)?),
        };
        Ok(Gateway::new(backend, self.gateway.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides() {
        let cfg: Config = toml::from_str(
            r#"
            mode = "live"
            [gateway]
            temperature = 0.2
            [build]
            threshold = 0.4
            exec = "sequential"
            [live]
            model_id = "some-vision-model"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, ModelMode::Live);
        assert_eq!(cfg.gateway.temperature, 0.2);
        assert_eq!(cfg.gateway.transport_retries, 2);
        assert_eq!(cfg.build.exec, Exec::Sequential);
        assert_eq!(cfg.live.model_id, "some-vision-model");
        assert_eq!(cfg.live.api_key_env, "OPENAI_API_KEY");
    }

    #[test]
    fn empty_config_is_mock() {
        let cfg: Config = toml::from_str("").unwrap();
        assert_eq!(cfg.mode, ModelMode::Mock);
        assert_eq!(cfg.gateway.temperature, 0.8);
    }
}
