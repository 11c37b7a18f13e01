//! Either chat engine behind one interface.

use crate::baseline::{BaselineEngine, BaselineError};
use crate::dialogue::{DialogueError, ReviverEngine};
use crate::domain::{ChatTurn, EngineKind, SessionState, Transcript};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ChatEngine {
    Reviver(ReviverEngine),
    Baseline(BaselineEngine),
}

impl ChatEngine {
    pub fn kind(&self) -> EngineKind {
        match self {
            ChatEngine::Reviver(_) => EngineKind::Reviver,
            ChatEngine::Baseline(_) => EngineKind::Baseline,
        }
    }

    pub fn start_session(&self, session_id: impl Into<String>) -> SessionState {
        match self {
            ChatEngine::Reviver(e) => e.start_session(session_id),
            ChatEngine::Baseline(e) => e.start_session(session_id),
        }
    }

    pub fn reply(&self, state: &mut SessionState, text: &str) -> Result<ChatTurn, EngineError> {
        Ok(match self {
            ChatEngine::Reviver(e) => e.reply(state, text)?,
            ChatEngine::Baseline(e) => e.reply(state, text)?,
        })
    }

    pub fn transcript(&self, state: &SessionState) -> Transcript {
        Transcript { collection_id: state.collection_id.clone(), engine: self.kind(), turns: state.history.clone() }
    }
}

impl From<ReviverEngine> for ChatEngine {
    fn from(e: ReviverEngine) -> Self {
        ChatEngine::Reviver(e)
    }
}

impl From<BaselineEngine> for ChatEngine {
    fn from(e: BaselineEngine) -> Self {
        ChatEngine::Baseline(e)
    }
}
