//! Scripted-user simulation and the evaluation metrics.

pub mod annotate;
pub mod metrics;
pub mod script;

use serde::{Deserialize, Serialize};

pub use annotate::{score_annotations, AccuracyReport, AnnotationSet, StatementLabel, Tally};
pub use metrics::{jaccard, memory_ratio, scene_coverage, tree_cut_points};
pub use script::{Persona, ScriptedUser, UserScript, DEFAULT_MAX_TURNS};

use crate::domain::{EngineKind, MemoryTree, Phase, Speaker, Transcript};
use crate::engine::{ChatEngine, EngineError};
use crate::exec::Exec;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("turn {turn_index}: missing annotation {field}")]
    MissingAnnotation { turn_index: usize, field: &'static str },
    #[error("pre-trial narrative has no words")]
    EmptyNarrative,
    #[error("statements without a label: {}", .0.join(", "))]
    Unlabelled(Vec<String>),
    #[error("labels for statements not in the tree: {}", .0.join(", "))]
    UnknownStatements(Vec<String>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub engine: EngineKind,
    pub persona: Persona,
    pub seed: u64,
    pub scene_coverage: f64,
    pub scenes_total: usize,
    pub user_turns: usize,
    pub bot_turns: usize,
    pub details_emitted: usize,
    pub details_total: usize,
    pub gateway_errors: usize,
    pub concluded: bool,
    /// The turn cap cut the session short.
    pub non_terminating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRun {
    pub transcript: Transcript,
    pub metrics: SessionMetrics,
}

/// Plays `script` against `engine` until the user leaves, the session
/// concludes or the turn cap is hit. `tree` is only used for scoring.
pub fn run_scripted_session(
    engine: &ChatEngine,
    tree: &MemoryTree,
    script: &UserScript,
    seed: u64,
) -> Result<SessionRun, EvalError> {
    let mut user = ScriptedUser::new(script.clone(), seed);
    let mut state = engine.start_session(format!("run-{seed}"));
    let mut non_terminating = false;
    loop {
        if state.phase == Phase::Concluded {
            break;
        }
        let last = state.history.last().expect("sessions open with a bot turn");
        let Some(input) = user.next_input(last) else { break };
        if state.history.iter().filter(|t| t.speaker == Speaker::User).count() >= user.max_turns() {
            non_terminating = true;
            break;
        }
        engine.reply(&mut state, &input)?;
    }
    let transcript = engine.transcript(&state);
    let metrics = SessionMetrics {
        engine: engine.kind(),
        persona: script.persona,
        seed,
        scene_coverage: scene_coverage(&transcript, tree)?,
        scenes_total: tree.scenes.len(),
        user_turns: transcript.turns.iter().filter(|t| t.speaker == Speaker::User).count(),
        bot_turns: transcript.turns.iter().filter(|t| t.speaker == Speaker::Bot).count(),
        details_emitted: transcript.turns.iter().filter(|t| t.annotations.emitted_detail_id.is_some()).count(),
        details_total: tree.detail_count(),
        gateway_errors: transcript.turns.iter().filter(|t| t.is_error()).count(),
        concluded: state.phase == Phase::Concluded,
        non_terminating,
    };
    Ok(SessionRun { transcript, metrics })
}

/// One cell of a batch run.
#[derive(Debug, Clone)]
pub struct BatchCell<'a> {
    pub engine: &'a ChatEngine,
    pub tree: &'a MemoryTree,
    pub script: UserScript,
    pub seed: u64,
}

/// Runs independent cells, in parallel when `exec` allows; results keep
/// the order of `cells`.
pub fn run_batch(cells: &[BatchCell<'_>], exec: Exec) -> Vec<Result<SessionRun, EvalError>> {
    exec.map(cells, |c| run_scripted_session(c.engine, c.tree, &c.script, c.seed))
}
