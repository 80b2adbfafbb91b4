//! The multi-turn reasoning loop: generate, parse, dispatch, repeat.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tracing::debug;

use crate::backend::{PerceptionBackends, PolicyModel};
use crate::ltm::{LtmStore, DEFAULT_MIN_SIMILARITY, DEFAULT_TOP_K};
use crate::stm::Snapshot;
use crate::tools::{codes, Observation, ToolContext, ToolRegistry};

pub mod context;
pub mod parse;

pub use context::{build_context, QuestionPrompt, SYSTEM_PROMPT};
pub use parse::{extract_thought, last_boxed, parse_action, ParsedAction};

pub const DEFAULT_MAX_TURNS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    ToolCall {
        tool: String,
        arguments: Map<String, Value>,
    },
    FinalAnswer {
        answer: String,
    },
    Unparseable {
        reason: String,
    },
}

impl From<ParsedAction> for Action {
    fn from(p: ParsedAction) -> Self {
        match p {
            ParsedAction::ToolCall(c) => Action::ToolCall {
                tool: c.tool_name,
                arguments: c.arguments,
            },
            ParsedAction::FinalAnswer(answer) => Action::FinalAnswer { answer },
            ParsedAction::Unparseable(reason) => Action::Unparseable { reason },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub thought: String,
    pub action: Action,
    /// Absent only for the final answer.
    pub observation: Option<Observation>,
    /// Raw policy output, replayed verbatim into later contexts.
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    MaxTurns,
    PolicyError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    pub question: String,
    pub asked_at_s: f64,
    pub turns: Vec<Turn>,
    pub final_answer: Option<String>,
    pub terminated_by: Termination,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy_error: Option<String>,
    /// Latest stream time of anything the policy was shown.
    pub max_visible_timestamp_s: Option<f64>,
}

impl Trajectory {
    pub fn tools_used(&self) -> Vec<&str> {
        self.turns
            .iter()
            .filter_map(|t| match &t.action {
                Action::ToolCall { tool, .. } => Some(tool.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub max_turns: usize,
    pub top_k: usize,
    pub min_similarity: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            top_k: DEFAULT_TOP_K,
            min_similarity: DEFAULT_MIN_SIMILARITY,
        }
    }
}

/// Memory and tools available to an episode.
pub struct EpisodeEnv<'a> {
    pub snapshot: &'a Snapshot,
    pub ltm: &'a LtmStore,
    pub backends: &'a PerceptionBackends,
    pub registry: &'a ToolRegistry,
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Runs one question to completion.
///
/// Memory is cut to what existed at `asked_at_s` before anything is shown:
/// snapshot frames newer than the question and archive entries that had not
/// ended yet are dropped.
pub fn run_episode<P: PolicyModel + ?Sized>(
    question: &QuestionPrompt<'_>,
    env: &EpisodeEnv<'_>,
    policy: &mut P,
    config: &EpisodeConfig,
) -> Trajectory {
    let snapshot = env.snapshot.until(question.asked_at_s);
    let ltm = env.ltm.visible_until(question.asked_at_s);
    let mut ctx = ToolContext::new(&snapshot, &ltm, env.backends);
    ctx.top_k = config.top_k;
    ctx.min_similarity = config.min_similarity;

    let mut traj = Trajectory {
        question_id: question.question_id.to_string(),
        question: question.text.to_string(),
        asked_at_s: question.asked_at_s,
        turns: Vec::new(),
        final_answer: None,
        terminated_by: Termination::MaxTurns,
        policy_error: None,
        max_visible_timestamp_s: snapshot.max_timestamp(),
    };

    while traj.turns.len() < config.max_turns.max(1) {
        let request = build_context(&snapshot, question, &traj.turns);
        let response = match policy.generate(&request) {
            Ok(r) => r,
            Err(e) => {
                traj.terminated_by = Termination::PolicyError;
                traj.policy_error = Some(e.to_string());
                return traj;
            }
        };
        let thought = extract_thought(&response);
        let parsed = parse_action(&response);
        debug!(
            question = question.question_id,
            turn = traj.turns.len(),
            ?parsed,
            "policy turn"
        );
        let observation = match &parsed {
            ParsedAction::FinalAnswer(answer) => {
                traj.final_answer = Some(answer.clone());
                traj.terminated_by = Termination::Answer;
                None
            }
            ParsedAction::ToolCall(call) => Some(env.registry.dispatch(call, &ctx)),
            ParsedAction::Unparseable(reason) => Some(Observation::error(
                "",
                codes::UNPARSEABLE,
                format!("{reason}. Reply with a tool call block or \\boxed{{answer}}."),
            )),
        };
        if let Some(obs) = &observation {
            traj.max_visible_timestamp_s =
                max_opt(traj.max_visible_timestamp_s, obs.evidence_max_timestamp_s);
        }
        traj.turns.push(Turn {
            thought,
            action: parsed.into(),
            observation,
            response,
        });
        if traj.terminated_by == Termination::Answer {
            break;
        }
    }
    traj
}

#[cfg(test)]
mod tests;
