//! Assembling the policy request for one generation.

use crate::backend::{ChatMessage, ContextImage, PolicyRequest};
use crate::stm::Snapshot;

use super::Turn;

/// System prompt, kept byte-identical to the published one.
pub const SYSTEM_PROMPT: &str = include_str!("../../resources/system_prompt_v1.txt");
pub const SYSTEM_PROMPT_VERSION: &str = "v1";
/// Client-side note fixing the concrete tool-call syntax.
pub const TOOL_CALL_FORMAT: &str = include_str!("../../resources/tool_call_format.txt");

/// The question the agent receives, with its stream time.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPrompt<'a> {
    pub question_id: &'a str,
    pub text: &'a str,
    pub asked_at_s: f64,
}

/// First user message: frame labels, current time, question and the
/// tool-call syntax note.
pub fn render_question(snapshot: &Snapshot, question: &QuestionPrompt<'_>) -> String {
    let mut out = String::new();
    if snapshot.is_empty() {
        out.push_str("Short-term memory: (no frames)\n");
    } else {
        out.push_str("Short-term memory frames (attached in order):\n");
        for f in &snapshot.frames {
            out.push_str(&f.label);
            out.push('\n');
        }
    }
    out.push_str(&format!("Current time: {:.1}s\n", question.asked_at_s));
    out.push_str(&format!("Question: {}\n\n", question.text.trim()));
    out.push_str(TOOL_CALL_FORMAT.trim_end());
    out
}

pub fn build_context(
    snapshot: &Snapshot,
    question: &QuestionPrompt<'_>,
    prior: &[Turn],
) -> PolicyRequest {
    let mut messages = vec![
        ChatMessage::new("system", SYSTEM_PROMPT.trim_end()),
        ChatMessage::new("user", render_question(snapshot, question)),
    ];
    for turn in prior {
        messages.push(ChatMessage::new("assistant", turn.response.clone()));
        if let Some(obs) = &turn.observation {
            messages.push(ChatMessage::new(
                "user",
                format!("Observation:\n{}", obs.rendered_text),
            ));
        }
    }
    PolicyRequest {
        question_id: question.question_id.to_string(),
        messages,
        images: snapshot
            .frames
            .iter()
            .map(|f| ContextImage {
                label: f.label.clone(),
                frame: f.frame.clone(),
            })
            .collect(),
    }
}
