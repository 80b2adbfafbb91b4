//! Turning raw policy text into an action.

use serde_json::Value;

use crate::tools::ToolCall;

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAction {
    ToolCall(ToolCall),
    FinalAnswer(String),
    Unparseable(String),
}

/// Interprets one policy output.
///
/// The last `\boxed{...}` with balanced braces wins; otherwise the first
/// fenced JSON block (or `<tool_call>` block) of the form
/// `{"tool": name, "arguments": {...}}`; otherwise `Unparseable`.
pub fn parse_action(text: &str) -> ParsedAction {
    if let Some(answer) = last_boxed(text) {
        return ParsedAction::FinalAnswer(answer.trim().to_string());
    }
    let mut saw_block = false;
    for block in fenced_blocks(text).chain(tagged_blocks(text)) {
        saw_block = true;
        if let Some(call) = tool_call_from_json(block) {
            return ParsedAction::ToolCall(call);
        }
    }
    ParsedAction::Unparseable(if saw_block {
        "tool call block is not valid JSON of the form {\"tool\": name, \"arguments\": {...}}"
            .into()
    } else {
        "expected a fenced JSON tool call or \\boxed{answer}".into()
    })
}

/// Contents of every `\boxed{...}` whose braces balance; returns the last.
pub fn last_boxed(text: &str) -> Option<&str> {
    const OPEN: &str = "\\boxed{";
    let mut found = None;
    let mut from = 0;
    while let Some(pos) = text[from..].find(OPEN) {
        let start = from + pos + OPEN.len();
        let mut depth = 1usize;
        let mut end = None;
        for (i, c) in text[start..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(start + i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                found = Some(&text[start..e]);
                from = e + 1;
            }
            None => from = start,
        }
    }
    found
}

fn fenced_blocks(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let open = rest.find("```")?;
        let after = &rest[open + 3..];
        // skip the info string (e.g. `json`) up to the end of the line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let close = body.find("```")?;
        rest = &body[close + 3..];
        Some(&body[..close])
    })
}

fn tagged_blocks(text: &str) -> impl Iterator<Item = &str> {
    let mut rest = text;
    std::iter::from_fn(move || {
        let open = rest.find("<tool_call>")?;
        let body = &rest[open + "<tool_call>".len()..];
        let close = body.find("</tool_call>")?;
        rest = &body[close..];
        Some(&body[..close])
    })
}

fn tool_call_from_json(block: &str) -> Option<ToolCall> {
    let mut v: Value = serde_json::from_str(block.trim()).ok()?;
    let obj = v.as_object_mut()?;
    // accept {"name": ...} as well as {"tool": ...}
    if !obj.contains_key("tool") {
        let name = obj.remove("name")?;
        obj.insert("tool".into(), name);
    }
    // some clients send arguments as a JSON string
    if let Some(Value::String(s)) = obj.get("arguments") {
        let parsed: Value = serde_json::from_str(s).ok()?;
        obj.insert("arguments".into(), parsed);
    }
    if obj.get("arguments").is_some_and(|a| !a.is_object()) {
        return None;
    }
    let tool = obj.get("tool")?.as_str()?;
    if tool.is_empty() {
        return None;
    }
    serde_json::from_value(v).ok()
}

/// The thought sentence: text after `Thought:` on its line, or else the first
/// non-empty line that is not part of an action block.
pub fn extract_thought(text: &str) -> String {
    if let Some(pos) = text.find("Thought:") {
        let rest = &text[pos + "Thought:".len()..];
        let line = rest.lines().next().unwrap_or("");
        let line = line.split("Action:").next().unwrap_or(line);
        return line.trim().to_string();
    }
    text.lines()
        .map(str::trim)
        .find(|l| {
            !l.is_empty()
                && !l.starts_with("```")
                && !l.starts_with("<tool_call>")
                && !l.contains("\\boxed{")
        })
        .unwrap_or("")
        .to_string()
}
