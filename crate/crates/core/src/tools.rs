//! The perception toolkit: `search_memory`, `ocr` and `detect_objects`.
//!
//! Dispatch is total. Every call yields exactly one [`Observation`]; failures
//! become error observations with a machine-readable code.
//!
//! Rendered text formats:
//!
//! * `search_memory`: `Found {n} event(s):` followed by one block per event,
//!   blocks separated by a blank line:
//!   ```text
//!   [event {id}] {start:.1}s-{end:.1}s
//!   caption: {caption | (pending)}
//!   change_from_previous: {text | none}
//!   change_to_next: {text | none}
//!   ```
//!   or `No matching events found.`
//! * `ocr`: the recognized lines joined by `\n`, or `(no text found)`.
//! * `detect_objects`: one `{label} [{x0}, {y0}, {x1}, {y1}] score={score:.3}`
//!   line per detection, or `(no objects found)`.
//! * errors: `error[{code}]: {message}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::backend::{Detection, ImageInput, PerceptionBackends};
use crate::frame::Seconds;
use crate::ltm::{ArchivedEvent, LtmStore, SearchError, DEFAULT_MIN_SIMILARITY, DEFAULT_TOP_K};
use crate::stm::Snapshot;

pub const SEARCH_MEMORY: &str = "search_memory";
pub const OCR: &str = "ocr";
pub const DETECT_OBJECTS: &str = "detect_objects";

pub mod codes {
    pub const UNKNOWN_TOOL: &str = "unknown_tool";
    pub const INVALID_ARGUMENTS: &str = "invalid_arguments";
    pub const TARGET_NOT_FOUND: &str = "target_not_found";
    pub const BACKEND_ERROR: &str = "backend_error";
    pub const UNPARSEABLE: &str = "unparseable_action";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(rename = "tool")]
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(tool_name: &str, arguments: Value) -> Self {
        Self {
            tool_name: tool_name.to_string(),
            arguments: match arguments {
                Value::Object(m) => m,
                _ => Map::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tool_name: String,
    pub status: ObservationStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_code: Option<String>,
    pub payload: Value,
    pub rendered_text: String,
    /// Latest stream time among the evidence this observation exposes.
    #[serde(skip)]
    pub evidence_max_timestamp_s: Option<f64>,
}

impl Observation {
    pub fn ok(tool_name: &str, payload: Value, rendered_text: String) -> Self {
        Self {
            tool_name: tool_name.to_string(),
            status: ObservationStatus::Ok,
            error_code: None,
            payload,
            rendered_text,
            evidence_max_timestamp_s: None,
        }
    }

    pub fn error(tool_name: &str, code: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        Self {
            tool_name: tool_name.to_string(),
            status: ObservationStatus::Error,
            error_code: Some(code.to_string()),
            rendered_text: format!("error[{code}]: {message}"),
            payload: json!({ "code": code, "message": message }),
            evidence_max_timestamp_s: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ObservationStatus::Ok
    }

    fn with_evidence(mut self, t: Option<f64>) -> Self {
        self.evidence_max_timestamp_s = t;
        self
    }
}

/// What a tool can see during one episode step.
pub struct ToolContext<'a> {
    pub snapshot: &'a Snapshot,
    pub ltm: &'a LtmStore,
    pub backends: &'a PerceptionBackends,
    pub top_k: usize,
    pub min_similarity: f64,
}

impl<'a> ToolContext<'a> {
    pub fn new(
        snapshot: &'a Snapshot,
        ltm: &'a LtmStore,
        backends: &'a PerceptionBackends,
    ) -> Self {
        Self {
            snapshot,
            ltm,
            backends,
            top_k: DEFAULT_TOP_K,
            min_similarity: DEFAULT_MIN_SIMILARITY,
        }
    }
}

pub trait Tool: Send + Sync {
    fn name(&self) -> &'static str;
    fn call(&self, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Observation;
}

/// Name-indexed tool set.
pub struct ToolRegistry {
    tools: BTreeMap<&'static str, Box<dyn Tool>>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SearchMemory));
        r.register(Box::new(Ocr));
        r.register(Box::new(DetectObjects));
        r
    }
}

impl ToolRegistry {
    pub fn empty() -> Self {
        Self {
            tools: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, tool: Box<dyn Tool>) {
        self.tools.insert(tool.name(), tool);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.tools.keys().copied()
    }

    pub fn dispatch(&self, call: &ToolCall, ctx: &ToolContext<'_>) -> Observation {
        match self.tools.get(call.tool_name.as_str()) {
            Some(tool) => tool.call(&call.arguments, ctx),
            None => Observation::error(
                &call.tool_name,
                codes::UNKNOWN_TOOL,
                format!("no tool named {:?}", call.tool_name),
            ),
        }
    }
}

type ArgResult<T> = Result<T, String>;

/// Schema-checked view over call arguments. `null` counts as absent.
struct Args<'a> {
    map: &'a Map<String, Value>,
}

impl<'a> Args<'a> {
    fn new(map: &'a Map<String, Value>, allowed: &[&str]) -> ArgResult<Self> {
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(format!("unexpected argument {k:?}"));
        }
        Ok(Self { map })
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn string(&self, key: &str) -> ArgResult<Option<&'a str>> {
        self.get(key)
            .map(|v| v.as_str().ok_or_else(|| format!("{key} must be a string")))
            .transpose()
    }

    fn number(&self, key: &str) -> ArgResult<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("{key} must be a number"))
            })
            .transpose()
    }

    fn index(&self, key: &str) -> ArgResult<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.as_u64()
                    .or_else(|| {
                        v.as_f64()
                            .filter(|x| x.fract() == 0.0 && *x >= 0.0)
                            .map(|x| x as u64)
                    })
                    .ok_or_else(|| format!("{key} must be a non-negative integer"))
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ImageTarget {
    Event(u64),
    Frame(usize),
}

impl ImageTarget {
    fn describe(self) -> Value {
        match self {
            ImageTarget::Event(id) => json!({ "event_id": id }),
            ImageTarget::Frame(i) => json!({ "frame_index": i }),
        }
    }
}

struct ResolvedImage {
    input: ImageInput,
    width: f64,
    height: f64,
    timestamp_s: f64,
}

fn resolve_target(target: ImageTarget, ctx: &ToolContext<'_>) -> Result<ResolvedImage, String> {
    match target {
        ImageTarget::Event(id) => {
            let entry = ctx
                .ltm
                .get(id)
                .ok_or_else(|| format!("no archived event with id {id}"))?;
            let image = ctx.ltm.anchor_image(id);
            let (width, height) = image.as_ref().map_or((f64::INFINITY, f64::INFINITY), |i| {
                (f64::from(i.width), f64::from(i.height))
            });
            Ok(ResolvedImage {
                input: ImageInput {
                    key: entry.anchor_key.clone(),
                    image,
                },
                width,
                height,
                timestamp_s: entry.end_s,
            })
        }
        ImageTarget::Frame(i) => {
            let f = ctx.snapshot.get(i).ok_or_else(|| {
                format!(
                    "frame_index {i} is out of range (short-term memory holds {} frames)",
                    ctx.snapshot.len()
                )
            })?;
            Ok(ResolvedImage {
                input: ImageInput {
                    key: f.frame.image_key(),
                    image: Some(Arc::new(f.frame.image.clone())),
                },
                width: f64::from(f.frame.width()),
                height: f64::from(f.frame.height()),
                timestamp_s: f.frame.timestamp_s,
            })
        }
    }
}

pub struct SearchMemory;

impl SearchMemory {
    fn render(events: &[(&ArchivedEvent, Option<f64>)]) -> String {
        if events.is_empty() {
            return "No matching events found.".to_string();
        }
        let mut out = format!("Found {} event(s):", events.len());
        for (i, (e, _)) in events.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { "\n\n" });
            let _ = write!(
                out,
                "[event {}] {}s-{}s\ncaption: {}\nchange_from_previous: {}\nchange_to_next: {}",
                e.event_id,
                Seconds(e.start_s),
                Seconds(e.end_s),
                e.caption.as_deref().unwrap_or("(pending)"),
                e.change_from_previous.as_deref().unwrap_or("none"),
                e.change_to_next.as_deref().unwrap_or("none"),
            );
        }
        out
    }

    fn payload(mode: &str, events: &[(&ArchivedEvent, Option<f64>)]) -> Value {
        let list: Vec<Value> = events
            .iter()
            .map(|(e, sim)| {
                let mut v = json!({
                    "event_id": e.event_id,
                    "start_s": e.start_s,
                    "end_s": e.end_s,
                    "caption": e.caption,
                    "change_from_previous": e.change_from_previous,
                    "change_to_next": e.change_to_next,
                });
                if let Some(s) = sim {
                    v["similarity"] = json!(s);
                }
                v
            })
            .collect();
        json!({ "mode": mode, "events": list })
    }
}

impl Tool for SearchMemory {
    fn name(&self) -> &'static str {
        SEARCH_MEMORY
    }

    fn call(&self, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Observation {
        let invalid = |m: String| Observation::error(SEARCH_MEMORY, codes::INVALID_ARGUMENTS, m);
        let parsed = Args::new(args, &["query", "start_time", "end_time"]).and_then(|a| {
            Ok((
                a.string("query")?,
                a.number("start_time")?,
                a.number("end_time")?,
            ))
        });
        let (query, start, end) = match parsed {
            Ok(v) => v,
            Err(m) => return invalid(m),
        };
        let (mode, hits): (&str, Vec<(&ArchivedEvent, Option<f64>)>) = match (query, start, end) {
            (Some(q), None, None) => {
                match ctx.ltm.search_semantic(
                    q,
                    ctx.backends.embedder.as_ref(),
                    ctx.top_k,
                    ctx.min_similarity,
                ) {
                    Ok(hits) => (
                        "semantic",
                        hits.into_iter().map(|(e, s)| (e, Some(s))).collect(),
                    ),
                    Err(SearchError::Backend(e)) => {
                        return Observation::error(
                            SEARCH_MEMORY,
                            codes::BACKEND_ERROR,
                            e.to_string(),
                        )
                    }
                    Err(e) => return invalid(e.to_string()),
                }
            }
            (None, Some(s), Some(e)) => match ctx.ltm.search_temporal(s, e) {
                Ok(hits) => (
                    "temporal",
                    hits.into_iter()
                        .take(ctx.top_k)
                        .map(|e| (e, None))
                        .collect(),
                ),
                Err(e) => return invalid(e.to_string()),
            },
            (Some(_), _, _) => {
                return invalid(
                    "use either query or start_time/end_time, not both at the same time".into(),
                )
            }
            (None, None, None) => {
                return invalid("provide either query or both start_time and end_time".into())
            }
            (None, _, _) => {
                return invalid("start_time and end_time must be given together".into())
            }
        };
        let evidence = hits.iter().map(|(e, _)| e.end_s).reduce(f64::max);
        Observation::ok(
            SEARCH_MEMORY,
            Self::payload(mode, &hits),
            Self::render(&hits),
        )
        .with_evidence(evidence)
    }
}

/// Parses the `event_id` / `frame_index` pair shared by the image tools.
fn image_target(args: &Args<'_>, required: bool) -> ArgResult<Option<ImageTarget>> {
    match (args.index("event_id")?, args.index("frame_index")?) {
        (Some(_), Some(_)) => Err("give either event_id or frame_index, not both".into()),
        (Some(id), None) => Ok(Some(ImageTarget::Event(id))),
        (None, Some(i)) => Ok(Some(ImageTarget::Frame(i as usize))),
        (None, None) if required => Err("one of event_id or frame_index is required".into()),
        (None, None) => Ok(None),
    }
}

pub struct Ocr;

impl Tool for Ocr {
    fn name(&self) -> &'static str {
        OCR
    }

    fn call(&self, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Observation {
        let target = match Args::new(args, &["event_id", "frame_index"])
            .and_then(|a| image_target(&a, true))
        {
            Ok(Some(t)) => t,
            Ok(None) => unreachable!("required target"),
            Err(m) => return Observation::error(OCR, codes::INVALID_ARGUMENTS, m),
        };
        let resolved = match resolve_target(target, ctx) {
            Ok(r) => r,
            Err(m) => return Observation::error(OCR, codes::TARGET_NOT_FOUND, m),
        };
        match ctx.backends.ocr.ocr(&resolved.input) {
            Ok(lines) => {
                let rendered = if lines.is_empty() {
                    "(no text found)".to_string()
                } else {
                    lines.join("\n")
                };
                Observation::ok(
                    OCR,
                    json!({ "target": target.describe(), "lines": lines }),
                    rendered,
                )
                .with_evidence(Some(resolved.timestamp_s))
            }
            Err(e) => Observation::error(OCR, codes::BACKEND_ERROR, e.to_string()),
        }
    }
}

pub struct DetectObjects;

pub fn render_detection(d: &Detection) -> String {
    let [x0, y0, x1, y1] = d.bbox;
    format!("{} [{x0}, {y0}, {x1}, {y1}] score={:.3}", d.label, d.score)
}

impl Tool for DetectObjects {
    fn name(&self) -> &'static str {
        DETECT_OBJECTS
    }

    fn call(&self, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Observation {
        let invalid = |m: String| Observation::error(DETECT_OBJECTS, codes::INVALID_ARGUMENTS, m);
        let parsed = Args::new(args, &["labels", "event_id", "frame_index"]).and_then(|a| {
            let labels = match a.get("labels") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect::<Option<Vec<String>>>()
                    .ok_or_else(|| "labels must be a list of strings".to_string())?,
                Some(_) => return Err("labels must be a list of strings".into()),
                None => Vec::new(),
            };
            Ok((labels, image_target(&a, false)?))
        });
        let (labels, target) = match parsed {
            Ok(v) => v,
            Err(m) => return invalid(m),
        };
        if labels.is_empty() {
            return invalid("labels must name at least one object".into());
        }
        let target = match target {
            Some(t) => t,
            None if ctx.snapshot.is_empty() => {
                return Observation::error(
                    DETECT_OBJECTS,
                    codes::TARGET_NOT_FOUND,
                    "short-term memory is empty",
                )
            }
            None => ImageTarget::Frame(ctx.snapshot.len() - 1),
        };
        let resolved = match resolve_target(target, ctx) {
            Ok(r) => r,
            Err(m) => return Observation::error(DETECT_OBJECTS, codes::TARGET_NOT_FOUND, m),
        };
        match ctx.backends.detector.detect(&resolved.input, &labels) {
            Ok(mut found) => {
                found.retain(|d| d.is_valid_within(resolved.width, resolved.height));
                found.sort_by(|a, b| b.score.total_cmp(&a.score));
                let rendered = if found.is_empty() {
                    "(no objects found)".to_string()
                } else {
                    found
                        .iter()
                        .map(render_detection)
                        .collect::<Vec<_>>()
                        .join("\n")
                };
                Observation::ok(
                    DETECT_OBJECTS,
                    json!({ "target": target.describe(), "detections": found }),
                    rendered,
                )
                .with_evidence(Some(resolved.timestamp_s))
            }
            Err(e) => Observation::error(DETECT_OBJECTS, codes::BACKEND_ERROR, e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests;
