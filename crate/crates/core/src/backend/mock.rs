//! Deterministic mock backends.
//!
//! Captions follow `mock-event e{id}: mean-intensity {m}, {n} frames, {start}s-{end}s`
//! and change logs follow `intensity {m_prev} -> {m_curr}`. The embedder hashes
//! lowercase alphanumeric tokens with 64-bit FNV-1a into `dimension` buckets,
//! accumulates counts and L2-normalizes.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{
    CaptionRequest, Captioner, Detection, Embedder, ImageInput, ObjectDetector, OcrEngine,
    PerceptionFixtures, PolicyModel, PolicyRequest,
};
use crate::error::BackendError;
use crate::frame::Seconds;

pub const MOCK_EMBEDDING_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased runs of ASCII alphanumerics.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
}

#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dimension: MOCK_EMBEDDING_DIM,
        }
    }
}

impl HashEmbedder {
    /// All-zero when `text` has no tokens.
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            v[(fnv1a64(token.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.embed_text(text))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockCaptioner;

impl MockCaptioner {
    pub fn caption_text(request: &CaptionRequest<'_>) -> String {
        let n = request.frames.len();
        let mean = if n == 0 {
            0.0
        } else {
            request
                .frames
                .iter()
                .map(|f| f.image.mean_intensity())
                .sum::<f64>()
                / n as f64
        };
        format!(
            "mock-event e{}: mean-intensity {}, {} frames, {}s-{}s",
            request.event_id,
            mean.round() as i64,
            n,
            Seconds(request.start_s),
            Seconds(request.end_s)
        )
    }

    fn intensity_of(caption: &str) -> &str {
        caption
            .split_once("mean-intensity ")
            .and_then(|(_, rest)| rest.split(',').next())
            .unwrap_or("?")
    }
}

impl Captioner for MockCaptioner {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, BackendError> {
        Ok(Self::caption_text(request))
    }

    fn change_log(&self, previous: &str, current: &str) -> Result<String, BackendError> {
        Ok(format!(
            "intensity {} -> {}",
            Self::intensity_of(previous),
            Self::intensity_of(current)
        ))
    }
}

/// OCR that returns the fixture lines for an image key, or nothing.
#[derive(Debug, Clone)]
pub struct FixtureOcr {
    fixtures: Arc<PerceptionFixtures>,
}

impl FixtureOcr {
    pub fn new(fixtures: Arc<PerceptionFixtures>) -> Self {
        Self { fixtures }
    }
}

impl OcrEngine for FixtureOcr {
    fn ocr(&self, image: &ImageInput) -> Result<Vec<String>, BackendError> {
        Ok(self
            .fixtures
            .get(&image.key)
            .map(|f| f.ocr.clone())
            .unwrap_or_default())
    }
}

/// Detector that returns fixture boxes whose label was requested
/// (case-insensitive), by descending score.
#[derive(Debug, Clone)]
pub struct FixtureDetector {
    fixtures: Arc<PerceptionFixtures>,
}

impl FixtureDetector {
    pub fn new(fixtures: Arc<PerceptionFixtures>) -> Self {
        Self { fixtures }
    }
}

impl ObjectDetector for FixtureDetector {
    fn detect(
        &self,
        image: &ImageInput,
        labels: &[String],
    ) -> Result<Vec<Detection>, BackendError> {
        let Some(fixture) = self.fixtures.get(&image.key) else {
            return Ok(Vec::new());
        };
        let mut found: Vec<Detection> = fixture
            .detections
            .iter()
            .filter(|d| labels.iter().any(|l| l.eq_ignore_ascii_case(&d.label)))
            .cloned()
            .collect();
        found.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(found)
    }
}

/// Replays a fixed list of policy outputs.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    responses: Vec<String>,
    cursor: usize,
    cycle: bool,
}

impl ScriptedPolicy {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
            cursor: 0,
            cycle: false,
        }
    }

    /// Starts over from the first response instead of failing when exhausted.
    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }
}

impl PolicyModel for ScriptedPolicy {
    fn generate(&mut self, _: &PolicyRequest) -> Result<String, BackendError> {
        if self.cursor >= self.responses.len() {
            if !self.cycle || self.responses.is_empty() {
                return Err(BackendError::Unavailable("script exhausted".into()));
            }
            self.cursor = 0;
        }
        let out = self.responses[self.cursor].clone();
        self.cursor += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptLine {
    #[serde(default)]
    question_id: Option<String>,
    responses: Vec<String>,
    #[serde(default)]
    cycle: bool,
}

/// Per-question scripts loaded from JSONL.
///
/// Each line is `{"question_id": "q1", "responses": ["..."], "cycle": false}`;
/// a line without `question_id` is the fallback for every other question.
#[derive(Debug, Clone, Default)]
pub struct ScriptBook {
    by_question: HashMap<String, ScriptedPolicy>,
    fallback: Option<ScriptedPolicy>,
}

impl ScriptBook {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut book = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            let mut policy = ScriptedPolicy::new(parsed.responses);
            if parsed.cycle {
                policy = policy.cycling();
            }
            match parsed.question_id {
                Some(id) => {
                    book.by_question.insert(id, policy);
                }
                None => book.fallback = Some(policy),
            }
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// A fresh policy for `question_id`; errors on every call if none is scripted.
    pub fn policy_for(&self, question_id: &str) -> ScriptedPolicy {
        self.by_question
            .get(question_id)
            .or(self.fallback.as_ref())
            .cloned()
            .unwrap_or_else(|| ScriptedPolicy::new(Vec::<String>::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Frame, GrayImage, RawFrame};

    fn frames(value: u8, ts: &[f64]) -> Vec<Arc<Frame>> {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| {
                Arc::new(Frame::new(
                    i as u64,
                    RawFrame {
                        timestamp_s: t,
                        image: GrayImage::filled(4, 4, value),
                        source_path: None,
                    },
                ))
            })
            .collect()
    }

    #[test]
    fn caption_template() {
        let fs = frames(200, &[4.0, 5.0, 6.0]);
        let c = MockCaptioner
            .caption(&CaptionRequest {
                event_id: 7,
                frames: &fs,
                start_s: 4.0,
                end_s: 6.0,
            })
            .unwrap();
        assert_eq!(c, "mock-event e7: mean-intensity 200, 3 frames, 4.0s-6.0s");
        let log = MockCaptioner
            .change_log("mock-event e1: mean-intensity 10, 9 frames, 0.0s-8.0s", &c)
            .unwrap();
        assert_eq!(log, "intensity 10 -> 200");
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn embedding_is_unit_and_order_insensitive() {
        let e = HashEmbedder::default();
        let a = e.embed_text("slicing a potato");
        let b = e.embed_text("Potato, a SLICING!");
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(e.embed_text("  ,;  ").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_counts_buckets() {
        // recompute by hand: bucket per token, counts, normalize
        let e = HashEmbedder::default();
        let text = "abc abc xyz";
        let mut expected = vec![0.0; 64];
        expected[(fnv1a64(b"abc") % 64) as usize] += 2.0;
        expected[(fnv1a64(b"xyz") % 64) as usize] += 1.0;
        let n = expected.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        expected.iter_mut().for_each(|x| *x /= n);
        assert_eq!(e.embed_text(text), expected);
    }

    #[test]
    fn detector_filters_and_sorts() {
        let mut fx = PerceptionFixtures::default();
        fx.images.insert(
            "000003.png".into(),
            super::super::ImageFixture {
                ocr: vec!["EXIT".into()],
                detections: vec![
                    Detection {
                        label: "dog".into(),
                        bbox: [0.0, 0.0, 2.0, 2.0],
                        score: 0.4,
                    },
                    Detection {
                        label: "cat".into(),
                        bbox: [1.0, 1.0, 3.0, 3.0],
                        score: 0.6,
                    },
                    Detection {
                        label: "Cat".into(),
                        bbox: [0.0, 1.0, 3.0, 3.0],
                        score: 0.9,
                    },
                ],
            },
        );
        let fx = Arc::new(fx);
        let img = ImageInput {
            key: "000003.png".into(),
            image: None,
        };
        let det = FixtureDetector::new(Arc::clone(&fx))
            .detect(&img, &["cat".into()])
            .unwrap();
        assert_eq!(
            det.iter().map(|d| d.score).collect::<Vec<_>>(),
            vec![0.9, 0.6]
        );
        assert_eq!(
            FixtureOcr::new(Arc::clone(&fx)).ocr(&img).unwrap(),
            vec!["EXIT"]
        );
        let unknown = ImageInput {
            key: "nope".into(),
            image: None,
        };
        assert!(FixtureOcr::new(fx).ocr(&unknown).unwrap().is_empty());
    }

    #[test]
    fn script_book_fallback_and_exhaustion() {
        let book = ScriptBook::parse(
            "{\"question_id\": \"q1\", \"responses\": [\"a\"]}\n{\"responses\": [\"x\", \"y\"], \"cycle\": true}\n",
        )
        .unwrap();
        let req = PolicyRequest {
            question_id: "q1".into(),
            messages: vec![],
            images: vec![],
        };
        let mut p = book.policy_for("q1");
        assert_eq!(p.generate(&req).unwrap(), "a");
        assert!(p.generate(&req).is_err());
        let mut other = book.policy_for("q9");
        let outs: Vec<String> = (0..3).map(|_| other.generate(&req).unwrap()).collect();
        assert_eq!(outs, vec!["x", "y", "x"]);
        assert!(ScriptBook::parse("{oops")
            .unwrap_err()
            .starts_with("line 1"));
    }
}
