//! Model backends: captioning, embedding, OCR, detection and the policy.
//!
//! Every capability is a trait so deterministic mocks and the HTTP client
//! are interchangeable.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::frame::{Frame, GrayImage};

pub mod fixtures;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;

pub use fixtures::{ImageFixture, PerceptionFixtures};
pub use mock::{FixtureDetector, FixtureOcr, HashEmbedder, MockCaptioner, ScriptedPolicy};

/// Frames of one finalized event, submitted for captioning.
#[derive(Debug, Clone, Copy)]
pub struct CaptionRequest<'a> {
    pub event_id: u64,
    pub frames: &'a [Arc<Frame>],
    pub start_s: f64,
    pub end_s: f64,
}

/// An image handed to a perception backend.
#[derive(Debug, Clone)]
pub struct ImageInput {
    /// Fixture lookup key (source file name or `frame-{index}`).
    pub key: String,
    pub image: Option<Arc<GrayImage>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    /// `[x0, y0, x1, y1]` in pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

impl Detection {
    pub fn is_valid_within(&self, width: f64, height: f64) -> bool {
        let [x0, y0, x1, y1] = self.bbox;
        x0 < x1
            && y0 < y1
            && x0 >= 0.0
            && y0 >= 0.0
            && x1 <= width
            && y1 <= height
            && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// A labeled frame attached to a policy request.
#[derive(Debug, Clone)]
pub struct ContextImage {
    pub label: String,
    pub frame: Arc<Frame>,
}

/// Everything sent to the policy model for one generation.
#[derive(Debug, Clone)]
pub struct PolicyRequest {
    pub question_id: String,
    pub messages: Vec<ChatMessage>,
    pub images: Vec<ContextImage>,
}

pub trait Captioner: Send + Sync {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, BackendError>;

    /// Describes how `current` differs from `previous`.
    fn change_log(&self, previous: &str, current: &str) -> Result<String, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

pub trait OcrEngine: Send + Sync {
    fn ocr(&self, image: &ImageInput) -> Result<Vec<String>, BackendError>;
}

pub trait ObjectDetector: Send + Sync {
    fn detect(&self, image: &ImageInput, labels: &[String])
        -> Result<Vec<Detection>, BackendError>;
}

pub trait PolicyModel {
    fn generate(&mut self, request: &PolicyRequest) -> Result<String, BackendError>;
}

impl<T: PolicyModel + ?Sized> PolicyModel for Box<T> {
    fn generate(&mut self, request: &PolicyRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
}

/// The archival pair used while ingesting.
#[derive(Clone)]
pub struct ArchivalBackends {
    pub captioner: Arc<dyn Captioner>,
    pub embedder: Arc<dyn Embedder>,
}

impl ArchivalBackends {
    pub fn mock() -> Self {
        Self {
            captioner: Arc::new(MockCaptioner),
            embedder: Arc::new(HashEmbedder::default()),
        }
    }
}

/// The perception pair used by tools, plus the embedder for semantic search.
#[derive(Clone)]
pub struct PerceptionBackends {
    pub embedder: Arc<dyn Embedder>,
    pub ocr: Arc<dyn OcrEngine>,
    pub detector: Arc<dyn ObjectDetector>,
}

impl PerceptionBackends {
    pub fn mock(fixtures: PerceptionFixtures) -> Self {
        let fixtures = Arc::new(fixtures);
        Self {
            embedder: Arc::new(HashEmbedder::default()),
            ocr: Arc::new(FixtureOcr::new(Arc::clone(&fixtures))),
            detector: Arc::new(FixtureDetector::new(fixtures)),
        }
    }
}

/// A backend that always fails; useful for exercising degraded paths.
#[derive(Debug, Clone, Default)]
pub struct Unavailable;

impl Captioner for Unavailable {
    fn caption(&self, _: &CaptionRequest<'_>) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }

    fn change_log(&self, _: &str, _: &str) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }
}

impl Embedder for Unavailable {
    fn embed(&self, _: &str) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }
}

impl OcrEngine for Unavailable {
    fn ocr(&self, _: &ImageInput) -> Result<Vec<String>, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }
}

impl ObjectDetector for Unavailable {
    fn detect(&self, _: &ImageInput, _: &[String]) -> Result<Vec<Detection>, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }
}

impl PolicyModel for Unavailable {
    fn generate(&mut self, _: &PolicyRequest) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("offline".into()))
    }
}
