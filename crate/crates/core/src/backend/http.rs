//! JSON-over-HTTP client for remote model services.
//!
//! | endpoint       | request                                   | response                 |
//! |----------------|-------------------------------------------|--------------------------|
//! | `POST /caption`| `{images, start_s, end_s, event_id}`      | `{caption}`              |
//! | `POST /embed`  | `{text}`                                  | `{embedding}`            |
//! | `POST /ocr`    | `{image}`                                 | `{lines}`                |
//! | `POST /detect` | `{image, labels}`                         | `{detections}`           |
//! | `POST /chat`   | `{messages, images}`                      | `{text}`                 |
//!
//! Images are base64-encoded grayscale PNGs. Change logs go through `/chat`.
//! Each client issues one blocking request at a time.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    CaptionRequest, Captioner, ChatMessage, Detection, Embedder, ImageInput, ObjectDetector,
    OcrEngine, PolicyModel, PolicyRequest,
};
use crate::error::BackendError;
use crate::frame::GrayImage;
use crate::source::encode_png_gray;

pub const BACKEND_URL_ENV: &str = "STREAMMEM_BACKEND_URL";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Serialize)]
pub struct CaptionBody {
    pub images: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub event_id: u64,
}

#[derive(Debug, Deserialize)]
struct CaptionReply {
    caption: String,
}

#[derive(Debug, Serialize)]
pub struct EmbedBody<'a> {
    pub text: &'a str,
}

#[derive(Debug, Deserialize)]
struct EmbedReply {
    embedding: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct OcrBody {
    pub image: String,
}

#[derive(Debug, Deserialize)]
struct OcrReply {
    lines: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct DetectBody<'a> {
    pub image: String,
    pub labels: &'a [String],
}

#[derive(Debug, Deserialize)]
struct DetectReply {
    detections: Vec<Detection>,
}

#[derive(Debug, Serialize)]
pub struct ChatBody<'a> {
    pub messages: &'a [ChatMessage],
    pub images: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    text: String,
}

#[derive(Debug, Deserialize)]
struct ErrorReply {
    error: String,
}

pub fn encode_image(image: &GrayImage) -> Result<String, BackendError> {
    let png = encode_png_gray(image).map_err(BackendError::Malformed)?;
    Ok(STANDARD.encode(png))
}

#[derive(Clone)]
pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
    timeout: Duration,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.base_url)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            timeout,
        }
    }

    /// Reads the base URL from `STREAMMEM_BACKEND_URL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(BACKEND_URL_ENV)
            .map_err(|_| BackendError::Unavailable(format!("{BACKEND_URL_ENV} is not set")))?;
        Ok(Self::new(url, DEFAULT_TIMEOUT))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| self.map_err(e))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.map_err(e))?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<ErrorReply>(&text)
                .map(|e| e.error)
                .unwrap_or(text);
            return Err(BackendError::Rejected { status, message });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(format!("{path}: {e}")))
    }

    fn map_err(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout.as_secs()),
            ureq::Error::StatusCode(status) => BackendError::Rejected {
                status,
                message: String::new(),
            },
            other => BackendError::Unavailable(other.to_string()),
        }
    }

    fn image_payload(image: &ImageInput) -> Result<String, BackendError> {
        let pixels = image.image.as_ref().ok_or_else(|| {
            BackendError::Malformed(format!("pixels for image {} are not available", image.key))
        })?;
        encode_image(pixels)
    }
}

impl Captioner for HttpBackend {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, BackendError> {
        let images = request
            .frames
            .iter()
            .map(|f| encode_image(&f.image))
            .collect::<Result<Vec<_>, _>>()?;
        let body = CaptionBody {
            images,
            start_s: request.start_s,
            end_s: request.end_s,
            event_id: request.event_id,
        };
        Ok(self.post::<_, CaptionReply>("/caption", &body)?.caption)
    }

    fn change_log(&self, previous: &str, current: &str) -> Result<String, BackendError> {
        let messages = [
            ChatMessage::new("system", "You are a video memory builder."),
            ChatMessage::new(
                "user",
                format!(
                    "Previous event: {previous}\nCurrent event: {current}\n\
                     In one sentence, describe how the current event differs from the previous event."
                ),
            ),
        ];
        let body = ChatBody {
            messages: &messages,
            images: Vec::new(),
        };
        Ok(self.post::<_, ChatReply>("/chat", &body)?.text)
    }
}

impl Embedder for HttpBackend {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self
            .post::<_, EmbedReply>("/embed", &EmbedBody { text })?
            .embedding)
    }
}

impl OcrEngine for HttpBackend {
    fn ocr(&self, image: &ImageInput) -> Result<Vec<String>, BackendError> {
        let body = OcrBody {
            image: Self::image_payload(image)?,
        };
        Ok(self.post::<_, OcrReply>("/ocr", &body)?.lines)
    }
}

impl ObjectDetector for HttpBackend {
    fn detect(
        &self,
        image: &ImageInput,
        labels: &[String],
    ) -> Result<Vec<Detection>, BackendError> {
        let body = DetectBody {
            image: Self::image_payload(image)?,
            labels,
        };
        let mut found = self.post::<_, DetectReply>("/detect", &body)?.detections;
        found.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(found)
    }
}

impl PolicyModel for HttpBackend {
    fn generate(&mut self, request: &PolicyRequest) -> Result<String, BackendError> {
        let images = request
            .images
            .iter()
            .map(|i| encode_image(&i.frame.image))
            .collect::<Result<Vec<_>, _>>()?;
        let body = ChatBody {
            messages: &request.messages,
            images,
        };
        Ok(self.post::<_, ChatReply>("/chat", &body)?.text)
    }
}
