use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Detection;

pub const FIXTURE_FILE: &str = "perception.json";

/// Canned OCR and detector outputs for one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageFixture {
    #[serde(default)]
    pub ocr: Vec<String>,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

/// `fixtures/perception.json`: `{"images": {"<image key>": {"ocr": [...], "detections": [...]}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerceptionFixtures {
    #[serde(default)]
    pub images: BTreeMap<String, ImageFixture>,
}

impl PerceptionFixtures {
    pub fn get(&self, key: &str) -> Option<&ImageFixture> {
        self.images.get(key)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Loads `path` if it exists, otherwise returns an empty fixture set.
    pub fn load_or_default(path: &Path) -> std::io::Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}
