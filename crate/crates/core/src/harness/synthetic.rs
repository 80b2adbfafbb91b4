//! Piecewise-constant test streams with planted scene changes and
//! perception fixtures.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_json, HarnessError};
use crate::backend::fixtures::FIXTURE_FILE;
use crate::backend::{Detection, ImageFixture, PerceptionFixtures};
use crate::error::ConfigError;
use crate::frame::GrayImage;
use crate::source::{frame_file_name, write_frame_directory, FrameMeta};

pub const BOUNDARIES_FILE: &str = "boundaries.json";
pub const FIXTURE_DIR: &str = "fixtures";

fn default_width() -> u32 {
    32
}

fn default_height() -> u32 {
    24
}

fn default_fps() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    /// Source frame rate.
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub seed: u64,
    pub scenes: Vec<SceneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration_s: f64,
    /// Base gray level.
    pub intensity: u8,
    /// Uniform per-pixel noise amplitude.
    #[serde(default)]
    pub noise: u8,
    /// OCR lines planted on every frame of the scene.
    #[serde(default)]
    pub ocr: Vec<String>,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub first_index: u64,
    pub frames: u64,
}

/// Ground truth written next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Timestamp of the first frame of every scene after the first.
    pub boundaries_s: Vec<f64>,
    pub scenes: Vec<SceneSpan>,
}

pub struct SyntheticStream {
    pub frames: Vec<(FrameMeta, GrayImage)>,
    pub fixtures: PerceptionFixtures,
    pub truth: GroundTruth,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.width == 0 || self.height == 0 {
            return bad("frame dimensions must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.scenes.is_empty() {
            return bad("at least one scene is required".into());
        }
        for (i, s) in self.scenes.iter().enumerate() {
            if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
                return bad(format!("scene {i}: duration must be positive"));
            }
            for d in &s.detections {
                if !d.is_valid_within(self.width as f64, self.height as f64) {
                    return bad(format!("scene {i}: detection {d:?} lies outside the frame"));
                }
            }
        }
        Ok(())
    }
}

/// Renders the stream in memory. Frame `i` sits at `i / fps`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticStream, ConfigError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pixels = (spec.width * spec.height) as usize;
    let mut frames = Vec::new();
    let mut fixtures = PerceptionFixtures::default();
    let mut truth = GroundTruth {
        boundaries_s: Vec::new(),
        scenes: Vec::new(),
    };
    let mut scene_start = 0.0;
    let mut index = 0u64;
    for (k, scene) in spec.scenes.iter().enumerate() {
        let scene_end = scene_start + scene.duration_s;
        let first_index = index;
        loop {
            let t = index as f64 / spec.fps;
            if t >= scene_end - 1e-9 {
                break;
            }
            let image = GrayImage {
                width: spec.width,
                height: spec.height,
                pixels: (0..pixels)
                    .map(|_| noisy(scene.intensity, scene.noise, &mut rng))
                    .collect(),
            };
            if index == first_index && k > 0 {
                truth.boundaries_s.push(t);
            }
            if !scene.ocr.is_empty() || !scene.detections.is_empty() {
                fixtures.images.insert(
                    frame_file_name(index),
                    ImageFixture {
                        ocr: scene.ocr.clone(),
                        detections: scene.detections.clone(),
                    },
                );
            }
            frames.push((
                FrameMeta {
                    index,
                    timestamp_s: t,
                },
                image,
            ));
            index += 1;
        }
        truth.scenes.push(SceneSpan {
            start_s: scene_start,
            end_s: scene_end,
            first_index,
            frames: index - first_index,
        });
        scene_start = scene_end;
    }
    Ok(SyntheticStream {
        frames,
        fixtures,
        truth,
    })
}

fn noisy(base: u8, amplitude: u8, rng: &mut ChaCha8Rng) -> u8 {
    if amplitude == 0 {
        return base;
    }
    let a = amplitude as i32;
    (base as i32 + rng.random_range(-a..=a)).clamp(0, 255) as u8
}

/// Writes frames, `meta.jsonl`, `fixtures/perception.json` and
/// `boundaries.json` into `out`.
pub fn write_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<GroundTruth, HarnessError> {
    let stream = generate(spec)?;
    write_frame_directory(out, stream.frames.iter().map(|(m, img)| (*m, img)))
        .map_err(HarnessError::io(out))?;
    let fixture_path = out.join(FIXTURE_DIR).join(FIXTURE_FILE);
    stream
        .fixtures
        .save(&fixture_path)
        .map_err(HarnessError::io(&fixture_path))?;
    write_json(&out.join(BOUNDARIES_FILE), &stream.truth)?;
    Ok(stream.truth)
}
