//! Browser demo: segmentation trace, reservoir inclusion and group advantages.
//!
//! The exported functions take and return JSON strings; the plain Rust
//! functions underneath are what the tests exercise.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use streammem::frame::{Frame, GrayImage, RawFrame};
use streammem::harness::{generate, SceneSpec, SyntheticSpec};
use streammem::histogram::compute_histogram;
use streammem::rl::{evaluate_group, surrogate_term, GroupInput};
use streammem::segment::{pearson_correlation, BoundaryPolicy};
use streammem::stm::{AdmitOutcome, ShortTermMemory, StmConfig};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
pub struct Scene {
    pub duration_s: f64,
    pub intensity: u8,
    #[serde(default)]
    pub noise: u8,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SegmentRequest {
    pub scenes: Vec<Scene>,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_min_len")]
    pub min_len: u64,
    /// Seconds per fixed-length event; event-centric when absent.
    #[serde(default)]
    pub fixed_interval_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_capacity() -> usize {
    32
}
fn default_delta() -> f64 {
    0.2
}
fn default_min_len() -> u64 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub intensity: f64,
    /// Correlation with the active event's mean; absent for the first frame.
    pub rho: Option<f64>,
    pub outcome: &'static str,
    pub held: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentTrace {
    pub points: Vec<TracePoint>,
    pub detected_s: Vec<f64>,
    pub planted_s: Vec<f64>,
    pub evictions: u64,
}

pub fn segment(req: &SegmentRequest) -> Result<SegmentTrace, String> {
    if req.scenes.is_empty() {
        return Err("add at least one scene".into());
    }
    let spec = SyntheticSpec {
        width: 32,
        height: 24,
        fps: 1.0,
        seed: req.seed,
        scenes: req
            .scenes
            .iter()
            .map(|s| SceneSpec {
                duration_s: s.duration_s,
                intensity: s.intensity,
                noise: s.noise,
                ocr: vec![],
                detections: vec![],
            })
            .collect(),
    };
    let stream = generate(&spec).map_err(|e| e.to_string())?;
    let policy = match req.fixed_interval_s {
        Some(s) => BoundaryPolicy::fixed_length(s),
        None => BoundaryPolicy::EventCentric {
            delta: req.delta,
            min_len: req.min_len,
        },
    };
    let config = StmConfig {
        capacity: req.capacity,
        policy,
        seed: req.seed,
        ..StmConfig::default()
    };
    let mut stm = ShortTermMemory::new(config);
    let mut points = Vec::with_capacity(stream.frames.len());
    for (meta, image) in stream.frames {
        let hist = compute_histogram(&image, config.bin_count).map_err(|e| e.to_string())?;
        let rho = match stm.active() {
            Some(e) => Some(
                pearson_correlation(&hist, &e.state.mean_histogram).map_err(|e| e.to_string())?,
            ),
            None => None,
        };
        let intensity = image.mean_intensity();
        let frame = Frame::new(
            meta.index,
            RawFrame {
                timestamp_s: meta.timestamp_s,
                image,
                source_path: None,
            },
        );
        let result = stm.admit(Arc::new(frame)).map_err(|e| e.to_string())?;
        points.push(TracePoint {
            t: meta.timestamp_s,
            intensity,
            rho,
            outcome: match result.outcome {
                AdmitOutcome::Appended => "appended",
                AdmitOutcome::ReservoirReplaced { .. } => "replaced",
                AdmitOutcome::ReservoirRejected => "rejected",
                AdmitOutcome::BoundaryStartedNewEvent => "boundary",
            },
            held: stm.total_held(),
            events: stm.events().len(),
        });
    }
    Ok(SegmentTrace {
        points,
        detected_s: stm.stats().boundary_timestamps.clone(),
        planted_s: stream.truth.boundaries_s,
        evictions: stm.stats().evictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReservoirReport {
    pub frequencies: Vec<f64>,
    pub expected: f64,
    pub sigma: f64,
}

/// Inclusion frequency of each frame of a single-event stream over `trials` runs.
pub fn reservoir(
    n: u64,
    capacity: usize,
    trials: u32,
    seed: u64,
) -> Result<ReservoirReport, String> {
    if capacity == 0 || n <= capacity as u64 {
        return Err(format!("need n > K (n = {n}, K = {capacity})"));
    }
    if trials == 0 {
        return Err("need at least one trial".into());
    }
    let frames: Vec<Arc<Frame>> = (0..n)
        .map(|i| {
            Arc::new(Frame::new(
                i,
                RawFrame {
                    timestamp_s: i as f64,
                    image: GrayImage::filled(4, 4, 100),
                    source_path: None,
                },
            ))
        })
        .collect();
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u32; n as usize];
    for _ in 0..trials {
        let mut stm = ShortTermMemory::new(StmConfig {
            capacity,
            seed: seeds.random(),
            ..StmConfig::default()
        });
        for f in &frames {
            stm.admit(Arc::clone(f)).map_err(|e| e.to_string())?;
        }
        for f in &stm.snapshot().frames {
            counts[f.frame.stream_index as usize] += 1;
        }
    }
    let p = capacity as f64 / n as f64;
    Ok(ReservoirReport {
        frequencies: counts.iter().map(|&c| c as f64 / trials as f64).collect(),
        expected: p,
        sigma: (p * (1.0 - p) / trials as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct GrpoRequest {
    pub rewards: Vec<f64>,
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrpoReport {
    pub advantages: Vec<f64>,
    pub terms: Vec<f64>,
    pub clipped: Vec<bool>,
    pub objective: f64,
}

pub fn grpo(req: &GrpoRequest) -> Result<GrpoReport, String> {
    let input = GroupInput {
        rewards: req.rewards.clone(),
        ratios: req.ratios.clone(),
        epsilon: req.epsilon,
    };
    let out = evaluate_group(&input).map_err(|e| e.to_string())?;
    let eps = req.epsilon.unwrap_or(streammem::rl::DEFAULT_EPSILON);
    let ratios = req
        .ratios
        .clone()
        .unwrap_or_else(|| vec![1.0; out.advantages.len()]);
    let terms: Vec<f64> = ratios
        .iter()
        .zip(&out.advantages)
        .map(|(&r, &a)| surrogate_term(r, a, eps))
        .collect();
    let clipped = ratios
        .iter()
        .zip(&terms)
        .zip(&out.advantages)
        .map(|((&r, &t), &a)| t != r * a)
        .collect();
    Ok(GrpoReport {
        advantages: out.advantages,
        terms,
        clipped,
        objective: out.objective,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn from_js<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, JsError> {
    serde_json::from_str(json).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = segmentTrace)]
pub fn segment_trace_js(request: &str) -> Result<String, JsError> {
    to_js(segment(&from_js(request)?))
}

#[wasm_bindgen(js_name = reservoirFrequencies)]
pub fn reservoir_js(n: u32, capacity: u32, trials: u32, seed: u32) -> Result<String, JsError> {
    to_js(reservoir(n as u64, capacity as usize, trials, seed as u64))
}

#[wasm_bindgen(js_name = groupAdvantages)]
pub fn grpo_js(request: &str) -> Result<String, JsError> {
    to_js(grpo(&from_js(request)?))
}
