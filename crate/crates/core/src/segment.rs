//! Online event boundary detection.
//!
//! A new frame continues the active event unless the event has already
//! processed more than `min_len` frames and the Pearson correlation between
//! the frame's histogram and the event's mean histogram drops below `delta`.

use serde::{Deserialize, Serialize};

use crate::error::FrameError;
use crate::histogram::Histogram;

pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_MIN_LEN: u64 = 8;
pub const DEFAULT_FIXED_INTERVAL_S: f64 = 30.0;

const DEGENERATE_EQ_TOL: f64 = 1e-12;

/// Bookkeeping for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventState {
    pub event_id: u64,
    /// Frames routed to this event since it opened, including reservoir rejects.
    pub frames_processed: u64,
    /// Mean histogram of the frames currently held.
    pub mean_histogram: Histogram,
    pub start_timestamp_s: f64,
    pub last_timestamp_s: f64,
}

impl EventState {
    pub fn open(event_id: u64, first: &Histogram, timestamp_s: f64) -> Self {
        Self {
            event_id,
            frames_processed: 1,
            mean_histogram: first.clone(),
            start_timestamp_s: timestamp_s,
            last_timestamp_s: timestamp_s,
        }
    }

    /// Recomputes the mean from the histograms of the held frames.
    ///
    /// Leaves the mean untouched if `held` is empty.
    pub fn update_running_mean<'a, I>(&mut self, held: I)
    where
        I: IntoIterator<Item = &'a Histogram>,
    {
        if let Some(mean) = Histogram::mean_of(held) {
            self.mean_histogram = mean;
        }
    }
}

/// Population Pearson correlation over histogram bins.
///
/// When either input has zero variance the result is 1.0 if the inputs are
/// element-wise equal (within 1e-12) and 0.0 otherwise.
pub fn pearson_correlation(a: &Histogram, b: &Histogram) -> Result<f64, FrameError> {
    let (a, b) = (a.bins(), b.bins());
    if a.len() != b.len() {
        return Err(FrameError::BinMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(FrameError::TooFewBins(a.len()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    let denom = (var_a * var_b).sqrt();
    if denom == 0.0 {
        let equal = a
            .iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= DEGENERATE_EQ_TOL);
        return Ok(if equal { 1.0 } else { 0.0 });
    }
    Ok((cov / denom).clamp(-1.0, 1.0))
}

/// The histogram-correlation boundary test.
pub fn should_split(
    state: &EventState,
    h_new: &Histogram,
    delta: f64,
    min_len: u64,
) -> Result<bool, FrameError> {
    if state.frames_processed <= min_len {
        return Ok(false);
    }
    Ok(pearson_correlation(&state.mean_histogram, h_new)? < delta)
}

/// How the short-term memory decides where events begin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Content-driven boundaries from histogram correlation.
    EventCentric { delta: f64, min_len: u64 },
    /// A boundary at every multiple of `interval_s`, regardless of content.
    FixedLength { interval_s: f64 },
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        BoundaryPolicy::EventCentric {
            delta: DEFAULT_DELTA,
            min_len: DEFAULT_MIN_LEN,
        }
    }
}

impl BoundaryPolicy {
    pub fn fixed_length(interval_s: f64) -> Self {
        BoundaryPolicy::FixedLength { interval_s }
    }

    pub fn decide(
        &self,
        state: &EventState,
        h_new: &Histogram,
        timestamp_s: f64,
    ) -> Result<bool, FrameError> {
        match *self {
            BoundaryPolicy::EventCentric { delta, min_len } => {
                should_split(state, h_new, delta, min_len)
            }
            BoundaryPolicy::FixedLength { interval_s } => {
                Ok(fixed_segment_of(timestamp_s, interval_s)
                    != fixed_segment_of(state.start_timestamp_s, interval_s))
            }
        }
    }

    /// Short name used in reports: `event` or `fixed:{interval}`.
    pub fn name(&self) -> String {
        match self {
            BoundaryPolicy::EventCentric { .. } => "event".to_string(),
            BoundaryPolicy::FixedLength { interval_s } => format!("fixed:{interval_s}"),
        }
    }
}

fn fixed_segment_of(timestamp_s: f64, interval_s: f64) -> i64 {
    (timestamp_s / interval_s + 1e-9).floor() as i64
}
