//! Fixed-rate sampling of a timestamped frame source.
//!
//! Time is divided into windows of `1 / fps` seconds starting at zero. The
//! first source frame whose timestamp falls into a window not yet represented
//! is emitted; the rest of that window is dropped.

use serde::{Deserialize, Serialize};

use crate::error::FrameError;
use crate::frame::{Frame, RawFrame};

pub const DEFAULT_FPS: f64 = 1.0;

// Absorbs representation error for timestamps such as 30/30 or 0.1 * 10.
const WINDOW_EPS: f64 = 1e-9;

/// Resumable cursor state of a [`Sampler`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub last_window: Option<i64>,
    pub last_source_timestamp: Option<f64>,
    pub next_index: u64,
    /// Number of source frames consumed so far.
    pub consumed: u64,
}

pub fn window_of(timestamp_s: f64, fps: f64) -> i64 {
    (timestamp_s * fps + WINDOW_EPS).floor() as i64
}

/// Lazily samples `source` at `fps`. See [`sample_stream`].
pub struct Sampler<I> {
    source: I,
    fps: f64,
    state: SamplerState,
    failed: bool,
}

/// Wraps a source iterator into a lazily sampled stream of [`Frame`]s.
pub fn sample_stream<I>(source: I, fps: f64) -> Result<Sampler<I::IntoIter>, FrameError>
where
    I: IntoIterator<Item = Result<RawFrame, FrameError>>,
{
    Sampler::resume(source, fps, SamplerState::default())
}

impl<I> Sampler<I>
where
    I: Iterator<Item = Result<RawFrame, FrameError>>,
{
    /// Continues sampling from a saved state; `source` must already be
    /// positioned after `state.consumed` frames.
    pub fn resume<S>(source: S, fps: f64, state: SamplerState) -> Result<Self, FrameError>
    where
        S: IntoIterator<IntoIter = I, Item = Result<RawFrame, FrameError>>,
    {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(FrameError::InvalidFps(fps));
        }
        Ok(Self {
            source: source.into_iter(),
            fps,
            state,
            failed: false,
        })
    }

    pub fn state(&self) -> SamplerState {
        self.state
    }
}

impl<I> Iterator for Sampler<I>
where
    I: Iterator<Item = Result<RawFrame, FrameError>>,
{
    type Item = Result<Frame, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let raw = match self.source.next()? {
                Ok(raw) => raw,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            self.state.consumed += 1;
            if let Some(previous) = self.state.last_source_timestamp {
                if raw.timestamp_s < previous || raw.timestamp_s.is_nan() {
                    self.failed = true;
                    return Some(Err(FrameError::StreamOrder {
                        previous,
                        current: raw.timestamp_s,
                    }));
                }
            }
            self.state.last_source_timestamp = Some(raw.timestamp_s);
            let window = window_of(raw.timestamp_s, self.fps);
            if self.state.last_window.is_some_and(|w| window <= w) {
                continue;
            }
            self.state.last_window = Some(window);
            let frame = Frame::new(self.state.next_index, raw);
            self.state.next_index += 1;
            return Some(Ok(frame));
        }
    }
}
