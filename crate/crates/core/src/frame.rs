//! Sampled frames and the pixel plumbing around them.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::FrameError;

/// An 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(FrameError::Dimension {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Mean pixel intensity, or 0 for an empty image.
    pub fn mean_intensity(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.pixels.iter().map(|&p| u64::from(p)).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

/// One frame as delivered by a source, before 1-FPS sampling.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub timestamp_s: f64,
    pub image: GrayImage,
    pub source_path: Option<PathBuf>,
}

/// A frame of the sampled stream.
///
/// Frames are immutable once created; the memory layers share them behind `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub stream_index: u64,
    pub timestamp_s: f64,
    pub image: GrayImage,
    pub source_path: Option<PathBuf>,
    pub label: String,
}

impl Frame {
    pub fn new(stream_index: u64, raw: RawFrame) -> Self {
        Self {
            label: frame_label(stream_index, raw.timestamp_s),
            stream_index,
            timestamp_s: raw.timestamp_s,
            image: raw.image,
            source_path: raw.source_path,
        }
    }

    pub fn width(&self) -> u32 {
        self.image.width
    }

    pub fn height(&self) -> u32 {
        self.image.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.image.pixels
    }

    /// Identifier used by perception backends to look up fixtures.
    ///
    /// The source file name when the frame came from disk, `frame-{index:06}`
    /// otherwise.
    pub fn image_key(&self) -> String {
        image_key(self.source_path.as_deref(), self.stream_index)
    }
}

pub fn image_key(source_path: Option<&Path>, stream_index: u64) -> String {
    source_path
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("frame-{stream_index:06}"))
}

/// `Frame {i} | {t}s`, with the timestamp printed to one decimal.
pub fn frame_label(index: u64, timestamp_s: f64) -> String {
    format!("Frame {index} | {}s", Seconds(timestamp_s))
}

/// Displays seconds with one decimal place (`12.5`, `13.0`).
#[derive(Debug, Clone, Copy)]
pub struct Seconds(pub f64);

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

/// BT.601 luma conversion of a row-major RGB buffer.
pub fn to_grayscale(rgb: &[u8], width: u32, height: u32) -> Result<Vec<u8>, FrameError> {
    let expected = 3 * width as usize * height as usize;
    if rgb.len() != expected {
        return Err(FrameError::Dimension {
            expected,
            actual: rgb.len(),
        });
    }
    Ok(rgb
        .chunks_exact(3)
        .map(|px| luma(px[0], px[1], px[2]))
        .collect())
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}
