//! On-disk frame directories: `{index:06}.png` images plus a `meta.jsonl`
//! sidecar with one `{"index": int, "timestamp_s": float}` line per frame.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::FrameError;
use crate::frame::{luma, GrayImage, RawFrame};

pub const META_FILE: &str = "meta.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: u64,
    pub timestamp_s: f64,
}

pub fn frame_file_name(index: u64) -> String {
    format!("{index:06}.png")
}

/// An ordered frame directory, decoded lazily.
#[derive(Debug, Clone)]
pub struct FrameDirectory {
    root: PathBuf,
    entries: Vec<FrameMeta>,
}

/// Opens `path` and orders its frames by the sidecar's `index` field.
pub fn load_frame_directory(path: impl AsRef<Path>) -> Result<FrameDirectory, FrameError> {
    FrameDirectory::open(path)
}

impl FrameDirectory {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FrameError> {
        let root = path.as_ref().to_path_buf();
        let meta_path = root.join(META_FILE);
        if !meta_path.is_file() {
            return Err(FrameError::Format {
                path: root,
                reason: format!("missing sidecar {META_FILE}"),
            });
        }
        let file = File::open(&meta_path).map_err(|source| FrameError::Io {
            path: meta_path.clone(),
            source,
        })?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| FrameError::Io {
                path: meta_path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let meta: FrameMeta = serde_json::from_str(&line).map_err(|e| FrameError::Format {
                path: meta_path.clone(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
            entries.push(meta);
        }
        entries.sort_by_key(|m| m.index);
        Ok(Self { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FrameMeta] {
        &self.entries
    }

    pub fn path_of(&self, index: u64) -> PathBuf {
        self.root.join(frame_file_name(index))
    }

    /// Timestamp of the last frame, if any.
    pub fn end_timestamp(&self) -> Option<f64> {
        self.entries.last().map(|m| m.timestamp_s)
    }

    pub fn read(&self, meta: &FrameMeta) -> Result<RawFrame, FrameError> {
        let path = self.path_of(meta.index);
        let image = read_png_gray(&path)?;
        Ok(RawFrame {
            timestamp_s: meta.timestamp_s,
            image,
            source_path: Some(path),
        })
    }

    /// Iterates decoded frames starting at the `skip`-th sidecar entry.
    pub fn frames_from(
        &self,
        skip: usize,
    ) -> impl Iterator<Item = Result<RawFrame, FrameError>> + '_ {
        self.entries.iter().skip(skip).map(move |m| self.read(m))
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<RawFrame, FrameError>> + '_ {
        self.frames_from(0)
    }
}

/// Decodes an 8-bit PNG (gray, gray+alpha, RGB, RGBA or indexed) to grayscale.
pub fn read_png_gray(path: &Path) -> Result<GrayImage, FrameError> {
    let image_err = |reason: String| FrameError::Image {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| image_err(e.to_string()))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| image_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| image_err(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let pixels = match info.color_type {
        png::ColorType::Grayscale => buf,
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => buf
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Indexed => return Err(image_err("unexpanded palette".into())),
    };
    GrayImage::new(info.width, info.height, pixels).map_err(|e| image_err(e.to_string()))
}

pub fn encode_png_gray(image: &GrayImage) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width, image.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| e.to_string())?;
        writer
            .write_image_data(&image.pixels)
            .map_err(|e| e.to_string())?;
    }
    Ok(out)
}

pub fn write_png_gray(path: &Path, image: &GrayImage) -> std::io::Result<()> {
    let bytes = encode_png_gray(image).map_err(std::io::Error::other)?;
    std::fs::write(path, bytes)
}

/// Writes frames plus the sidecar into `dir`, creating it if needed.
pub fn write_frame_directory<'a, I>(dir: &Path, frames: I) -> std::io::Result<usize>
where
    I: IntoIterator<Item = (FrameMeta, &'a GrayImage)>,
{
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut meta = BufWriter::new(File::create(dir.join(META_FILE))?);
    let mut count = 0;
    for (m, image) in frames {
        write_png_gray(&dir.join(frame_file_name(m.index)), image)?;
        serde_json::to_writer(&mut meta, &m)?;
        meta.write_all(b"\n")?;
        count += 1;
    }
    meta.flush()?;
    Ok(count)
}
