use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ArchivedEvent, LtmStore};
use crate::error::LtmError;
use crate::source::write_png_gray;

pub const ENTRIES_FILE: &str = "entries.jsonl";
pub const ANCHOR_DIR: &str = "anchors";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LtmError + '_ {
    move |source| LtmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl LtmStore {
    /// Writes `entries.jsonl` and any in-memory anchors under `root`.
    pub fn persist(&self, root: &Path) -> Result<(), LtmError> {
        let anchor_dir = root.join(ANCHOR_DIR);
        std::fs::create_dir_all(&anchor_dir).map_err(io_err(&anchor_dir))?;
        for entry in &self.entries {
            let Some(image) = self.anchors.get(&entry.event_id) else {
                continue;
            };
            let path = root.join(&entry.anchor_path);
            if path.exists() {
                continue;
            }
            write_png_gray(&path, image).map_err(|e| LtmError::Image {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        }

        let final_path = root.join(ENTRIES_FILE);
        let tmp_path = root.join(format!("{ENTRIES_FILE}.tmp"));
        {
            let file = File::create(&tmp_path).map_err(io_err(&tmp_path))?;
            let mut out = BufWriter::new(file);
            for entry in &self.entries {
                serde_json::to_writer(&mut out, entry).map_err(|e| LtmError::Io {
                    path: tmp_path.clone(),
                    source: e.into(),
                })?;
                out.write_all(b"\n").map_err(io_err(&tmp_path))?;
            }
            out.flush().map_err(io_err(&tmp_path))?;
        }
        std::fs::rename(&tmp_path, &final_path).map_err(io_err(&final_path))
    }

    /// Reads a store written by [`persist`](LtmStore::persist). Anchors are
    /// read lazily; entries whose PNG is absent load with `anchor_missing`.
    pub fn load(root: &Path) -> Result<LtmStore, LtmError> {
        let path = root.join(ENTRIES_FILE);
        let file = File::open(&path).map_err(io_err(&path))?;
        let mut store = LtmStore {
            root: Some(root.to_path_buf()),
            ..LtmStore::default()
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| LtmError::CorruptEntry {
                path: path.clone(),
                line: i + 1,
                reason,
            };
            let mut entry: ArchivedEvent =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if let Some(prev) = store.entries.last() {
                if prev.event_id >= entry.event_id {
                    return Err(corrupt(format!(
                        "event_id {} does not follow {}",
                        entry.event_id, prev.event_id
                    )));
                }
            }
            if let (Some(d), Some(emb)) = (store.dimension, &entry.embedding) {
                if emb.len() != d {
                    return Err(corrupt(format!("embedding dimension {} != {d}", emb.len())));
                }
            }
            entry.anchor_missing = !root.join(&entry.anchor_path).is_file();
            store.push_entry(entry, None);
        }
        Ok(store)
    }
}
