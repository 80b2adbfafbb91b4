//! Long-term memory: evicted events archived as (anchor image, caption,
//! embedding, change log) tuples, searchable by time range or by meaning.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{CaptionRequest, Captioner, Embedder};
use crate::error::{BackendError, LtmError};
use crate::frame::{Frame, GrayImage};
use crate::stm::Event;

mod persist;

pub use persist::{ANCHOR_DIR, ENTRIES_FILE};

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_MIN_SIMILARITY: f64 = 0.3;

/// One archived event. `caption` and `embedding` are `None` while archival
/// is pending on an unavailable backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedEvent {
    pub event_id: u64,
    /// Relative to the store root: `anchors/{event_id}.png`.
    pub anchor_path: String,
    /// Perception fixture key of the anchor frame.
    pub anchor_key: String,
    pub caption: Option<String>,
    pub embedding: Option<Vec<f64>>,
    pub start_s: f64,
    pub end_s: f64,
    pub change_from_previous: Option<String>,
    pub change_to_next: Option<String>,
    #[serde(skip)]
    pub anchor_missing: bool,
}

impl ArchivedEvent {
    pub fn is_pending(&self) -> bool {
        self.caption.is_none() || self.embedding.is_none()
    }

    pub fn overlaps(&self, start_s: f64, end_s: f64) -> bool {
        self.start_s.max(start_s) <= self.end_s.min(end_s)
    }
}

/// Frames kept aside so a pending entry can be captioned later.
#[derive(Debug, Clone)]
struct PendingArchive {
    event_id: u64,
    frames: Vec<Arc<Frame>>,
}

#[derive(Debug, Clone, Default)]
pub struct LtmStore {
    entries: Vec<ArchivedEvent>,
    dimension: Option<usize>,
    root: Option<PathBuf>,
    anchors: HashMap<u64, Arc<GrayImage>>,
    pending: Vec<PendingArchive>,
}

impl PartialEq for LtmStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.dimension == other.dimension
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, LtmError> {
    if a.len() != b.len() {
        return Err(LtmError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(LtmError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

impl LtmStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that rewrites `root` after every archival.
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        Self {
            root: Some(root.into()),
            ..Self::default()
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn set_root(&mut self, root: Option<PathBuf>) {
        self.root = root;
    }

    pub fn entries(&self) -> &[ArchivedEvent] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn get(&self, event_id: u64) -> Option<&ArchivedEvent> {
        self.entries
            .binary_search_by_key(&event_id, |e| e.event_id)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Anchor pixels, from memory or from the persisted PNG.
    pub fn anchor_image(&self, event_id: u64) -> Option<Arc<GrayImage>> {
        if let Some(img) = self.anchors.get(&event_id) {
            return Some(Arc::clone(img));
        }
        let entry = self.get(event_id)?;
        let root = self.root.as_ref()?;
        crate::source::read_png_gray(&root.join(&entry.anchor_path))
            .ok()
            .map(Arc::new)
    }

    /// Archives a finalized event.
    ///
    /// If the captioner or embedder fails, the entry is still appended (and
    /// is retrievable by time) but stays pending until [`retry_pending`]
    /// succeeds.
    ///
    /// [`retry_pending`]: LtmStore::retry_pending
    pub fn archive(
        &mut self,
        event: &Event,
        captioner: &dyn Captioner,
        embedder: &dyn Embedder,
    ) -> Result<&ArchivedEvent, LtmError> {
        let first = event.held.first().ok_or(LtmError::EmptyEvent)?;
        let event_id = event.id();
        if let Some(last) = self.entries.last() {
            debug_assert!(last.event_id < event_id, "event ids must increase");
            debug_assert!(last.end_s <= event.state.start_timestamp_s);
        }
        let anchor = &first.frame;
        self.anchors
            .insert(event_id, Arc::new(anchor.image.clone()));
        self.entries.push(ArchivedEvent {
            event_id,
            anchor_path: format!("{ANCHOR_DIR}/{event_id}.png"),
            anchor_key: anchor.image_key(),
            caption: None,
            embedding: None,
            start_s: event.state.start_timestamp_s,
            end_s: event.state.last_timestamp_s,
            change_from_previous: None,
            change_to_next: None,
            anchor_missing: false,
        });
        let frames: Vec<Arc<Frame>> = event.frames().cloned().collect();
        let index = self.entries.len() - 1;
        if let Err(e) = self.resolve(index, &frames, captioner, embedder) {
            tracing::warn!(event_id, error = %e, "archival deferred");
            self.pending.push(PendingArchive { event_id, frames });
        }
        self.autosave()?;
        Ok(&self.entries[index])
    }

    /// Retries every pending archival; returns how many remain pending.
    pub fn retry_pending(
        &mut self,
        captioner: &dyn Captioner,
        embedder: &dyn Embedder,
    ) -> Result<usize, LtmError> {
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let Ok(index) = self
                .entries
                .binary_search_by_key(&p.event_id, |e| e.event_id)
            else {
                continue;
            };
            if self.resolve(index, &p.frames, captioner, embedder).is_err() {
                self.pending.push(p);
            }
        }
        self.autosave()?;
        Ok(self.pending.len())
    }

    fn resolve(
        &mut self,
        index: usize,
        frames: &[Arc<Frame>],
        captioner: &dyn Captioner,
        embedder: &dyn Embedder,
    ) -> Result<(), BackendError> {
        let entry = &self.entries[index];
        let caption = captioner.caption(&CaptionRequest {
            event_id: entry.event_id,
            frames,
            start_s: entry.start_s,
            end_s: entry.end_s,
        })?;
        let embedding = embedder.embed(&caption)?;
        if let Some(d) = self.dimension {
            if embedding.len() != d {
                return Err(BackendError::Malformed(format!(
                    "embedding has dimension {}, store uses {d}",
                    embedding.len()
                )));
            }
        }
        let previous_log = match index.checked_sub(1).map(|i| &self.entries[i]) {
            Some(prev) => match &prev.caption {
                Some(prev_caption) => Some(captioner.change_log(prev_caption, &caption)?),
                None => None,
            },
            None => None,
        };
        let next_log = match self.entries.get(index + 1) {
            Some(next) => match &next.caption {
                Some(next_caption) => Some(captioner.change_log(&caption, next_caption)?),
                None => None,
            },
            None => None,
        };

        self.dimension.get_or_insert(embedding.len());
        if let Some(log) = previous_log {
            self.entries[index - 1].change_to_next = Some(log.clone());
            self.entries[index].change_from_previous = Some(log);
        }
        if let Some(log) = next_log {
            self.entries[index + 1].change_from_previous = Some(log.clone());
            self.entries[index].change_to_next = Some(log);
        }
        let entry = &mut self.entries[index];
        entry.caption = Some(caption);
        entry.embedding = Some(embedding);
        Ok(())
    }

    fn autosave(&self) -> Result<(), LtmError> {
        match &self.root {
            Some(root) => self.persist(root),
            None => Ok(()),
        }
    }

    /// Entries whose time range overlaps `[start_s, end_s]` (closed), by start time.
    pub fn search_temporal(
        &self,
        start_s: f64,
        end_s: f64,
    ) -> Result<Vec<&ArchivedEvent>, LtmError> {
        if start_s > end_s || start_s.is_nan() || end_s.is_nan() {
            return Err(LtmError::InvertedRange {
                start: start_s,
                end: end_s,
            });
        }
        // entries are ordered and non-overlapping, so the end times are sorted too
        let lo = self.entries.partition_point(|e| e.end_s < start_s);
        Ok(self.entries[lo..]
            .iter()
            .take_while(|e| e.start_s <= end_s)
            .collect())
    }

    /// Top-`k` resolved entries with cosine similarity strictly above
    /// `min_sim`, highest first; ties go to the older event.
    pub fn search_semantic(
        &self,
        query: &str,
        embedder: &dyn Embedder,
        k: usize,
        min_sim: f64,
    ) -> Result<Vec<(&ArchivedEvent, f64)>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidArgument("k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&min_sim) {
            return Err(SearchError::InvalidArgument(format!(
                "min_sim {min_sim} outside [-1, 1]"
            )));
        }
        let q = embedder.embed(query)?;
        Ok(self.rank(&q, k, min_sim))
    }

    /// Ranking over a precomputed query vector. A zero query matches nothing.
    pub fn rank(&self, query: &[f64], k: usize, min_sim: f64) -> Vec<(&ArchivedEvent, f64)> {
        let mut scored: Vec<(&ArchivedEvent, f64)> = self
            .entries
            .iter()
            .filter_map(|e| {
                let emb = e.embedding.as_ref()?;
                let s = cosine_similarity(query, emb).ok()?;
                (s > min_sim).then_some((e, s))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.event_id.cmp(&b.0.event_id)));
        scored.truncate(k);
        scored
    }

    /// The store as seen at time `t`: only events that ended by `t`, with
    /// change logs pointing at unseen successors removed.
    pub fn visible_until(&self, t: f64) -> LtmStore {
        let mut entries: Vec<ArchivedEvent> = self
            .entries
            .iter()
            .filter(|e| e.end_s <= t)
            .cloned()
            .collect();
        if let Some(last) = entries.last_mut() {
            let successor_visible = self
                .entries
                .iter()
                .any(|e| e.event_id > last.event_id && e.end_s <= t);
            if !successor_visible {
                last.change_to_next = None;
            }
        }
        let anchors = entries
            .iter()
            .filter_map(|e| {
                self.anchors
                    .get(&e.event_id)
                    .map(|a| (e.event_id, Arc::clone(a)))
            })
            .collect();
        LtmStore {
            entries,
            dimension: self.dimension,
            root: self.root.clone(),
            anchors,
            pending: Vec::new(),
        }
    }

    /// Keeps the first `len` entries, as they were before any later archival.
    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
        if let Some(last) = self.entries.last_mut() {
            last.change_to_next = None;
        }
        let kept: std::collections::HashSet<u64> =
            self.entries.iter().map(|e| e.event_id).collect();
        self.anchors.retain(|id, _| kept.contains(id));
        self.pending.retain(|p| kept.contains(&p.event_id));
    }

    /// Inserts an entry directly; used when building stores by hand.
    pub fn push_entry(&mut self, entry: ArchivedEvent, anchor: Option<GrayImage>) {
        if let Some(emb) = &entry.embedding {
            self.dimension.get_or_insert(emb.len());
        }
        if let Some(img) = anchor {
            self.anchors.insert(entry.event_id, Arc::new(img));
        }
        self.entries.push(entry);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Ltm(#[from] LtmError),
}
