//! The K-frame, event-structured short-term buffer.
//!
//! Frames are appended to the active event while it has processed at most K
//! frames; whole events are evicted oldest-first whenever the total held count
//! exceeds K. Once the active event alone has processed more than K frames,
//! the n-th frame is admitted with probability K/n and replaces a uniformly
//! chosen held frame (Algorithm R).

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FrameError, MemoryError};
use crate::frame::{frame_label, Frame};
use crate::histogram::{compute_histogram, Histogram, DEFAULT_BIN_COUNT};
use crate::segment::{BoundaryPolicy, EventState};

pub const DEFAULT_CAPACITY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StmConfig {
    pub capacity: usize,
    pub bin_count: usize,
    pub policy: BoundaryPolicy,
    /// Move an event to long-term memory as soon as a boundary closes it,
    /// instead of waiting for budget pressure.
    pub archive_on_boundary: bool,
    pub seed: u64,
}

impl Default for StmConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            bin_count: DEFAULT_BIN_COUNT,
            policy: BoundaryPolicy::default(),
            archive_on_boundary: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeldFrame {
    pub frame: Arc<Frame>,
    pub histogram: Histogram,
}

/// An event and the frames it currently holds, sorted by timestamp.
#[derive(Debug, Clone)]
pub struct Event {
    pub state: EventState,
    pub held: Vec<HeldFrame>,
    pub finalized: bool,
}

impl Event {
    pub fn id(&self) -> u64 {
        self.state.event_id
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }

    pub fn frames(&self) -> impl Iterator<Item = &Arc<Frame>> {
        self.held.iter().map(|h| &h.frame)
    }

    fn refresh_mean(&mut self) {
        let Event { state, held, .. } = self;
        state.update_running_mean(held.iter().map(|h| &h.histogram));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdmitOutcome {
    Appended,
    ReservoirReplaced { slot: usize },
    ReservoirRejected,
    BoundaryStartedNewEvent,
}

#[derive(Debug)]
pub struct AdmitResult {
    pub outcome: AdmitOutcome,
    /// Finalized events handed off for archival, oldest first.
    pub evicted_events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservoirDecision {
    Accept { replace_slot: usize },
    Reject,
}

/// Admits the n-th frame of a saturated event with probability `capacity / n`.
///
/// Draws `j` uniformly from `[0, n)`; the frame is kept iff `j < capacity`, in
/// which case `j` is also the (uniform) slot to replace.
pub fn reservoir_decide<R: Rng + ?Sized>(
    n: u64,
    capacity: usize,
    rng: &mut R,
) -> Result<ReservoirDecision, MemoryError> {
    if n <= capacity as u64 {
        return Err(MemoryError::ReservoirPrecondition { n, capacity });
    }
    let j = rng.random_range(0..n);
    Ok(if j < capacity as u64 {
        ReservoirDecision::Accept {
            replace_slot: j as usize,
        }
    } else {
        ReservoirDecision::Reject
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StmStats {
    pub frames_admitted: u64,
    pub events_created: u64,
    pub evictions: u64,
    pub reservoir_trials: u64,
    pub reservoir_accepts: u64,
    /// Start timestamps of every event opened by a boundary.
    pub boundary_timestamps: Vec<f64>,
}

impl StmStats {
    pub fn reservoir_accept_rate(&self) -> Option<f64> {
        (self.reservoir_trials > 0)
            .then(|| self.reservoir_accepts as f64 / self.reservoir_trials as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ShortTermMemory {
    config: StmConfig,
    events: VecDeque<Event>,
    rng: ChaCha8Rng,
    next_event_id: u64,
    last_timestamp: Option<f64>,
    stats: StmStats,
}

impl ShortTermMemory {
    pub fn new(config: StmConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            events: VecDeque::new(),
            next_event_id: 0,
            last_timestamp: None,
            stats: StmStats::default(),
        }
    }

    pub fn config(&self) -> &StmConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn events(&self) -> impl ExactSizeIterator<Item = &Event> {
        self.events.iter()
    }

    pub fn active(&self) -> Option<&Event> {
        self.events.back()
    }

    pub fn total_held(&self) -> usize {
        self.events.iter().map(Event::held_len).sum()
    }

    pub fn stats(&self) -> &StmStats {
        &self.stats
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_timestamp
    }

    /// Routes one frame through boundary detection, append or reservoir
    /// sampling, and FIFO eviction.
    pub fn admit(&mut self, frame: Arc<Frame>) -> Result<AdmitResult, MemoryError> {
        if let Some(previous) = self.last_timestamp {
            if frame.timestamp_s <= previous || frame.timestamp_s.is_nan() {
                return Err(MemoryError::StreamOrder {
                    previous,
                    current: frame.timestamp_s,
                });
            }
        }
        let histogram = compute_histogram(&frame.image, self.config.bin_count)?;
        self.last_timestamp = Some(frame.timestamp_s);
        self.stats.frames_admitted += 1;

        let mut evicted = Vec::new();
        let timestamp = frame.timestamp_s;
        let held = HeldFrame { frame, histogram };

        let Some(active) = self.events.back_mut() else {
            self.open_event(held);
            return Ok(AdmitResult {
                outcome: AdmitOutcome::Appended,
                evicted_events: evicted,
            });
        };

        let outcome = if self
            .config
            .policy
            .decide(&active.state, &held.histogram, timestamp)?
        {
            active.finalized = true;
            if self.config.archive_on_boundary {
                let done = self.events.pop_back().expect("active event exists");
                self.stats.evictions += 1;
                evicted.push(done);
            }
            self.stats.boundary_timestamps.push(timestamp);
            self.open_event(held);
            AdmitOutcome::BoundaryStartedNewEvent
        } else {
            active.state.frames_processed += 1;
            active.state.last_timestamp_s = timestamp;
            let n = active.state.frames_processed;
            if n <= self.config.capacity as u64 {
                active.held.push(held);
                active.refresh_mean();
                AdmitOutcome::Appended
            } else {
                debug_assert_eq!(active.held.len(), self.config.capacity);
                self.stats.reservoir_trials += 1;
                match reservoir_decide(n, self.config.capacity, &mut self.rng)? {
                    ReservoirDecision::Accept { replace_slot } => {
                        self.stats.reservoir_accepts += 1;
                        // drop the victim and append, keeping timestamp order
                        active.held.remove(replace_slot);
                        active.held.push(held);
                        active.refresh_mean();
                        AdmitOutcome::ReservoirReplaced { slot: replace_slot }
                    }
                    ReservoirDecision::Reject => AdmitOutcome::ReservoirRejected,
                }
            }
        };

        while self.total_held() > self.config.capacity {
            evicted.push(self.evict_oldest()?);
        }
        Ok(AdmitResult {
            outcome,
            evicted_events: evicted,
        })
    }

    /// Removes the oldest event whole. The active event is never evicted here.
    pub fn evict_oldest(&mut self) -> Result<Event, MemoryError> {
        if self.events.len() < 2 {
            return Err(MemoryError::EvictionImpossible);
        }
        let mut event = self.events.pop_front().expect("len checked");
        event.finalized = true;
        self.stats.evictions += 1;
        Ok(event)
    }

    /// Finalizes and removes every held event, oldest first (end of stream).
    pub fn drain(&mut self) -> Vec<Event> {
        self.events
            .drain(..)
            .map(|mut e| {
                e.finalized = true;
                e
            })
            .collect()
    }

    fn open_event(&mut self, first: HeldFrame) {
        let state = EventState::open(
            self.next_event_id,
            &first.histogram,
            first.frame.timestamp_s,
        );
        self.next_event_id += 1;
        self.stats.events_created += 1;
        self.events.push_back(Event {
            state,
            held: vec![first],
            finalized: false,
        });
    }

    /// Held frames in timestamp order, relabeled `Frame j | t s` from j = 0.
    pub fn snapshot(&self) -> Snapshot {
        let frames = self
            .events
            .iter()
            .flat_map(|e| e.held.iter())
            .enumerate()
            .map(|(j, h)| SnapshotFrame {
                label: frame_label(j as u64, h.frame.timestamp_s),
                frame: Arc::clone(&h.frame),
            })
            .collect();
        Snapshot { frames }
    }

    pub fn dump(&self) -> StmDump {
        StmDump {
            capacity: self.config.capacity,
            events: self
                .events
                .iter()
                .map(|e| StmDumpEvent {
                    event_id: e.state.event_id,
                    n: e.state.frames_processed,
                    start_s: e.state.start_timestamp_s,
                    end_s: e.state.last_timestamp_s,
                    held: e.held.iter().map(|h| h.frame.stream_index).collect(),
                })
                .collect(),
        }
    }

    pub fn checkpoint(&self) -> StmCheckpoint {
        StmCheckpoint {
            config: self.config,
            next_event_id: self.next_event_id,
            last_timestamp: self.last_timestamp,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            stats: self.stats.clone(),
            events: self
                .events
                .iter()
                .map(|e| CheckpointEvent {
                    event_id: e.state.event_id,
                    frames_processed: e.state.frames_processed,
                    start_timestamp_s: e.state.start_timestamp_s,
                    last_timestamp_s: e.state.last_timestamp_s,
                    finalized: e.finalized,
                    held: e
                        .held
                        .iter()
                        .map(|h| FrameRef {
                            stream_index: h.frame.stream_index,
                            timestamp_s: h.frame.timestamp_s,
                            source_path: h.frame.source_path.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds a memory from a checkpoint, reloading pixels through `load`.
    pub fn restore<F>(checkpoint: &StmCheckpoint, mut load: F) -> Result<Self, MemoryError>
    where
        F: FnMut(&FrameRef) -> Result<Arc<Frame>, FrameError>,
    {
        let config = checkpoint.config;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let word_pos: u128 = checkpoint
            .rng_word_pos
            .parse()
            .map_err(|_| FrameError::Format {
                path: PathBuf::new(),
                reason: format!("bad rng position {:?}", checkpoint.rng_word_pos),
            })?;
        rng.set_word_pos(word_pos);
        let mut events = VecDeque::with_capacity(checkpoint.events.len());
        for ce in &checkpoint.events {
            let mut held = Vec::with_capacity(ce.held.len());
            for r in &ce.held {
                let frame = load(r)?;
                let histogram = compute_histogram(&frame.image, config.bin_count)?;
                held.push(HeldFrame { frame, histogram });
            }
            let first =
                held.first()
                    .map(|h| h.histogram.clone())
                    .ok_or_else(|| FrameError::Format {
                        path: PathBuf::new(),
                        reason: format!("checkpoint event {} holds no frames", ce.event_id),
                    })?;
            let mut event = Event {
                state: EventState {
                    event_id: ce.event_id,
                    frames_processed: ce.frames_processed,
                    mean_histogram: first,
                    start_timestamp_s: ce.start_timestamp_s,
                    last_timestamp_s: ce.last_timestamp_s,
                },
                held,
                finalized: ce.finalized,
            };
            event.refresh_mean();
            events.push_back(event);
        }
        Ok(Self {
            config,
            events,
            rng,
            next_event_id: checkpoint.next_event_id,
            last_timestamp: checkpoint.last_timestamp,
            stats: checkpoint.stats.clone(),
        })
    }
}

/// One labeled frame of a [`Snapshot`].
#[derive(Debug, Clone)]
pub struct SnapshotFrame {
    pub label: String,
    pub frame: Arc<Frame>,
}

/// Immutable view of the short-term memory handed to the agent.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub frames: Vec<SnapshotFrame>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&SnapshotFrame> {
        self.frames.get(index)
    }

    pub fn last(&self) -> Option<&SnapshotFrame> {
        self.frames.last()
    }

    pub fn max_timestamp(&self) -> Option<f64> {
        self.frames.last().map(|f| f.frame.timestamp_s)
    }

    /// Drops frames newer than `t` and relabels the rest.
    pub fn until(&self, t: f64) -> Snapshot {
        let frames = self
            .frames
            .iter()
            .filter(|f| f.frame.timestamp_s <= t)
            .enumerate()
            .map(|(j, f)| SnapshotFrame {
                label: frame_label(j as u64, f.frame.timestamp_s),
                frame: Arc::clone(&f.frame),
            })
            .collect();
        Snapshot { frames }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmDump {
    pub capacity: usize,
    pub events: Vec<StmDumpEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmDumpEvent {
    pub event_id: u64,
    pub n: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub held: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub stream_index: u64,
    pub timestamp_s: f64,
    pub source_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEvent {
    pub event_id: u64,
    pub frames_processed: u64,
    pub start_timestamp_s: f64,
    pub last_timestamp_s: f64,
    pub finalized: bool,
    pub held: Vec<FrameRef>,
}

/// Everything needed to resume a [`ShortTermMemory`] bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmCheckpoint {
    pub config: StmConfig,
    pub next_event_id: u64,
    pub last_timestamp: Option<f64>,
    /// ChaCha word position, as a decimal string (u128).
    pub rng_word_pos: String,
    pub stats: StmStats,
    pub events: Vec<CheckpointEvent>,
}
