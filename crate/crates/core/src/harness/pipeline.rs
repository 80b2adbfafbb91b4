//! Frames in, memory out: the admit/archive loop and a resumable cursor over
//! a frame directory.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::ArchivalBackends;
use crate::frame::{Frame, RawFrame};
use crate::ltm::LtmStore;
use crate::sampler::{Sampler, SamplerState};
use crate::source::{read_png_gray, FrameDirectory};
use crate::stm::{AdmitOutcome, ShortTermMemory, StmCheckpoint, StmConfig};

/// Short-term memory feeding a long-term store.
///
/// With archival backends every evicted event is archived as it leaves. A
/// pipeline built with [`MemoryPipeline::prebuilt`] already holds the final
/// store and only tracks how much of it existed at each point in time.
#[derive(Clone)]
pub struct MemoryPipeline {
    pub stm: ShortTermMemory,
    pub ltm: LtmStore,
    /// Stream time at which each long-term entry was archived.
    pub archived_at: Vec<f64>,
    archival: Option<ArchivalBackends>,
}

impl MemoryPipeline {
    pub fn new(config: StmConfig, archival: ArchivalBackends) -> Self {
        Self {
            stm: ShortTermMemory::new(config),
            ltm: LtmStore::new(),
            archived_at: Vec::new(),
            archival: Some(archival),
        }
    }

    pub fn prebuilt(stm: ShortTermMemory, ltm: LtmStore, archived_at: Vec<f64>) -> Self {
        Self {
            stm,
            ltm,
            archived_at,
            archival: None,
        }
    }

    pub fn is_archiving(&self) -> bool {
        self.archival.is_some()
    }

    pub fn push(&mut self, frame: Frame) -> Result<AdmitOutcome, HarnessError> {
        let t = frame.timestamp_s;
        let result = self.stm.admit(Arc::new(frame))?;
        if let Some(backends) = &self.archival {
            for event in &result.evicted_events {
                self.ltm
                    .archive(event, &*backends.captioner, &*backends.embedder)?;
                self.archived_at.push(t);
            }
        }
        Ok(result.outcome)
    }

    /// Entries archived no later than `t`.
    pub fn archived_by(&self, t: f64) -> usize {
        self.archived_at.partition_point(|&a| a <= t)
    }

    /// The long-term store as it stood at stream time `t`.
    pub fn ltm_as_of(&self, t: f64) -> LtmStore {
        let mut store = self.ltm.clone();
        store.truncate(self.archived_by(t));
        store
    }

    /// Retries pending archival; returns how many entries remain pending.
    pub fn retry_pending(&mut self) -> Result<usize, HarnessError> {
        match &self.archival {
            Some(b) => Ok(self.ltm.retry_pending(&*b.captioner, &*b.embedder)?),
            None => Ok(self.ltm.pending_count()),
        }
    }
}

/// Resumable state saved every few admitted frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub seq: u64,
    pub sampler: SamplerState,
    pub ltm_len: usize,
    pub stm: StmCheckpoint,
}

impl RunCheckpoint {
    /// Latest source timestamp consumed before this checkpoint.
    pub fn source_time(&self) -> Option<f64> {
        self.sampler.last_source_timestamp
    }
}

/// A pipeline positioned somewhere in a frame directory.
pub struct StreamCursor {
    dir: Arc<FrameDirectory>,
    fps: f64,
    sampler: SamplerState,
    pub pipeline: MemoryPipeline,
}

impl StreamCursor {
    pub fn new(dir: Arc<FrameDirectory>, fps: f64, pipeline: MemoryPipeline) -> Self {
        Self {
            dir,
            fps,
            sampler: SamplerState::default(),
            pipeline,
        }
    }

    /// Rebuilds the cursor from a checkpoint, reloading held frames from disk.
    pub fn restore(
        dir: Arc<FrameDirectory>,
        fps: f64,
        checkpoint: &RunCheckpoint,
        ltm: LtmStore,
        archived_at: Vec<f64>,
    ) -> Result<Self, HarnessError> {
        let stm = ShortTermMemory::restore(&checkpoint.stm, |r| {
            let path = r
                .source_path
                .clone()
                .unwrap_or_else(|| dir.path_of(r.stream_index));
            let image = read_png_gray(&path)?;
            Ok(Arc::new(Frame::new(
                r.stream_index,
                RawFrame {
                    timestamp_s: r.timestamp_s,
                    image,
                    source_path: Some(path),
                },
            )))
        })?;
        Ok(Self {
            dir,
            fps,
            sampler: checkpoint.sampler,
            pipeline: MemoryPipeline::prebuilt(stm, ltm, archived_at),
        })
    }

    pub fn sampler_state(&self) -> SamplerState {
        self.sampler
    }

    pub fn dir(&self) -> &FrameDirectory {
        &self.dir
    }

    /// Source frames consumed so far.
    pub fn consumed(&self) -> u64 {
        self.sampler.consumed
    }

    pub fn is_exhausted(&self) -> bool {
        self.sampler.consumed as usize >= self.dir.len()
    }

    pub fn checkpoint(&self, seq: u64) -> RunCheckpoint {
        RunCheckpoint {
            seq,
            sampler: self.sampler,
            ltm_len: self.pipeline.ltm.len(),
            stm: self.pipeline.stm.checkpoint(),
        }
    }

    /// Admits every source frame with timestamp `<= t`, calling `after_admit`
    /// once per sampled frame.
    pub fn advance_to<F>(&mut self, t: f64, mut after_admit: F) -> Result<u64, HarnessError>
    where
        F: FnMut(&mut Self) -> Result<(), HarnessError>,
    {
        let start = self.sampler.consumed as usize;
        let dir = Arc::clone(&self.dir);
        let available = dir.entries()[start.min(dir.len())..]
            .iter()
            .take_while(|m| m.timestamp_s <= t)
            .count();
        if available == 0 {
            return Ok(0);
        }
        let mut sampler = Sampler::resume(
            dir.frames_from(start).take(available),
            self.fps,
            self.sampler,
        )?;
        let mut admitted = 0;
        while let Some(frame) = sampler.next() {
            let frame = frame?;
            self.pipeline.push(frame)?;
            self.sampler = sampler.state();
            admitted += 1;
            after_admit(self)?;
        }
        self.sampler = sampler.state();
        Ok(admitted)
    }

    pub fn advance_to_end<F>(&mut self, after_admit: F) -> Result<u64, HarnessError>
    where
        F: FnMut(&mut Self) -> Result<(), HarnessError>,
    {
        self.advance_to(f64::INFINITY, after_admit)
    }
}
