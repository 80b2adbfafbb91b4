//! The top-level operations behind the command-line tool.
//!
//! A run directory holds:
//!
//! ```text
//! run.json              manifest (frames directory, configuration)
//! stats.json            memory statistics at the end of ingestion
//! archive_log.json      stream time at which each long-term entry was archived
//! ltm/                  entries.jsonl + anchors/
//! checkpoints/NNNNNN.json
//! stm/NNNNNN.json       short-term memory dumps, one per checkpoint
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::IngestConfig;
use super::pipeline::{MemoryPipeline, RunCheckpoint, StreamCursor};
use super::questions::QuestionItem;
use super::report::{ComparisonReport, MemoryStats, QuestionResult, RunReport};
use super::synthetic::FIXTURE_DIR;
use super::{read_json, write_json, HarnessError};
use crate::agent::{run_episode, EpisodeConfig, EpisodeEnv, QuestionPrompt, Trajectory};
use crate::backend::fixtures::FIXTURE_FILE;
use crate::backend::mock::ScriptBook;
use crate::backend::{ArchivalBackends, PerceptionBackends, PerceptionFixtures, PolicyModel};
use crate::error::BackendError;
use crate::ltm::LtmStore;
use crate::rl::reward;
use crate::segment::BoundaryPolicy;
use crate::source::FrameDirectory;
use crate::stm::{ShortTermMemory, StmStats};
use crate::tools::ToolRegistry;

pub const MANIFEST_FILE: &str = "run.json";
pub const STATS_FILE: &str = "stats.json";
pub const ARCHIVE_LOG_FILE: &str = "archive_log.json";
pub const LTM_DIR: &str = "ltm";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const STM_DUMP_DIR: &str = "stm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub frames_dir: PathBuf,
    pub config: IngestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub source_frames: usize,
    pub stream_end_s: Option<f64>,
    pub checkpoints: u64,
    pub memory: MemoryStats,
    pub stm: StmStats,
}

impl IngestStats {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {}", "source frames", self.source_frames);
        let end = self
            .stream_end_s
            .map_or_else(|| "-".into(), |t| format!("{t:.1}s"));
        let _ = writeln!(out, "{:<22} {end}", "stream end");
        let _ = writeln!(out, "{:<22} {}", "checkpoints", self.checkpoints);
        out.push_str(&self.memory.to_table());
        out
    }
}

/// One row of the per-checkpoint statistics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsPoint {
    pub seq: u64,
    pub source_time_s: Option<f64>,
    pub frames_admitted: u64,
    pub events_created: u64,
    pub evictions: u64,
    pub reservoir_accept_rate: Option<f64>,
    pub ltm_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub ingest: IngestStats,
    pub series: Vec<StatsPoint>,
}

impl RunStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,source_time_s,frames_admitted,events_created,evictions,reservoir_accept_rate,ltm_entries\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for p in &self.series {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.seq,
                opt(p.source_time_s),
                p.frames_admitted,
                p.events_created,
                p.evictions,
                opt(p.reservoir_accept_rate),
                p.ltm_entries
            );
        }
        out
    }
}

/// Where policy outputs come from.
pub enum PolicySource {
    Scripted(ScriptBook),
    #[cfg(feature = "http")]
    Http(crate::backend::http::HttpBackend),
}

impl PolicySource {
    pub fn policy_for(&self, question_id: &str) -> Box<dyn PolicyModel> {
        match self {
            PolicySource::Scripted(book) => Box::new(book.policy_for(question_id)),
            #[cfg(feature = "http")]
            PolicySource::Http(b) => Box::new(b.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplayOptions {
    pub episode: EpisodeConfig,
}

/// Fixture set shipped next to a frame directory, if any.
pub fn load_fixtures_for(frames_dir: &Path) -> Result<PerceptionFixtures, HarnessError> {
    let path = frames_dir.join(FIXTURE_DIR).join(FIXTURE_FILE);
    PerceptionFixtures::load_or_default(&path).map_err(HarnessError::io(&path))
}

fn checkpoint_path(run: &Path, seq: u64) -> PathBuf {
    run.join(CHECKPOINT_DIR).join(format!("{seq:06}.json"))
}

fn save_checkpoint(run: &Path, cursor: &StreamCursor, seq: u64) -> Result<(), HarnessError> {
    cursor.pipeline.ltm.persist(&run.join(LTM_DIR))?;
    write_json(&run.join(ARCHIVE_LOG_FILE), &cursor.pipeline.archived_at)?;
    write_json(
        &run.join(STM_DUMP_DIR).join(format!("{seq:06}.json")),
        &cursor.pipeline.stm.dump(),
    )?;
    write_json(&checkpoint_path(run, seq), &cursor.checkpoint(seq))
}

fn memory_stats(pipeline: &MemoryPipeline) -> MemoryStats {
    MemoryStats::from_parts(
        pipeline.stm.stats(),
        pipeline.ltm.len(),
        pipeline.ltm.pending_count(),
    )
}

/// Runs the whole frame directory through memory and writes a run directory.
///
/// Events still held in short-term memory at the end stay there; they are
/// part of the final checkpoint. If archival is still pending after one
/// retry, the state is written and a backend error is returned.
pub fn ingest(
    frames_dir: &Path,
    out: &Path,
    config: &IngestConfig,
    archival: ArchivalBackends,
) -> Result<IngestStats, HarnessError> {
    config.validate()?;
    let dir = Arc::new(FrameDirectory::open(frames_dir)?);
    std::fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let frames_dir = std::fs::canonicalize(frames_dir).map_err(HarnessError::io(frames_dir))?;
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            frames_dir,
            config: *config,
        },
    )?;

    let mut cursor = StreamCursor::new(
        Arc::clone(&dir),
        config.fps,
        MemoryPipeline::new(config.stm, archival),
    );
    let every = config.checkpoint_every;
    let mut seq = 0u64;
    cursor.advance_to_end(|c| {
        if c.pipeline.stm.stats().frames_admitted % every == 0 {
            save_checkpoint(out, c, seq)?;
            seq += 1;
        }
        Ok(())
    })?;
    let pending = cursor.pipeline.retry_pending()?;
    if !cursor
        .pipeline
        .stm
        .stats()
        .frames_admitted
        .is_multiple_of(every)
    {
        save_checkpoint(out, &cursor, seq)?;
        seq += 1;
    } else {
        cursor.pipeline.ltm.persist(&out.join(LTM_DIR))?;
    }

    let stats = IngestStats {
        source_frames: dir.len(),
        stream_end_s: dir.end_timestamp(),
        checkpoints: seq,
        memory: memory_stats(&cursor.pipeline),
        stm: cursor.pipeline.stm.stats().clone(),
    };
    write_json(&out.join(STATS_FILE), &stats)?;
    if pending > 0 {
        return Err(HarnessError::Backend(BackendError::Unavailable(format!(
            "{pending} archived events still lack a caption or embedding"
        ))));
    }
    Ok(stats)
}

fn load_checkpoints(run: &Path) -> Result<Vec<RunCheckpoint>, HarnessError> {
    let dir = run.join(CHECKPOINT_DIR);
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(HarnessError::io(&dir)(e)),
    };
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

fn answer_question(
    q: &QuestionItem,
    cursor: &StreamCursor,
    stream_end_s: Option<f64>,
    policy: &PolicySource,
    perception: &PerceptionBackends,
    registry: &ToolRegistry,
    opts: &ReplayOptions,
) -> (QuestionResult, Option<Trajectory>) {
    if stream_end_s.is_none_or(|end| q.asked_at_s > end) {
        return (
            QuestionResult::unanswerable(&q.id, q.category.clone(), q.asked_at_s, &q.gold),
            None,
        );
    }
    let snapshot = cursor.pipeline.stm.snapshot();
    let ltm = cursor.pipeline.ltm_as_of(q.asked_at_s);
    let env = EpisodeEnv {
        snapshot: &snapshot,
        ltm: &ltm,
        backends: perception,
        registry,
    };
    let text = q.prompt_text();
    let prompt = QuestionPrompt {
        question_id: &q.id,
        text: &text,
        asked_at_s: q.asked_at_s,
    };
    let mut p = policy.policy_for(&q.id);
    let traj = run_episode(&prompt, &env, &mut *p, &opts.episode);
    let r = reward(traj.final_answer.as_deref(), &q.gold);
    (
        QuestionResult::from_trajectory(&traj, q.category.clone(), &q.gold, r),
        Some(traj),
    )
}

/// Replays questions against a run directory.
///
/// For each question the memory is rebuilt as of `asked_at_s` from the
/// nearest earlier checkpoint (or the current position, if closer).
pub fn replay(
    run: &Path,
    questions: &[QuestionItem],
    policy: &PolicySource,
    perception: &PerceptionBackends,
    opts: &ReplayOptions,
) -> Result<(RunReport, Vec<Trajectory>), HarnessError> {
    let manifest: RunManifest = read_json(&run.join(MANIFEST_FILE))?;
    let stats: IngestStats = read_json(&run.join(STATS_FILE))?;
    let dir = Arc::new(FrameDirectory::open(&manifest.frames_dir)?);
    let ltm = LtmStore::load(&run.join(LTM_DIR))?;
    let archived_at: Vec<f64> = read_json(&run.join(ARCHIVE_LOG_FILE))?;
    if archived_at.len() != ltm.len() {
        return Err(HarnessError::Data(format!(
            "archive log has {} entries but the store has {}",
            archived_at.len(),
            ltm.len()
        )));
    }
    let checkpoints = load_checkpoints(run)?;
    let fps = manifest.config.fps;
    let registry = ToolRegistry::default();

    let mut cursor: Option<StreamCursor> = None;
    let mut results = Vec::new();
    let mut trajectories = Vec::new();
    for q in questions {
        let best = checkpoints
            .iter()
            .rev()
            .find(|c| c.source_time().is_some_and(|ts| ts <= q.asked_at_s));
        let behind = |c: &StreamCursor| best.is_some_and(|b| b.sampler.consumed > c.consumed());
        if cursor.as_ref().is_none_or(behind) {
            cursor = Some(match best {
                Some(cp) => StreamCursor::restore(
                    Arc::clone(&dir),
                    fps,
                    cp,
                    ltm.clone(),
                    archived_at.clone(),
                )?,
                None => StreamCursor::new(
                    Arc::clone(&dir),
                    fps,
                    MemoryPipeline::prebuilt(
                        ShortTermMemory::new(manifest.config.stm),
                        ltm.clone(),
                        archived_at.clone(),
                    ),
                ),
            });
        }
        let c = cursor.as_mut().expect("cursor set above");
        c.advance_to(q.asked_at_s, |_| Ok(()))?;
        let (result, traj) = answer_question(
            q,
            c,
            stats.stream_end_s,
            policy,
            perception,
            &registry,
            opts,
        );
        results.push(result);
        trajectories.extend(traj);
    }
    let report = RunReport::new(manifest.config.stm.policy.name(), results, stats.memory);
    Ok((report, trajectories))
}

/// Replays questions while ingesting the frame directory on the fly.
pub fn replay_frames(
    frames_dir: &Path,
    config: &IngestConfig,
    archival: ArchivalBackends,
    questions: &[QuestionItem],
    policy: &PolicySource,
    perception: &PerceptionBackends,
    opts: &ReplayOptions,
) -> Result<(RunReport, Vec<Trajectory>), HarnessError> {
    config.validate()?;
    let dir = Arc::new(FrameDirectory::open(frames_dir)?);
    let end = dir.end_timestamp();
    let mut cursor = StreamCursor::new(dir, config.fps, MemoryPipeline::new(config.stm, archival));
    let registry = ToolRegistry::default();
    let mut results = Vec::new();
    let mut trajectories = Vec::new();
    for q in questions {
        cursor.advance_to(q.asked_at_s, |_| Ok(()))?;
        let (result, traj) = answer_question(q, &cursor, end, policy, perception, &registry, opts);
        results.push(result);
        trajectories.extend(traj);
    }
    cursor.advance_to_end(|_| Ok(()))?;
    cursor.pipeline.retry_pending()?;
    let report = RunReport::new(
        config.stm.policy.name(),
        results,
        memory_stats(&cursor.pipeline),
    );
    Ok((report, trajectories))
}

/// Runs the same questions under each segmentation policy.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    frames_dir: &Path,
    base: &IngestConfig,
    policies: &[BoundaryPolicy],
    archival: ArchivalBackends,
    questions: &[QuestionItem],
    policy: &PolicySource,
    perception: &PerceptionBackends,
    opts: &ReplayOptions,
) -> Result<ComparisonReport, HarnessError> {
    let mut runs = Vec::new();
    for p in policies {
        let mut config = *base;
        config.stm.policy = *p;
        let (report, _) = replay_frames(
            frames_dir,
            &config,
            archival.clone(),
            questions,
            policy,
            perception,
            opts,
        )?;
        runs.push(report);
    }
    Ok(ComparisonReport { runs })
}

pub fn stats(run: &Path) -> Result<RunStats, HarnessError> {
    let ingest: IngestStats = read_json(&run.join(STATS_FILE))?;
    let series = load_checkpoints(run)?
        .into_iter()
        .map(|c| StatsPoint {
            seq: c.seq,
            source_time_s: c.source_time(),
            frames_admitted: c.stm.stats.frames_admitted,
            events_created: c.stm.stats.events_created,
            evictions: c.stm.stats.evictions,
            reservoir_accept_rate: c.stm.stats.reservoir_accept_rate(),
            ltm_entries: c.ltm_len,
        })
        .collect();
    Ok(RunStats { ingest, series })
}
