use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use streammem::agent::EpisodeConfig;
use streammem::backend::http::{HttpBackend, BACKEND_URL_ENV};
use streammem::backend::mock::ScriptBook;
use streammem::backend::{ArchivalBackends, PerceptionBackends};
use streammem::harness::run::{load_fixtures_for, MANIFEST_FILE};
use streammem::harness::{
    self, load_questions, parse_boundary_policy, HarnessError, IngestConfig, PolicySource,
    ReplayOptions, SyntheticSpec,
};
use streammem::rl::{evaluate_group, GroupInput};
use streammem::stm::StmConfig;
use streammem::ConfigError;

#[derive(Parser)]
#[command(
    name = "streammem",
    version,
    about = "Event-centric bounded memory for frame streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a frame directory into a run directory.
    Ingest {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        memory: MemoryArgs,
        #[arg(long, value_enum, default_value_t = Backend::Mock)]
        backend: Backend,
    },
    /// Answer a question file against a run directory (or a frame directory, ingesting on the fly).
    Replay {
        #[arg(long, conflicts_with = "frames", required_unless_present = "frames")]
        run: Option<PathBuf>,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        questions: PathBuf,
        /// `scripted:FILE` or `http`.
        #[arg(long)]
        policy: String,
        #[arg(long, value_enum, default_value_t = Backend::Mock)]
        backend: Backend,
        #[arg(long, default_value_t = streammem::agent::DEFAULT_MAX_TURNS)]
        max_turns: usize,
        #[command(flatten)]
        memory: MemoryArgs,
        /// Directory for report.json, report.txt, report.csv and trajectories.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the same questions under several segmentation policies.
    Compare {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Comma-separated, e.g. `event,fixed:30`.
        #[arg(long, default_value = "event,fixed:30")]
        policies: String,
        #[arg(long)]
        policy: String,
        #[arg(long, value_enum, default_value_t = Backend::Mock)]
        backend: Backend,
        #[arg(long, default_value_t = streammem::agent::DEFAULT_MAX_TURNS)]
        max_turns: usize,
        #[command(flatten)]
        memory: MemoryArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic frame directory from a scene spec.
    Synthetic {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print memory statistics of a run directory.
    Stats {
        #[arg(long)]
        run: PathBuf,
        /// Write the per-checkpoint series here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate advantage groups from a JSONL file (`-` for stdin).
    Grpo {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct MemoryArgs {
    #[arg(long = "k", default_value_t = streammem::stm::DEFAULT_CAPACITY)]
    capacity: usize,
    #[arg(long, default_value_t = streammem::segment::DEFAULT_DELTA, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = streammem::segment::DEFAULT_MIN_LEN)]
    min_len: u64,
    #[arg(long, default_value_t = streammem::histogram::DEFAULT_BIN_COUNT)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = streammem::sampler::DEFAULT_FPS)]
    fps: f64,
    /// `event` or `fixed:SECONDS`.
    #[arg(long, default_value = "event")]
    segmentation: String,
    #[arg(long, default_value_t = 100)]
    checkpoint_every: u64,
    /// Archive events as soon as a boundary closes them.
    #[arg(long)]
    archive_on_boundary: bool,
}

impl MemoryArgs {
    fn config(&self) -> Result<IngestConfig, ConfigError> {
        let config = IngestConfig {
            stm: StmConfig {
                capacity: self.capacity,
                bin_count: self.bins,
                policy: parse_boundary_policy(&self.segmentation, self.delta, self.min_len)?,
                archive_on_boundary: self.archive_on_boundary,
                seed: self.seed,
            },
            fps: self.fps,
            checkpoint_every: self.checkpoint_every,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Mock,
    Http,
}

fn http_backend() -> Result<HttpBackend, HarnessError> {
    if std::env::var_os(BACKEND_URL_ENV).is_none() {
        return Err(ConfigError::Invalid(format!(
            "{BACKEND_URL_ENV} must be set for the http backend"
        ))
        .into());
    }
    Ok(HttpBackend::from_env()?)
}

fn archival(backend: Backend) -> Result<ArchivalBackends, HarnessError> {
    Ok(match backend {
        Backend::Mock => ArchivalBackends::mock(),
        Backend::Http => {
            let b = Arc::new(http_backend()?);
            ArchivalBackends {
                captioner: b.clone(),
                embedder: b,
            }
        }
    })
}

fn perception(backend: Backend, frames_dir: &Path) -> Result<PerceptionBackends, HarnessError> {
    Ok(match backend {
        Backend::Mock => PerceptionBackends::mock(load_fixtures_for(frames_dir)?),
        Backend::Http => {
            let b = Arc::new(http_backend()?);
            PerceptionBackends {
                embedder: b.clone(),
                ocr: b.clone(),
                detector: b,
            }
        }
    })
}

fn policy_source(spec: &str) -> Result<PolicySource, HarnessError> {
    if spec == "http" {
        return Ok(PolicySource::Http(http_backend()?));
    }
    match spec.strip_prefix("scripted:") {
        Some(path) => {
            let book = ScriptBook::load(Path::new(path)).map_err(HarnessError::Data)?;
            Ok(PolicySource::Scripted(book))
        }
        None => Err(ConfigError::Invalid(format!(
            "unknown policy {spec:?} (expected scripted:FILE or http)"
        ))
        .into()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn write_report(
    out: &Path,
    report: &harness::RunReport,
    trajectories: &[streammem::agent::Trajectory],
) -> Result<(), HarnessError> {
    write_file(&out.join("report.json"), &to_json(report))?;
    write_file(&out.join("report.txt"), &report.to_table())?;
    write_file(&out.join("report.csv"), &report.to_csv())?;
    let mut lines = String::new();
    for t in trajectories {
        lines.push_str(&serde_json::to_string(t).expect("trajectories serialize"));
        lines.push('\n');
    }
    write_file(&out.join("trajectories.jsonl"), &lines)
}

fn replay_options(max_turns: usize) -> Result<ReplayOptions, ConfigError> {
    if max_turns == 0 {
        return Err(ConfigError::Invalid(
            "--max-turns must be at least 1".into(),
        ));
    }
    Ok(ReplayOptions {
        episode: EpisodeConfig {
            max_turns,
            ..EpisodeConfig::default()
        },
    })
}

/// Backend failures during an episode surface through the exit status.
fn policy_error_status(report: &harness::RunReport) -> Result<(), HarnessError> {
    if report.policy_errors > 0 {
        return Err(streammem::BackendError::Unavailable(format!(
            "{} question(s) ended with a policy error",
            report.policy_errors
        ))
        .into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Ingest {
            frames,
            out,
            memory,
            backend,
        } => {
            let config = memory.config()?;
            let stats = harness::ingest(&frames, &out, &config, archival(backend)?)?;
            print!("{}", stats.to_table());
        }
        Command::Replay {
            run,
            frames,
            questions,
            policy,
            backend,
            max_turns,
            memory,
            out,
        } => {
            let opts = replay_options(max_turns)?;
            let policy = policy_source(&policy)?;
            let questions = load_questions(&questions)?;
            let (report, trajectories) = match (run, frames) {
                (Some(run), _) => {
                    let manifest: harness::run::RunManifest = serde_json::from_str(
                        &std::fs::read_to_string(run.join(MANIFEST_FILE)).map_err(|source| {
                            HarnessError::Io {
                                path: run.join(MANIFEST_FILE),
                                source,
                            }
                        })?,
                    )
                    .map_err(|e| HarnessError::Data(e.to_string()))?;
                    let perception = perception(backend, &manifest.frames_dir)?;
                    harness::replay(&run, &questions, &policy, &perception, &opts)?
                }
                (None, Some(frames)) => {
                    let config = memory.config()?;
                    let perception = perception(backend, &frames)?;
                    harness::replay_frames(
                        &frames,
                        &config,
                        archival(backend)?,
                        &questions,
                        &policy,
                        &perception,
                        &opts,
                    )?
                }
                (None, None) => unreachable!("clap requires --run or --frames"),
            };
            print!("{}", report.to_table());
            if let Some(out) = out {
                write_report(&out, &report, &trajectories)?;
            }
            policy_error_status(&report)?;
        }
        Command::Compare {
            frames,
            questions,
            policies,
            policy,
            backend,
            max_turns,
            memory,
            out,
        } => {
            let base = memory.config()?;
            let segmentations = policies
                .split(',')
                .map(|p| parse_boundary_policy(p, memory.delta, memory.min_len))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = replay_options(max_turns)?;
            let policy = policy_source(&policy)?;
            let questions = load_questions(&questions)?;
            let perception = perception(backend, &frames)?;
            let report = harness::compare(
                &frames,
                &base,
                &segmentations,
                archival(backend)?,
                &questions,
                &policy,
                &perception,
                &opts,
            )?;
            print!("{}", report.to_table());
            if let Some(out) = out {
                write_file(&out.join("comparison.json"), &to_json(&report))?;
                write_file(&out.join("comparison.txt"), &report.to_table())?;
            }
            for r in &report.runs {
                policy_error_status(r)?;
            }
        }
        Command::Synthetic { spec, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|source| HarnessError::Io {
                path: spec.clone(),
                source,
            })?;
            let spec: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", spec.display())))?;
            let truth = harness::write_synthetic(&spec, &out)?;
            let frames: u64 = truth.scenes.iter().map(|s| s.frames).sum();
            println!(
                "wrote {frames} frames in {} scenes to {}",
                truth.scenes.len(),
                out.display()
            );
        }
        Command::Stats { run, csv, json } => {
            let stats = harness::stats(&run)?;
            if json {
                print!("{}", to_json(&stats));
            } else {
                print!("{}", stats.ingest.to_table());
            }
            if let Some(csv) = csv {
                write_file(&csv, &stats.to_csv())?;
            }
        }
        Command::Grpo { groups, out } => {
            let reader: Box<dyn BufRead> = if groups.as_os_str() == "-" {
                Box::new(BufReader::new(std::io::stdin()))
            } else {
                let f = std::fs::File::open(&groups).map_err(|source| HarnessError::Io {
                    path: groups.clone(),
                    source,
                })?;
                Box::new(BufReader::new(f))
            };
            let mut output = String::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|source| HarnessError::Io {
                    path: groups.clone(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let err = |m: String| HarnessError::Data(format!("groups line {}: {m}", i + 1));
                let input: GroupInput =
                    serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                let result = evaluate_group(&input).map_err(|e| err(e.to_string()))?;
                output.push_str(&serde_json::to_string(&result).expect("plain numbers serialize"));
                output.push('\n');
            }
            match out {
                Some(path) => write_file(&path, &output)?,
                None => std::io::stdout()
                    .write_all(output.as_bytes())
                    .map_err(|source| HarnessError::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
