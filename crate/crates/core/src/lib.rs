//! Bounded-memory, event-centric memory for unbounded frame streams, plus
//! the tool-using agent harness that answers questions against it.

pub mod agent;
pub mod backend;
pub mod error;
pub mod frame;
pub mod harness;
pub mod histogram;
pub mod ltm;
pub mod rl;
pub mod sampler;
pub mod segment;
pub mod source;
pub mod stm;
pub mod tools;

pub use error::{BackendError, ConfigError, FrameError, LtmError, MemoryError, RlError};
pub use frame::{Frame, GrayImage, RawFrame};
pub use histogram::{compute_histogram, Histogram};
pub use sampler::sample_stream;
pub use segment::{pearson_correlation, should_split, BoundaryPolicy, EventState};
pub use stm::{AdmitOutcome, AdmitResult, ShortTermMemory, Snapshot, StmConfig};
