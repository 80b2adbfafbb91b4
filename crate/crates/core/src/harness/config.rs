use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::sampler::DEFAULT_FPS;
use crate::segment::{BoundaryPolicy, DEFAULT_FIXED_INTERVAL_S};
use crate::stm::StmConfig;

pub const DEFAULT_CHECKPOINT_EVERY: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub stm: StmConfig,
    pub fps: f64,
    /// Admitted frames between checkpoints.
    pub checkpoint_every: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            stm: StmConfig::default(),
            fps: DEFAULT_FPS,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        }
    }
}

impl IngestConfig {
    /// Rejects conflicting settings before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let s = &self.stm;
        if s.capacity == 0 {
            return bad("K must be at least 1".into());
        }
        if s.bin_count < 2 || 256 % s.bin_count != 0 {
            return bad(format!(
                "bin count {} must divide 256 and be at least 2",
                s.bin_count
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint interval must be at least 1".into());
        }
        match s.policy {
            BoundaryPolicy::EventCentric { delta, min_len } => {
                if !(-1.0..=1.0).contains(&delta) {
                    return bad(format!("delta {delta} is outside [-1, 1]"));
                }
                if min_len > s.capacity as u64 {
                    return bad(format!("min_len {min_len} exceeds K = {}", s.capacity));
                }
            }
            BoundaryPolicy::FixedLength { interval_s } => {
                if !(interval_s > 0.0 && interval_s.is_finite()) {
                    return bad(format!("fixed interval must be positive, got {interval_s}"));
                }
            }
        }
        Ok(())
    }
}

/// Parses `event` or `fixed[:SECONDS]`; `event` takes `delta`/`min_len`.
pub fn parse_boundary_policy(
    s: &str,
    delta: f64,
    min_len: u64,
) -> Result<BoundaryPolicy, ConfigError> {
    let s = s.trim();
    match s.split_once(':') {
        None if s == "event" => Ok(BoundaryPolicy::EventCentric { delta, min_len }),
        None if s == "fixed" => Ok(BoundaryPolicy::fixed_length(DEFAULT_FIXED_INTERVAL_S)),
        Some(("fixed", secs)) => secs
            .parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(BoundaryPolicy::fixed_length)
            .ok_or_else(|| ConfigError::Invalid(format!("bad fixed interval {secs:?}"))),
        _ => Err(ConfigError::Invalid(format!(
            "unknown segmentation policy {s:?} (expected event or fixed:SECONDS)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        IngestConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_conflicts() {
        let mut c = IngestConfig::default();
        c.stm.policy = BoundaryPolicy::EventCentric {
            delta: 0.2,
            min_len: 40,
        };
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("min_len 40 exceeds K = 32"));

        for f in [
            |c: &mut IngestConfig| c.stm.capacity = 0,
            |c: &mut IngestConfig| c.stm.bin_count = 48,
            |c: &mut IngestConfig| c.fps = 0.0,
            |c: &mut IngestConfig| c.stm.policy = BoundaryPolicy::fixed_length(-1.0),
            |c: &mut IngestConfig| {
                c.stm.policy = BoundaryPolicy::EventCentric {
                    delta: 1.5,
                    min_len: 8,
                }
            },
        ] {
            let mut c = IngestConfig::default();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn policy_names() {
        assert_eq!(
            parse_boundary_policy("event", 0.3, 4).unwrap(),
            BoundaryPolicy::EventCentric {
                delta: 0.3,
                min_len: 4
            }
        );
        assert_eq!(
            parse_boundary_policy("fixed:30", 0.2, 8).unwrap(),
            BoundaryPolicy::fixed_length(30.0)
        );
        assert_eq!(
            parse_boundary_policy("fixed", 0.2, 8).unwrap(),
            BoundaryPolicy::fixed_length(30.0)
        );
        assert!(parse_boundary_policy("fixed:0", 0.2, 8).is_err());
        assert!(parse_boundary_policy("uniform", 0.2, 8).is_err());
    }
}
