//! One experiment: configuration, execution and its recorded outcome.

use serde::{Deserialize, Serialize};

use crate::dumbbell::{build_dumbbell, BuildError, SimOptions, DEFAULT_ACCESS_SPEEDUP};
use crate::net::{DumbbellSpec, NetworkConditions};
use crate::qdisc::SharedBufferConfig;
use crate::sim::{RandomSource, SimDuration, SimTime};
use crate::telemetry::{finalize, ExperimentSummary, Snapshot};
use crate::transport::TransportConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_start_window() -> SimDuration {
    SimDuration::from_secs(1)
}

fn default_access_speedup() -> u64 {
    DEFAULT_ACCESS_SPEEDUP
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub conditions: NetworkConditions,
    pub buffer: SharedBufferConfig,
    pub n_dctcp_senders: u32,
    pub n_cubic_senders: u32,
    pub flows_per_sender: u32,
    pub sim_duration: SimDuration,
    /// Mean Poisson snapshot gap; `None` disables periodic sampling.
    pub snapshot_mean: Option<SimDuration>,
    pub seed: u64,
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_start_window")]
    pub flow_start_window: SimDuration,
    /// Snapshots before this instant are excluded from the outcome metrics.
    #[serde(default)]
    pub warmup: SimDuration,
    #[serde(default)]
    pub transport: TransportConfig,
    /// Access link rate as a multiple of the line rate.
    #[serde(default = "default_access_speedup")]
    pub access_speedup: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

impl ExperimentConfig {
    /// Laptop-sized defaults: 1 Gb/s, 1.8 MB drop-tail buffer, 5 + 5
    /// senders with 4 flows each, 25 ms / 200 us RTTs, 10 s.
    pub fn desk(seed: u64) -> Self {
        ExperimentConfig {
            conditions: NetworkConditions {
                cubic_rtt: SimDuration::from_millis(25),
                dctcp_rtt: SimDuration::from_micros(200),
                line_rate_bps: 1_000_000_000,
                receiver_link_delay: SimDuration::ZERO,
            },
            buffer: SharedBufferConfig::default(),
            n_dctcp_senders: 5,
            n_cubic_senders: 5,
            flows_per_sender: 4,
            sim_duration: SimDuration::from_secs(10),
            snapshot_mean: Some(SimDuration::from_millis(10)),
            seed,
            schema_version: SCHEMA_VERSION,
            flow_start_window: default_start_window(),
            warmup: SimDuration::ZERO,
            transport: TransportConfig::default(),
            access_speedup: DEFAULT_ACCESS_SPEEDUP,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.buffer
            .validate()
            .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        self.conditions.validate().map_err(ExperimentError::Invalid)?;
        if self.sim_duration == SimDuration::ZERO {
            return bad("simulation duration must be positive".into());
        }
        if self.snapshot_mean == Some(SimDuration::ZERO) {
            return bad("snapshot mean must be positive".into());
        }
        if self.access_speedup == 0 {
            return bad("access speedup must be at least 1".into());
        }
        if self.flows_per_sender == 0 || self.n_dctcp_senders + self.n_cubic_senders == 0 {
            return bad("need at least one sender with at least one flow".into());
        }
        Ok(())
    }

    pub fn dumbbell(&self) -> DumbbellSpec {
        DumbbellSpec {
            n_dctcp_senders: self.n_dctcp_senders,
            n_cubic_senders: self.n_cubic_senders,
            flows_per_sender: self.flows_per_sender,
            conditions: self.conditions,
            buffer: self.buffer,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            transport: self.transport.clone(),
            flow_start_window: self.flow_start_window,
            snapshot_mean: self.snapshot_mean,
            access_speedup: self.access_speedup,
        }
    }
}

/// Everything one experiment produces; the unit stored in an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub summary: ExperimentSummary,
    pub snapshots: Vec<Snapshot>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord, ExperimentError> {
    cfg.validate()?;
    let rng = RandomSource::new(cfg.seed);
    let (world, sched) = build_dumbbell(&cfg.dumbbell(), &cfg.sim_options(), &rng)?;
    let end = SimTime::from(cfg.sim_duration);
    let (snapshots, fin) = world.run(sched, end).map_err(BuildError::from)?;
    let summary = finalize(&snapshots, &fin, cfg.warmup);
    Ok(ExperimentRecord {
        config: cfg.clone(),
        summary,
        snapshots,
    })
}
