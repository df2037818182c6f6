//! Experiment grids and the resumable parallel sweep runner.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{read_archive, write_archive, ARCHIVE_EXTENSION};
use crate::dumbbell::DEFAULT_ACCESS_SPEEDUP;
use crate::experiment::{run_experiment, ExperimentConfig, SCHEMA_VERSION};
use crate::net::NetworkConditions;
use crate::qdisc::SharedBufferConfig;
use crate::sim::{mix_seed, SimDuration};
use crate::transport::TransportConfig;
use crate::units::{BitRate, ByteSize, Span};

/// A list of byte sizes, either explicit or as an inclusive arithmetic
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ByteValues {
    List(Vec<ByteSize>),
    Range {
        from: ByteSize,
        to: ByteSize,
        step: ByteSize,
    },
}

impl ByteValues {
    pub fn range(from: u64, to: u64, step: u64) -> Self {
        ByteValues::Range {
            from: ByteSize(from),
            to: ByteSize(to),
            step: ByteSize(step),
        }
    }

    pub fn list(values: &[u64]) -> Self {
        ByteValues::List(values.iter().copied().map(ByteSize).collect())
    }

    pub fn expand(&self) -> Vec<u64> {
        match self {
            ByteValues::List(v) => v.iter().map(|b| b.0).collect(),
            ByteValues::Range { from, to, step } => {
                if step.0 == 0 {
                    return if from.0 <= to.0 { vec![from.0] } else { Vec::new() };
                }
                (from.0..=to.0).step_by(step.0 as usize).collect()
            }
        }
    }
}

/// Candidate values for every experiment dimension plus constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub master_seed: u64,
    pub line_rates: Vec<BitRate>,
    pub cubic_rtts: Vec<Span>,
    pub dctcp_rtts: Vec<Span>,
    #[serde(default = "default_rx_delays")]
    pub receiver_link_delays: Vec<Span>,
    pub capacities: ByteValues,
    pub ecn_thresholds: ByteValues,
    pub red_mins: ByteValues,
    pub red_maxes: ByteValues,
    pub max_drop_probs: Vec<f64>,
    pub n_dctcp_senders: Vec<u32>,
    pub n_cubic_senders: Vec<u32>,
    pub flows_per_sender: Vec<u32>,
    pub sim_durations: Vec<Span>,
    /// Mean snapshot gap; omit to record only start and end.
    pub snapshot_mean: Option<Span>,
    #[serde(default = "default_start_window")]
    pub flow_start_window: Span,
    /// Independent seeds per grid point.
    #[serde(default = "one")]
    pub repeats: u32,
    /// Keep only pure drop-tail settings (`red_min == red_max`).
    #[serde(default)]
    pub drop_tail_only: bool,
    /// Access link rate as a multiple of the line rate.
    #[serde(default = "default_access_speedup")]
    pub access_speedup: u64,
}

fn default_access_speedup() -> u64 {
    DEFAULT_ACCESS_SPEEDUP
}

fn default_rx_delays() -> Vec<Span> {
    vec![Span(SimDuration::ZERO)]
}

fn default_start_window() -> Span {
    Span(SimDuration::from_secs(1))
}

fn one() -> u32 {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("grid dimension `{0}` is empty")]
    EmptyDimension(&'static str),
    #[error("no valid experiment remains after applying grid constraints")]
    EmptyGrid,
    #[error("cannot read grid file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse grid file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(format!("unknown preset `{other}` (expected desk or full)")),
        }
    }
}

impl GridSpec {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    /// Full production grid: 10 + 10 senders with 10 flows each, 2 minute
    /// runs, every ECN threshold from 0 to 400 KB and every ordered RED
    /// pair from 0 to 1.8 MB.
    pub fn full() -> Self {
        GridSpec {
            master_seed: 1,
            line_rates: [5_000_000_000, 12_500_000_000, 25_000_000_000].map(BitRate).to_vec(),
            cubic_rtts: [25, 50, 100].map(|ms| Span(SimDuration::from_millis(ms))).to_vec(),
            dctcp_rtts: vec![Span(SimDuration::from_micros(50))],
            receiver_link_delays: default_rx_delays(),
            capacities: ByteValues::list(&[1_800_000]),
            ecn_thresholds: ByteValues::range(0, 400_000, 20_000),
            red_mins: ByteValues::range(0, 1_800_000, 100_000),
            red_maxes: ByteValues::range(0, 1_800_000, 100_000),
            max_drop_probs: vec![0.05],
            n_dctcp_senders: vec![10],
            n_cubic_senders: vec![10],
            flows_per_sender: vec![10],
            sim_durations: vec![Span(SimDuration::from_secs(120))],
            snapshot_mean: Some(Span(SimDuration::from_millis(10))),
            flow_start_window: default_start_window(),
            repeats: 1,
            drop_tail_only: false,
            access_speedup: DEFAULT_ACCESS_SPEEDUP,
        }
    }

    /// Laptop-sized grid: 100 Mb/s and 1 Gb/s, 5 s and 10 s runs, scaled
    /// sender counts.
    pub fn desk() -> Self {
        GridSpec {
            master_seed: 1,
            line_rates: [100_000_000, 1_000_000_000].map(BitRate).to_vec(),
            cubic_rtts: [25, 50].map(|ms| Span(SimDuration::from_millis(ms))).to_vec(),
            dctcp_rtts: vec![Span(SimDuration::from_micros(200))],
            receiver_link_delays: default_rx_delays(),
            capacities: ByteValues::list(&[1_800_000]),
            ecn_thresholds: ByteValues::list(&[20_000, 100_000, 200_000, 400_000]),
            red_mins: ByteValues::list(&[200_000, 800_000, 1_600_000, 1_800_000]),
            red_maxes: ByteValues::list(&[200_000, 800_000, 1_600_000, 1_800_000]),
            max_drop_probs: vec![0.05],
            n_dctcp_senders: vec![5],
            n_cubic_senders: vec![5],
            flows_per_sender: vec![4],
            sim_durations: [5, 10].map(|s| Span(SimDuration::from_secs(s))).to_vec(),
            snapshot_mean: Some(Span(SimDuration::from_millis(10))),
            flow_start_window: default_start_window(),
            repeats: 1,
            drop_tail_only: false,
            access_speedup: DEFAULT_ACCESS_SPEEDUP,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|source| GridError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid spec serializes")
    }
}

/// Expands a grid into its ordered experiment list.
///
/// Nesting order, outermost first: line rate, Cubic RTT, DCTCP RTT,
/// receiver delay, capacity, ECN threshold, RED min, RED max, drop
/// probability, sender counts, flows, duration, repeat. Invalid
/// combinations (RED min above max, thresholds above capacity) are
/// skipped. The seed of experiment `i` is derived from the master seed
/// and `i`.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<ExperimentConfig>, GridError> {
    let capacities = spec.capacities.expand();
    let ecns = spec.ecn_thresholds.expand();
    let mins = spec.red_mins.expand();
    let maxes = spec.red_maxes.expand();
    let dims: [(&'static str, bool); 14] = [
        ("line_rates", spec.line_rates.is_empty()),
        ("cubic_rtts", spec.cubic_rtts.is_empty()),
        ("dctcp_rtts", spec.dctcp_rtts.is_empty()),
        ("receiver_link_delays", spec.receiver_link_delays.is_empty()),
        ("capacities", capacities.is_empty()),
        ("ecn_thresholds", ecns.is_empty()),
        ("red_mins", mins.is_empty()),
        ("red_maxes", maxes.is_empty()),
        ("max_drop_probs", spec.max_drop_probs.is_empty()),
        ("n_dctcp_senders", spec.n_dctcp_senders.is_empty()),
        ("n_cubic_senders", spec.n_cubic_senders.is_empty()),
        ("flows_per_sender", spec.flows_per_sender.is_empty()),
        ("sim_durations", spec.sim_durations.is_empty()),
        ("repeats", spec.repeats == 0),
    ];
    if let Some((name, _)) = dims.iter().find(|(_, empty)| *empty) {
        return Err(GridError::EmptyDimension(name));
    }

    let mut out = Vec::new();
    for rate in &spec.line_rates {
        for cubic_rtt in &spec.cubic_rtts {
            for dctcp_rtt in &spec.dctcp_rtts {
                for rx_delay in &spec.receiver_link_delays {
                    for &capacity in &capacities {
                        for &ecn in &ecns {
                            for &red_min in &mins {
                                for &red_max in &maxes {
                                    if red_min > red_max || (spec.drop_tail_only && red_min != red_max) {
                                        continue;
                                    }
                                    for &p in &spec.max_drop_probs {
                                        let buffer = SharedBufferConfig {
                                            capacity,
                                            ecn_threshold: ecn,
                                            red_min,
                                            red_max,
                                            max_drop_prob: p,
                                            avg_weight: 1.0,
                                        };
                                        if buffer.validate().is_err() {
                                            continue;
                                        }
                                        let conditions = NetworkConditions {
                                            cubic_rtt: cubic_rtt.0,
                                            dctcp_rtt: dctcp_rtt.0,
                                            line_rate_bps: rate.0,
                                            receiver_link_delay: rx_delay.0,
                                        };
                                        for &nd in &spec.n_dctcp_senders {
                                            for &nc in &spec.n_cubic_senders {
                                                for &fps in &spec.flows_per_sender {
                                                    for dur in &spec.sim_durations {
                                                        for _ in 0..spec.repeats {
                                                            let cfg = ExperimentConfig {
                                                                conditions,
                                                                buffer,
                                                                n_dctcp_senders: nd,
                                                                n_cubic_senders: nc,
                                                                flows_per_sender: fps,
                                                                sim_duration: dur.0,
                                                                snapshot_mean: spec.snapshot_mean.map(|s| s.0),
                                                                seed: 0,
                                                                schema_version: SCHEMA_VERSION,
                                                                flow_start_window: spec.flow_start_window.0,
                                                                warmup: SimDuration::ZERO,
                                                                transport: TransportConfig::default(),
                                                                access_speedup: spec.access_speedup,
                                                            };
                                                            if cfg.validate().is_ok() {
                                                                out.push(cfg);
                                                            }
                                                        }
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(GridError::EmptyGrid);
    }
    for (i, cfg) in out.iter_mut().enumerate() {
        cfg.seed = mix_seed(spec.master_seed, i as u64);
    }
    Ok(out)
}

/// File name of experiment `index` inside a sweep directory.
pub fn archive_name(index: usize) -> String {
    format!("exp-{index:06}.{ARCHIVE_EXTENSION}")
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub archive: String,
    pub seed: u64,
    pub status: RunStatus,
    pub wall_clock_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub entries: BTreeMap<usize, ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn store(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join(format!("{MANIFEST_NAME}.tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(self).expect("manifest serializes"))?;
        fs::rename(tmp, dir.join(MANIFEST_NAME))
    }

    pub fn failed(&self) -> usize {
        self.entries.values().filter(|e| e.status == RunStatus::Failed).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("output directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn already_done(path: &Path, cfg: &ExperimentConfig) -> bool {
    path.exists() && read_archive(path).is_ok_and(|rec| &rec.config == cfg)
}

fn run_one(cfg: &ExperimentConfig, path: &Path) -> Result<(), String> {
    let rec = std::panic::catch_unwind(|| run_experiment(cfg))
        .map_err(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "simulation panicked".into());
            format!("panic: {msg}")
        })?
        .map_err(|e| e.to_string())?;
    write_archive(path, &rec).map_err(|e| e.to_string())
}

/// Runs every config on a pool of `workers` threads, one whole experiment
/// per task, writing `exp-NNNNNN.jsonl.gz` archives and `manifest.json`
/// into `out_dir`. Archives whose stored config matches are not rerun.
pub fn run_sweep(configs: &[ExperimentConfig], workers: usize, out_dir: &Path) -> Result<SweepReport, SweepError> {
    let io = |source| SweepError::Io {
        path: out_dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(out_dir).map_err(io)?;
    let mut manifest = Manifest::load(out_dir).unwrap_or_default();
    manifest.schema_version = SCHEMA_VERSION;
    manifest.entries.retain(|&i, _| i < configs.len());
    let manifest = Mutex::new(manifest);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let outcomes: Vec<Option<bool>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let name = archive_name(i);
                let path = out_dir.join(&name);
                if already_done(&path, cfg) {
                    let mut m = manifest.lock().expect("manifest lock");
                    let keep = m.entries.get(&i).is_some_and(|e| e.status == RunStatus::Completed);
                    if !keep {
                        m.entries.insert(
                            i,
                            ManifestEntry {
                                index: i,
                                archive: name,
                                seed: cfg.seed,
                                status: RunStatus::Completed,
                                wall_clock_ms: 0,
                                error: None,
                            },
                        );
                    }
                    return None;
                }
                let started = Instant::now();
                let result = run_one(cfg, &path);
                let wall_clock_ms = started.elapsed().as_millis() as u64;
                if let Err(e) = &result {
                    tracing::warn!(index = i, error = %e, "experiment failed");
                }
                let entry = ManifestEntry {
                    index: i,
                    archive: name,
                    seed: cfg.seed,
                    status: if result.is_ok() {
                        RunStatus::Completed
                    } else {
                        RunStatus::Failed
                    },
                    wall_clock_ms,
                    error: result.as_ref().err().cloned(),
                };
                let mut m = manifest.lock().expect("manifest lock");
                m.entries.insert(i, entry);
                if let Err(e) = m.store(out_dir) {
                    tracing::warn!(error = %e, "could not update manifest");
                }
                Some(result.is_ok())
            })
            .collect()
    });

    let manifest = manifest.into_inner().expect("manifest lock");
    manifest.store(out_dir).map_err(io)?;
    let mut report = SweepReport::default();
    for o in outcomes {
        match o {
            None => report.skipped += 1,
            Some(true) => report.executed += 1,
            Some(false) => {
                report.executed += 1;
                report.failed += 1;
            }
        }
    }
    Ok(report)
}
