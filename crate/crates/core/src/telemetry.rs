//! Poisson-sampled snapshots and end-of-run outcome metrics.

use serde::{Deserialize, Serialize};

use crate::qdisc::QueueCounters;
use crate::sim::{RandomSource, SimDuration, SimTime};

/// Per-group cumulative counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub dctcp: u64,
    pub cubic: u64,
}

impl GroupCounts {
    pub fn total(&self) -> u64 {
        self.dctcp + self.cubic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: SimTime,
    pub queue_bytes: u64,
    pub counters: QueueCounters,
    pub per_group_goodput_bytes: GroupCounts,
    pub per_group_retransmits: GroupCounts,
}

/// Schedule of snapshot instants: one at start, exponential gaps of the
/// given mean, one at the end. `None` disables the Poisson part.
#[derive(Debug, Clone)]
pub struct PoissonSampler {
    mean: Option<SimDuration>,
    rng: RandomSource,
}

impl PoissonSampler {
    pub fn new(mean: Option<SimDuration>, rng: RandomSource) -> Self {
        if let Some(m) = mean {
            assert!(m.as_nanos() > 0, "sampling mean must be positive");
        }
        PoissonSampler { mean, rng }
    }

    /// Gap to the next snapshot, if sampling is enabled.
    pub fn next_gap(&mut self) -> Option<SimDuration> {
        self.mean.map(|m| self.rng.draw_exponential(m))
    }

    /// All sampling instants in `(0, end)`, in order.
    pub fn instants(mut self, end: SimTime) -> Vec<SimTime> {
        let mut out = Vec::new();
        let mut t = SimTime::ZERO;
        while let Some(gap) = self.next_gap() {
            t += gap;
            if t >= end {
                break;
            }
            out.push(t);
        }
        out
    }
}

/// Final per-experiment outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub cubic_share: f64,
    pub total_drops: u64,
    pub avg_buffer: f64,
    pub max_buffer: u64,
    pub total_goodput: u64,
    pub per_flow_goodput: Vec<u64>,
    pub marked_ecn: u64,
    pub duration: SimTime,
    pub goodput: GroupCounts,
    pub retransmits: GroupCounts,
    pub counters: QueueCounters,
    /// Wire bytes the bottleneck finished transmitting.
    pub bottleneck_tx_bytes: u64,
    pub line_rate_bps: u64,
    pub n_snapshots: u64,
    /// Set when no goodput was delivered and `cubic_share` defaulted to 0.
    pub zero_goodput: bool,
}

impl ExperimentSummary {
    /// Fraction of bottleneck capacity used over the measured span.
    pub fn utilization(&self) -> f64 {
        let secs = self.duration.as_secs_f64();
        if secs <= 0.0 {
            return 0.0;
        }
        self.bottleneck_tx_bytes as f64 * 8.0 / (self.line_rate_bps as f64 * secs)
    }
}

/// State at the end of a run that snapshots cannot capture.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalState {
    pub max_bytes_seen: u64,
    pub counters: QueueCounters,
    pub per_flow_goodput: Vec<u64>,
    pub goodput: GroupCounts,
    pub retransmits: GroupCounts,
    pub bottleneck_tx_bytes: u64,
    pub line_rate_bps: u64,
    pub duration: SimTime,
}

/// Cubic fraction of total goodput; zero (with flag) when nothing moved.
pub fn cubic_share(goodput: &GroupCounts) -> (f64, bool) {
    let total = goodput.total();
    if total == 0 {
        (0.0, true)
    } else {
        (goodput.cubic as f64 / total as f64, false)
    }
}

/// Reduces snapshots and final state to the outcome metrics.
///
/// `warmup` excludes earlier snapshots from the buffer average and measures
/// the share from the goodput accumulated after it.
pub fn finalize(snapshots: &[Snapshot], fin: &FinalState, warmup: SimDuration) -> ExperimentSummary {
    let cutoff = SimTime::from(warmup);
    let window: Vec<&Snapshot> = snapshots.iter().filter(|s| s.t >= cutoff).collect();
    let avg_buffer = if window.is_empty() {
        0.0
    } else {
        window.iter().map(|s| s.queue_bytes as f64).sum::<f64>() / window.len() as f64
    };
    let base = match window.first() {
        Some(s) if warmup > SimDuration::ZERO => s.per_group_goodput_bytes,
        _ => GroupCounts::default(),
    };
    let measured = GroupCounts {
        dctcp: fin.goodput.dctcp - base.dctcp.min(fin.goodput.dctcp),
        cubic: fin.goodput.cubic - base.cubic.min(fin.goodput.cubic),
    };
    let (share, zero) = cubic_share(&measured);
    if zero {
        tracing::warn!("no goodput delivered; cubic_share reported as 0");
    }
    ExperimentSummary {
        cubic_share: share,
        total_drops: fin.counters.total_drops(),
        avg_buffer,
        max_buffer: fin.max_bytes_seen,
        total_goodput: fin.per_flow_goodput.iter().sum(),
        per_flow_goodput: fin.per_flow_goodput.clone(),
        marked_ecn: fin.counters.marked_ecn,
        duration: fin.duration,
        goodput: fin.goodput,
        retransmits: fin.retransmits,
        counters: fin.counters,
        bottleneck_tx_bytes: fin.bottleneck_tx_bytes,
        line_rate_bps: fin.line_rate_bps,
        n_snapshots: snapshots.len() as u64,
        zero_goodput: zero,
    }
}
