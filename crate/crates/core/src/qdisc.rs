//! Single shared FIFO at the bottleneck.
//!
//! ECN-capable packets are CE-marked when the instantaneous backlog is at
//! or above the marking threshold. Everything else goes through RED on a
//! byte-based queue average. Both kinds are tail-dropped when the packet
//! would not fit in the buffer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::net::Packet;
use crate::sim::RandomSource;

/// Router configuration for the shared buffer. All sizes are bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedBufferConfig {
    pub capacity: u64,
    pub ecn_threshold: u64,
    pub red_min: u64,
    pub red_max: u64,
    pub max_drop_prob: f64,
    /// EWMA weight of the RED queue average; 1.0 tracks the instantaneous
    /// backlog.
    #[serde(default = "default_avg_weight")]
    pub avg_weight: f64,
}

fn default_avg_weight() -> f64 {
    1.0
}

impl Default for SharedBufferConfig {
    fn default() -> Self {
        SharedBufferConfig {
            capacity: 1_800_000,
            ecn_threshold: 100_000,
            red_min: 1_800_000,
            red_max: 1_800_000,
            max_drop_prob: 0.05,
            avg_weight: 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("ECN threshold {ecn} exceeds capacity {capacity}")]
    EcnAboveCapacity { ecn: u64, capacity: u64 },
    #[error("RED thresholds must satisfy min <= max <= capacity (min {min}, max {max}, capacity {capacity})")]
    RedOrder { min: u64, max: u64, capacity: u64 },
    #[error("drop probability {0} outside [0, 1]")]
    DropProb(f64),
    #[error("queue-average weight {0} outside (0, 1]")]
    AvgWeight(f64),
}

impl SharedBufferConfig {
    /// Pure drop-tail at `threshold`: RED with equal min and max.
    pub fn drop_tail(capacity: u64, ecn_threshold: u64, threshold: u64) -> Self {
        SharedBufferConfig {
            capacity,
            ecn_threshold,
            red_min: threshold,
            red_max: threshold,
            ..Default::default()
        }
    }

    pub fn is_drop_tail(&self) -> bool {
        self.red_min == self.red_max
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ecn_threshold > self.capacity {
            return Err(ConfigError::EcnAboveCapacity {
                ecn: self.ecn_threshold,
                capacity: self.capacity,
            });
        }
        if self.red_min > self.red_max || self.red_max > self.capacity {
            return Err(ConfigError::RedOrder {
                min: self.red_min,
                max: self.red_max,
                capacity: self.capacity,
            });
        }
        if !(0.0..=1.0).contains(&self.max_drop_prob) {
            return Err(ConfigError::DropProb(self.max_drop_prob));
        }
        if !(self.avg_weight > 0.0 && self.avg_weight <= 1.0) {
            return Err(ConfigError::AvgWeight(self.avg_weight));
        }
        Ok(())
    }
}

/// RED drop probability for a given queue average.
///
/// Zero below `red_min`, linear up to `max_drop_prob` on `[red_min, red_max)`,
/// and one at or above `red_max`. With `red_min == red_max` this is a step.
pub fn red_drop_probability(avg_queue: f64, cfg: &SharedBufferConfig) -> f64 {
    let min = cfg.red_min as f64;
    let max = cfg.red_max as f64;
    if avg_queue >= max {
        1.0
    } else if avg_queue < min {
        0.0
    } else {
        cfg.max_drop_prob * (avg_queue - min) / (max - min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Enqueued,
    EnqueuedMarked,
    DroppedOverflow,
    DroppedRed,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        matches!(self, Verdict::Enqueued | Verdict::EnqueuedMarked)
    }
}

/// Packet counters. Field names appear verbatim in archives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueCounters {
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped_overflow: u64,
    pub dropped_red: u64,
    pub marked_ecn: u64,
}

impl QueueCounters {
    pub fn arrivals(&self) -> u64 {
        self.enqueued + self.dropped_overflow + self.dropped_red
    }

    pub fn total_drops(&self) -> u64 {
        self.dropped_overflow + self.dropped_red
    }
}

/// Live state of the shared buffer.
#[derive(Debug, Clone)]
pub struct SharedBufferQueue {
    cfg: SharedBufferConfig,
    fifo: VecDeque<Packet>,
    bytes_queued: u64,
    avg_queue: f64,
    counters: QueueCounters,
    max_bytes_seen: u64,
}

impl SharedBufferQueue {
    pub fn new(cfg: SharedBufferConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(SharedBufferQueue {
            cfg,
            fifo: VecDeque::new(),
            bytes_queued: 0,
            avg_queue: 0.0,
            counters: QueueCounters::default(),
            max_bytes_seen: 0,
        })
    }

    pub fn config(&self) -> &SharedBufferConfig {
        &self.cfg
    }

    pub fn bytes_queued(&self) -> u64 {
        self.bytes_queued
    }

    pub fn avg_queue(&self) -> f64 {
        self.avg_queue
    }

    pub fn counters(&self) -> QueueCounters {
        self.counters
    }

    pub fn max_bytes_seen(&self) -> u64 {
        self.max_bytes_seen
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    /// Admits, marks or drops an arriving data packet.
    pub fn enqueue(&mut self, mut pkt: Packet, rng: &mut RandomSource) -> Verdict {
        let wire = u64::from(pkt.wire_len);

        if self.bytes_queued + wire > self.cfg.capacity {
            self.counters.dropped_overflow += 1;
            Verdict::DroppedOverflow
        } else if pkt.ect {
            let marked = self.bytes_queued >= self.cfg.ecn_threshold;
            if marked {
                pkt.mark_ce();
                self.counters.marked_ecn += 1;
            }
            self.push(pkt);
            if marked {
                Verdict::EnqueuedMarked
            } else {
                Verdict::Enqueued
            }
        } else {
            let w = self.cfg.avg_weight;
            self.avg_queue = (1.0 - w) * self.avg_queue + w * self.bytes_queued as f64;
            let p = red_drop_probability(self.avg_queue, &self.cfg);
            // Only the linear region consumes randomness.
            let drop = if p <= 0.0 {
                false
            } else if p >= 1.0 {
                true
            } else {
                rng.chance(p)
            };
            if drop {
                self.counters.dropped_red += 1;
                Verdict::DroppedRed
            } else {
                self.push(pkt);
                Verdict::Enqueued
            }
        }
    }

    fn push(&mut self, pkt: Packet) {
        self.bytes_queued += u64::from(pkt.wire_len);
        self.max_bytes_seen = self.max_bytes_seen.max(self.bytes_queued);
        self.counters.enqueued += 1;
        self.fifo.push_back(pkt);
    }

    pub fn dequeue(&mut self) -> Option<Packet> {
        let pkt = self.fifo.pop_front()?;
        self.bytes_queued -= u64::from(pkt.wire_len);
        self.counters.dequeued += 1;
        Some(pkt)
    }
}
