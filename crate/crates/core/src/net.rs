//! Packets, store-and-forward links and the dumbbell description.

use serde::{Deserialize, Serialize};

use crate::qdisc::SharedBufferConfig;
use crate::sim::{SimDuration, SimTime};

/// Wire size of a full data segment.
pub const DATA_WIRE_LEN: u32 = 1500;
/// TCP payload carried by a full data segment.
pub const MSS: u32 = 1448;
/// Wire size of a pure ACK.
pub const ACK_WIRE_LEN: u32 = 64;

pub type FlowId = u32;

/// Unit moved through links and the switch queue.
///
/// For data packets `seq` is the byte offset of the first payload byte. For
/// ACKs it carries the cumulative acknowledgement number, and `send_time`
/// echoes the send time of the data packet that triggered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow_id: FlowId,
    pub seq: u64,
    pub payload_len: u32,
    pub wire_len: u32,
    pub is_ack: bool,
    pub ect: bool,
    pub ce: bool,
    pub ece_echo: bool,
    pub send_time: SimTime,
}

impl Packet {
    pub fn data(flow_id: FlowId, seq: u64, payload_len: u32, ect: bool, send_time: SimTime) -> Self {
        Packet {
            flow_id,
            seq,
            payload_len,
            wire_len: payload_len + (DATA_WIRE_LEN - MSS),
            is_ack: false,
            ect,
            ce: false,
            ece_echo: false,
            send_time,
        }
    }

    pub fn ack(flow_id: FlowId, ack_no: u64, ece_echo: bool, echo_time: SimTime) -> Self {
        Packet {
            flow_id,
            seq: ack_no,
            payload_len: 0,
            wire_len: ACK_WIRE_LEN,
            is_ack: true,
            ect: false,
            ce: false,
            ece_echo,
            send_time: echo_time,
        }
    }

    /// Sets the congestion-experienced mark. Only ECN-capable packets can
    /// carry it.
    pub fn mark_ce(&mut self) {
        debug_assert!(self.ect);
        self.ce = self.ect;
    }

    pub fn is_well_formed(&self) -> bool {
        (!self.ce || self.ect) && self.wire_len >= self.payload_len && (!self.is_ack || self.payload_len == 0)
    }
}

/// Time to clock `bytes` onto a link of `rate_bps`, rounded up to whole
/// nanoseconds.
pub fn serialization_time(bytes: u32, rate_bps: u64) -> SimDuration {
    let bits = u128::from(bytes) * 8 * 1_000_000_000;
    let rate = u128::from(rate_bps.max(1));
    SimDuration(bits.div_ceil(rate) as u64)
}

/// Point-to-point link with FIFO store-and-forward semantics.
#[derive(Debug, Clone)]
pub struct Link {
    rate_bps: u64,
    prop_delay: SimDuration,
    busy_until: SimTime,
}

impl Link {
    pub fn new(rate_bps: u64, prop_delay: SimDuration) -> Self {
        assert!(rate_bps > 0, "link rate must be positive");
        Link {
            rate_bps,
            prop_delay,
            busy_until: SimTime::ZERO,
        }
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate_bps
    }

    pub fn prop_delay(&self) -> SimDuration {
        self.prop_delay
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Sends `wire_len` bytes handed to the link at `at`; returns when the
    /// last bit reaches the far end.
    pub fn transmit(&mut self, wire_len: u32, at: SimTime) -> SimTime {
        let start = at.max(self.busy_until);
        self.busy_until = start + serialization_time(wire_len, self.rate_bps);
        self.busy_until + self.prop_delay
    }
}

/// Path properties of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConditions {
    /// Base two-way propagation delay of Cubic senders.
    pub cubic_rtt: SimDuration,
    /// Base two-way propagation delay of DCTCP senders.
    pub dctcp_rtt: SimDuration,
    /// Bottleneck (and access) line rate in bits per second.
    pub line_rate_bps: u64,
    /// Extra one-way delay on the switch→receiver link, added to both
    /// directions. Zero keeps the configured RTTs exact.
    #[serde(default)]
    pub receiver_link_delay: SimDuration,
}

impl NetworkConditions {
    pub fn validate(&self) -> Result<(), String> {
        if self.cubic_rtt.as_nanos() == 0 || self.dctcp_rtt.as_nanos() == 0 {
            return Err("RTTs must be positive".into());
        }
        if self.line_rate_bps == 0 {
            return Err("line rate must be positive".into());
        }
        Ok(())
    }
}

/// Which congestion controller a sender runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Dctcp,
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumbbellSpec {
    pub n_dctcp_senders: u32,
    pub n_cubic_senders: u32,
    pub flows_per_sender: u32,
    pub conditions: NetworkConditions,
    pub buffer: SharedBufferConfig,
}

impl DumbbellSpec {
    pub fn total_flows(&self) -> u32 {
        (self.n_dctcp_senders + self.n_cubic_senders) * self.flows_per_sender
    }

    pub fn group_rtt(&self, group: Group) -> SimDuration {
        match group {
            Group::Dctcp => self.conditions.dctcp_rtt,
            Group::Cubic => self.conditions.cubic_rtt,
        }
    }
}
