//! Per-flow TCP machinery for bulk senders.
//!
//! Loss detection is NewReno-style: three duplicate ACKs trigger a fast
//! retransmit and a single window reduction per recovery episode, partial
//! ACKs retransmit the next hole, and a retransmission timeout falls back
//! to go-back-N from the cumulative ACK point. The congestion controller
//! decides the window on loss and in congestion avoidance.

pub mod cubic;
pub mod dctcp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::net::{FlowId, Group, Packet, MSS};
use crate::sim::{SimDuration, SimTime};

pub use cubic::{cubic_on_loss, cubic_target_window, CubicState};
pub use dctcp::{dctcp_on_epoch_end, dctcp_update_alpha, DctcpState};

/// Tunables shared by every connection of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub mss: u32,
    pub initial_cwnd: f64,
    pub dctcp_g: f64,
    pub cubic_c: f64,
    pub cubic_beta: f64,
    pub cubic_reno_friendly: bool,
    pub min_rto: SimDuration,
    pub initial_rto: SimDuration,
    pub max_rto: SimDuration,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mss: MSS,
            initial_cwnd: 10.0,
            dctcp_g: dctcp::DEFAULT_G,
            cubic_c: cubic::DEFAULT_C,
            cubic_beta: cubic::DEFAULT_BETA,
            cubic_reno_friendly: true,
            min_rto: SimDuration::from_millis(1),
            initial_rto: SimDuration::from_secs(1),
            max_rto: SimDuration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CongestionControl {
    Dctcp(DctcpState),
    Cubic(CubicState),
}

impl CongestionControl {
    pub fn group(&self) -> Group {
        match self {
            CongestionControl::Dctcp(_) => Group::Dctcp,
            CongestionControl::Cubic(_) => Group::Cubic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    SlowStart,
    Avoidance,
    FastRecovery,
    RtoRecovery,
}

/// Round-trip estimator (smoothed RTT and variance, gains 1/8 and 1/4).
#[derive(Debug, Clone, PartialEq)]
pub struct RttEstimator {
    srtt: Option<SimDuration>,
    rttvar: SimDuration,
}

impl RttEstimator {
    fn new() -> Self {
        RttEstimator {
            srtt: None,
            rttvar: SimDuration::ZERO,
        }
    }

    pub fn srtt(&self) -> Option<SimDuration> {
        self.srtt
    }

    pub fn rttvar(&self) -> SimDuration {
        self.rttvar
    }

    pub fn sample(&mut self, rtt: SimDuration) {
        let r = rtt.as_nanos() as i128;
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = SimDuration(rtt.as_nanos() / 2);
            }
            Some(s) => {
                let s = s.as_nanos() as i128;
                let var = self.rttvar.as_nanos() as i128;
                let var = (3 * var + (s - r).abs()) / 4;
                let s = (7 * s + r) / 8;
                self.rttvar = SimDuration(var as u64);
                self.srtt = Some(SimDuration(s as u64));
            }
        }
    }

    /// `srtt + 4 * rttvar` bounded below by `floor`; `initial` before the
    /// first sample.
    pub fn rto(&self, floor: SimDuration, initial: SimDuration) -> SimDuration {
        match self.srtt {
            None => initial,
            Some(s) => (s + self.rttvar.saturating_mul(4)).max(floor),
        }
    }
}

/// Sender side of one bulk-transfer flow.
#[derive(Debug, Clone)]
pub struct Connection {
    flow_id: FlowId,
    cfg: TransportConfig,
    cc: CongestionControl,
    cwnd: f64,
    ssthresh: f64,
    phase: Phase,
    snd_una: u64,
    snd_nxt: u64,
    /// Highest offset ever sent; anything sent below it is a retransmission.
    high_tx: u64,
    dup_ack_count: u32,
    /// Bytes presumed to have left the network, inferred from duplicate
    /// ACKs during fast recovery.
    dup_bytes: u64,
    recover: u64,
    rtt: RttEstimator,
    rto_backoff: u32,
    rto_deadline: Option<SimTime>,
    started: bool,
    bytes_sent: u64,
    segments_sent: u64,
    segments_retransmitted: u64,
    fast_retransmits: u64,
    timeouts: u64,
}

impl Connection {
    pub fn new(flow_id: FlowId, group: Group, cfg: TransportConfig) -> Self {
        let cc = match group {
            Group::Dctcp => CongestionControl::Dctcp(DctcpState::new(cfg.dctcp_g)),
            Group::Cubic => {
                CongestionControl::Cubic(CubicState::new(cfg.cubic_c, cfg.cubic_beta, cfg.cubic_reno_friendly))
            }
        };
        Connection {
            flow_id,
            cwnd: cfg.initial_cwnd.max(1.0),
            ssthresh: f64::INFINITY,
            cfg,
            cc,
            phase: Phase::SlowStart,
            snd_una: 0,
            snd_nxt: 0,
            high_tx: 0,
            dup_ack_count: 0,
            dup_bytes: 0,
            recover: 0,
            rtt: RttEstimator::new(),
            rto_backoff: 0,
            rto_deadline: None,
            started: false,
            bytes_sent: 0,
            segments_sent: 0,
            segments_retransmitted: 0,
            fast_retransmits: 0,
            timeouts: 0,
        }
    }

    pub fn flow_id(&self) -> FlowId {
        self.flow_id
    }

    pub fn group(&self) -> Group {
        self.cc.group()
    }

    pub fn cc(&self) -> &CongestionControl {
        &self.cc
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn highest_acked(&self) -> u64 {
        self.snd_una
    }

    pub fn send_front(&self) -> u64 {
        self.snd_nxt
    }

    pub fn dup_ack_count(&self) -> u32 {
        self.dup_ack_count
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn rto_backoff(&self) -> u32 {
        self.rto_backoff
    }

    /// Highest byte offset ever transmitted.
    pub fn highest_sent(&self) -> u64 {
        self.high_tx
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn segments_sent(&self) -> u64 {
        self.segments_sent
    }

    pub fn retransmits(&self) -> u64 {
        self.segments_retransmitted
    }

    pub fn fast_retransmits(&self) -> u64 {
        self.fast_retransmits
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    /// Outstanding bytes not yet inferred to have left the network.
    pub fn in_flight(&self) -> u64 {
        (self.snd_nxt - self.snd_una).saturating_sub(self.dup_bytes)
    }

    fn mss(&self) -> u64 {
        u64::from(self.cfg.mss)
    }

    fn ect(&self) -> bool {
        matches!(self.cc, CongestionControl::Dctcp(_))
    }

    /// Current retransmission timeout including backoff.
    pub fn rto(&self) -> SimDuration {
        let base = self.rtt.rto(self.cfg.min_rto, self.cfg.initial_rto);
        base.saturating_mul(1u64 << self.rto_backoff.min(30))
            .min(self.cfg.max_rto)
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.rto_deadline = if self.snd_nxt > self.snd_una {
            Some(now + self.rto())
        } else {
            None
        };
    }

    /// Opens the flow and sends the initial window.
    pub fn start(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        assert!(!self.started, "flow started twice");
        self.started = true;
        if let CongestionControl::Dctcp(d) = &mut self.cc {
            d.epoch_end_seq = 0;
        }
        self.bulk_send(now, out);
        if let CongestionControl::Dctcp(d) = &mut self.cc {
            d.epoch_end_seq = self.snd_nxt;
        }
    }

    fn emit(&mut self, seq: u64, now: SimTime, out: &mut Vec<Packet>) {
        let len = self.cfg.mss;
        out.push(Packet::data(self.flow_id, seq, len, self.ect(), now));
        self.segments_sent += 1;
        self.bytes_sent += u64::from(len);
        if seq < self.high_tx {
            self.segments_retransmitted += 1;
        }
        self.high_tx = self.high_tx.max(seq + u64::from(len));
    }

    /// Infinite-source application: fills the window with new segments.
    pub fn bulk_send(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        if !self.started {
            return;
        }
        let window = self.cwnd.floor() as u64 * self.mss();
        let had_outstanding = self.snd_nxt > self.snd_una;
        while self.in_flight() + self.mss() <= window {
            let seq = self.snd_nxt;
            self.emit(seq, now, out);
            self.snd_nxt += self.mss();
        }
        if !had_outstanding && self.snd_nxt > self.snd_una {
            self.arm_timer(now);
        }
    }

    /// Processes an ACK and appends any resulting transmissions to `out`.
    pub fn on_ack(&mut self, ack: &Packet, now: SimTime, out: &mut Vec<Packet>) {
        debug_assert!(ack.is_ack);
        let ack_no = ack.seq;
        if !self.started || ack_no < self.snd_una {
            return;
        }
        if ack_no == self.snd_una {
            if self.snd_nxt > self.snd_una {
                self.on_duplicate_ack(now, out);
            }
            return;
        }

        // New data acknowledged.
        let acked = ack_no - self.snd_una;
        self.snd_una = ack_no;
        // After go-back-N the receiver may already hold data beyond snd_nxt.
        self.snd_nxt = self.snd_nxt.max(self.snd_una);
        self.rtt.sample(now.since(ack.send_time));
        self.rto_backoff = 0;

        if let CongestionControl::Dctcp(d) = &mut self.cc {
            d.on_acked(acked, ack.ece_echo);
        }

        match self.phase {
            Phase::FastRecovery => {
                if ack_no >= self.recover {
                    self.exit_recovery();
                } else {
                    // Partial ACK: retransmit the next hole, deflate by the
                    // amount acknowledged and add back one segment.
                    let seq = self.snd_una;
                    self.emit(seq, now, out);
                    self.dup_bytes = self.dup_bytes.saturating_sub(acked) + self.mss();
                }
            }
            Phase::RtoRecovery => {
                if ack_no >= self.recover {
                    self.phase = self.growth_phase();
                }
                self.grow(acked, now);
            }
            Phase::SlowStart | Phase::Avoidance => {
                self.dup_ack_count = 0;
                self.grow(acked, now);
            }
        }

        self.maybe_end_dctcp_epoch();
        self.arm_timer(now);
        self.bulk_send(now, out);
    }

    fn growth_phase(&self) -> Phase {
        if self.cwnd < self.ssthresh {
            Phase::SlowStart
        } else {
            Phase::Avoidance
        }
    }

    fn grow(&mut self, acked_bytes: u64, now: SimTime) {
        let segs = acked_bytes as f64 / self.mss() as f64;
        if self.cwnd < self.ssthresh {
            self.cwnd = (self.cwnd + segs).min(self.ssthresh.max(self.cwnd));
            if self.cwnd < self.ssthresh {
                if self.phase != Phase::RtoRecovery {
                    self.phase = Phase::SlowStart;
                }
                return;
            }
        }
        if self.phase != Phase::RtoRecovery {
            self.phase = Phase::Avoidance;
        }
        let srtt = self.rtt.srtt().unwrap_or(SimDuration::ZERO);
        let cwnd = self.cwnd;
        self.cwnd = match &mut self.cc {
            CongestionControl::Dctcp(_) => cwnd + segs / cwnd,
            CongestionControl::Cubic(cs) => cs.on_ack_avoidance(cwnd, segs, now, srtt),
        };
    }

    fn maybe_end_dctcp_epoch(&mut self) {
        let in_recovery = self.phase == Phase::FastRecovery;
        let send_front = self.snd_nxt;
        let cwnd = self.cwnd;
        if let CongestionControl::Dctcp(d) = &mut self.cc {
            if self.snd_una < d.epoch_end_seq {
                return;
            }
            if in_recovery {
                // The loss reduction already covers this window.
                d.ce_cut_done_this_window = true;
            }
            let out = dctcp_on_epoch_end(cwnd, d, send_front);
            if out.reduced {
                self.cwnd = out.cwnd;
                self.ssthresh = out.cwnd;
                self.phase = Phase::Avoidance;
            }
        }
    }

    fn on_duplicate_ack(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        match self.phase {
            Phase::FastRecovery => {
                self.dup_bytes += self.mss();
                self.bulk_send(now, out);
            }
            Phase::RtoRecovery => {}
            Phase::SlowStart | Phase::Avoidance => {
                self.dup_ack_count += 1;
                if self.dup_ack_count == 3 {
                    self.fast_retransmit(now, out);
                }
            }
        }
    }

    fn fast_retransmit(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        self.fast_retransmits += 1;
        self.recover = self.snd_nxt;
        let cwnd = self.cwnd;
        let (cwnd, ssthresh) = match &mut self.cc {
            CongestionControl::Cubic(cs) => cubic_on_loss(cs, cwnd),
            CongestionControl::Dctcp(d) => {
                d.ce_cut_done_this_window = true;
                let half = (cwnd / 2.0).max(2.0).min(cwnd.max(1.0));
                (half, half)
            }
        };
        self.cwnd = cwnd;
        self.ssthresh = ssthresh;
        self.phase = Phase::FastRecovery;
        // The three duplicates correspond to segments that left the network.
        self.dup_bytes = 3 * self.mss();
        let seq = self.snd_una;
        self.emit(seq, now, out);
        self.bulk_send(now, out);
    }

    fn exit_recovery(&mut self) {
        self.dup_bytes = 0;
        self.dup_ack_count = 0;
        self.phase = self.growth_phase();
    }

    /// Timer callback. Returns `false` without acting when the deadline has
    /// moved past `now` (lazy timer invalidation).
    pub fn on_rto(&mut self, now: SimTime, out: &mut Vec<Packet>) -> bool {
        match self.rto_deadline {
            Some(d) if d <= now => {}
            _ => return false,
        }
        self.timeouts += 1;
        let before = self.cwnd;
        if let CongestionControl::Cubic(cs) = &mut self.cc {
            cubic_on_loss(cs, before);
        }
        if let CongestionControl::Dctcp(d) = &mut self.cc {
            d.ce_cut_done_this_window = true;
        }
        self.ssthresh = (before / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.phase = Phase::RtoRecovery;
        self.recover = self.snd_nxt;
        self.dup_ack_count = 0;
        self.dup_bytes = 0;
        self.snd_nxt = self.snd_una;
        self.rto_backoff = self.rto_backoff.saturating_add(1);
        let seq = self.snd_una;
        self.emit(seq, now, out);
        self.snd_nxt += self.mss();
        self.arm_timer(now);
        true
    }
}

/// Receiver side: cumulative ACK per data packet, CE reflected as ECE.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    rcv_nxt: u64,
    out_of_order: BTreeMap<u64, u32>,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unique in-order bytes delivered to the application.
    pub fn goodput_bytes(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn on_data(&mut self, pkt: &Packet) -> Packet {
        debug_assert!(!pkt.is_ack);
        let end = pkt.seq + u64::from(pkt.payload_len);
        if pkt.seq == self.rcv_nxt {
            self.rcv_nxt = end;
            while let Some((&seq, &len)) = self.out_of_order.first_key_value() {
                if seq > self.rcv_nxt {
                    break;
                }
                self.out_of_order.pop_first();
                self.rcv_nxt = self.rcv_nxt.max(seq + u64::from(len));
            }
        } else if pkt.seq > self.rcv_nxt {
            self.out_of_order.entry(pkt.seq).or_insert(pkt.payload_len);
        }
        Packet::ack(pkt.flow_id, self.rcv_nxt, pkt.ce, pkt.send_time)
    }
}
