//! Dumbbell topology: sender access links into one switch queue feeding a
//! bottleneck link to a single receiver.
//!
//! Each sender link carries the whole one-way propagation delay of its
//! group (RTT/2) at the bottleneck line rate. The bottleneck adds only
//! `receiver_link_delay`. ACKs return over an ideal path with the mirrored
//! delay and never queue.

use crate::net::{DumbbellSpec, FlowId, Group, Link, Packet};
use crate::qdisc::{ConfigError, SharedBufferQueue};
use crate::sim::{Handler, RandomSource, Scheduler, SimDuration, SimError, SimTime};
use crate::telemetry::{FinalState, GroupCounts, PoissonSampler, Snapshot};
use crate::transport::{Connection, Receiver, TransportConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    FlowStart(FlowId),
    SwitchArrival(Packet),
    BottleneckTxDone,
    ReceiverArrival(Packet),
    AckArrival(Packet),
    RtoCheck(FlowId),
    Snapshot,
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("dumbbell needs at least one sender with at least one flow")]
    NoSenders,
    #[error("invalid network conditions: {0}")]
    Conditions(String),
    #[error(transparent)]
    Buffer(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub const DEFAULT_ACCESS_SPEEDUP: u64 = 10;

/// Knobs of a simulation instance beyond the topology itself.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub transport: TransportConfig,
    /// Flow start times are uniform over `[0, flow_start_window)`.
    pub flow_start_window: SimDuration,
    /// Mean snapshot gap; `None` records only the initial and final state.
    pub snapshot_mean: Option<SimDuration>,
    /// Sender access links run at this multiple of the line rate, so a
    /// sender's own burst drains into the switch queue instead of its NIC.
    pub access_speedup: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            transport: TransportConfig::default(),
            flow_start_window: SimDuration::from_secs(1),
            snapshot_mean: Some(SimDuration::from_millis(10)),
            access_speedup: DEFAULT_ACCESS_SPEEDUP,
        }
    }
}

struct SenderNode {
    link: Link,
}

struct Flow {
    conn: Connection,
    rx: Receiver,
    sender: usize,
    group: Group,
    reverse_delay: SimDuration,
    start_at: SimTime,
    /// Earliest pending timer event, if any.
    timer_at: Option<SimTime>,
}

/// A built experiment, ready to run.
pub struct Dumbbell {
    senders: Vec<SenderNode>,
    flows: Vec<Flow>,
    queue: SharedBufferQueue,
    bottleneck: Link,
    in_service: Option<Packet>,
    bottleneck_tx_bytes: u64,
    red_rng: RandomSource,
    sampler: PoissonSampler,
    snapshots: Vec<Snapshot>,
    scratch: Vec<Packet>,
    line_rate_bps: u64,
}

/// Builds the topology and schedules flow starts and sampling.
pub fn build_dumbbell(
    spec: &DumbbellSpec,
    opts: &SimOptions,
    rng: &RandomSource,
) -> Result<(Dumbbell, Scheduler<Event>), BuildError> {
    if spec.total_flows() == 0 {
        return Err(BuildError::NoSenders);
    }
    spec.conditions.validate().map_err(BuildError::Conditions)?;
    let queue = SharedBufferQueue::new(spec.buffer)?;
    let rate = spec.conditions.line_rate_bps;
    let rx_delay = spec.conditions.receiver_link_delay;

    let mut senders = Vec::new();
    let mut flows = Vec::new();
    let mut starts = rng.fork("flow-starts");
    let window = opts.flow_start_window.as_secs_f64();
    let groups = std::iter::repeat_n(Group::Dctcp, spec.n_dctcp_senders as usize)
        .chain(std::iter::repeat_n(Group::Cubic, spec.n_cubic_senders as usize));
    for group in groups {
        let rtt = spec.group_rtt(group);
        let forward = SimDuration(rtt.as_nanos() / 2);
        let reverse = SimDuration(rtt.as_nanos() - forward.as_nanos()) + rx_delay;
        let sender = senders.len();
        senders.push(SenderNode {
            link: Link::new(rate * opts.access_speedup.max(1), forward),
        });
        for _ in 0..spec.flows_per_sender {
            let id = flows.len() as FlowId;
            let start_at = SimTime::from(SimDuration::from_secs_f64(starts.draw_uniform(0.0, window)));
            flows.push(Flow {
                conn: Connection::new(id, group, opts.transport.clone()),
                rx: Receiver::new(),
                sender,
                group,
                reverse_delay: reverse,
                start_at,
                timer_at: None,
            });
        }
    }

    let mut sched = Scheduler::new();
    for f in &flows {
        sched.schedule_at(f.start_at, Event::FlowStart(f.conn.flow_id()));
    }
    let mut sampler = PoissonSampler::new(opts.snapshot_mean, rng.fork("sampling"));
    if let Some(gap) = sampler.next_gap() {
        sched.schedule(gap, Event::Snapshot);
    }

    let world = Dumbbell {
        senders,
        flows,
        queue,
        bottleneck: Link::new(rate, rx_delay),
        in_service: None,
        bottleneck_tx_bytes: 0,
        red_rng: rng.fork("red"),
        sampler,
        snapshots: Vec::new(),
        scratch: Vec::new(),
        line_rate_bps: rate,
    };
    Ok((world, sched))
}

impl Dumbbell {
    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn flows_in(&self, group: Group) -> usize {
        self.flows.iter().filter(|f| f.group == group).count()
    }

    /// One-way propagation of a flow's access link.
    pub fn access_delay(&self, flow: FlowId) -> SimDuration {
        self.senders[self.flows[flow as usize].sender].link.prop_delay()
    }

    pub fn connection(&self, flow: FlowId) -> &Connection {
        &self.flows[flow as usize].conn
    }

    pub fn queue(&self) -> &SharedBufferQueue {
        &self.queue
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    fn take_snapshot(&mut self, t: SimTime) {
        let mut goodput = GroupCounts::default();
        let mut retx = GroupCounts::default();
        for f in &self.flows {
            let (g, r) = match f.group {
                Group::Dctcp => (&mut goodput.dctcp, &mut retx.dctcp),
                Group::Cubic => (&mut goodput.cubic, &mut retx.cubic),
            };
            *g += f.rx.goodput_bytes();
            *r += f.conn.retransmits();
        }
        self.snapshots.push(Snapshot {
            t,
            queue_bytes: self.queue.bytes_queued(),
            counters: self.queue.counters(),
            per_group_goodput_bytes: goodput,
            per_group_retransmits: retx,
        });
    }

    /// Runs to `end` and returns the snapshot log and final state.
    pub fn run(mut self, mut sched: Scheduler<Event>, end: SimTime) -> Result<(Vec<Snapshot>, FinalState), SimError> {
        self.take_snapshot(SimTime::ZERO);
        sched.run_until(end, &mut self)?;
        if self.snapshots.last().map(|s| s.t) != Some(end) {
            self.take_snapshot(end);
        }
        let fin = self.final_state(end);
        Ok((self.snapshots, fin))
    }

    pub fn final_state(&self, end: SimTime) -> FinalState {
        let last = self.snapshots.last();
        FinalState {
            max_bytes_seen: self.queue.max_bytes_seen(),
            counters: self.queue.counters(),
            per_flow_goodput: self.flows.iter().map(|f| f.rx.goodput_bytes()).collect(),
            goodput: last.map(|s| s.per_group_goodput_bytes).unwrap_or_default(),
            retransmits: last.map(|s| s.per_group_retransmits).unwrap_or_default(),
            bottleneck_tx_bytes: self.bottleneck_tx_bytes,
            line_rate_bps: self.line_rate_bps,
            duration: end,
        }
    }

    fn dispatch(&mut self, flow: FlowId, sched: &mut Scheduler<Event>) {
        let now = sched.now();
        let sender = self.flows[flow as usize].sender;
        for pkt in self.scratch.drain(..) {
            let arrival = self.senders[sender].link.transmit(pkt.wire_len, now);
            sched.schedule_at(arrival, Event::SwitchArrival(pkt));
        }
        let f = &mut self.flows[flow as usize];
        if let Some(deadline) = f.conn.rto_deadline() {
            if f.timer_at.is_none_or(|t| t > deadline) {
                f.timer_at = Some(deadline);
                sched.schedule_at(deadline, Event::RtoCheck(flow));
            }
        }
    }

    fn start_service(&mut self, sched: &mut Scheduler<Event>) {
        if self.in_service.is_some() {
            return;
        }
        if let Some(pkt) = self.queue.dequeue() {
            let delivered = self.bottleneck.transmit(pkt.wire_len, sched.now());
            sched.schedule_at(self.bottleneck.busy_until(), Event::BottleneckTxDone);
            if self.bottleneck.prop_delay() > SimDuration::ZERO {
                sched.schedule_at(delivered, Event::ReceiverArrival(pkt));
            }
            self.in_service = Some(pkt);
        }
    }

    fn receive(&mut self, pkt: Packet, sched: &mut Scheduler<Event>) {
        let f = &mut self.flows[pkt.flow_id as usize];
        let ack = f.rx.on_data(&pkt);
        sched.schedule(f.reverse_delay, Event::AckArrival(ack));
    }
}

impl Handler<Event> for Dumbbell {
    fn handle(&mut self, sched: &mut Scheduler<Event>, event: Event) {
        let now = sched.now();
        match event {
            Event::FlowStart(id) => {
                let mut out = std::mem::take(&mut self.scratch);
                self.flows[id as usize].conn.start(now, &mut out);
                self.scratch = out;
                self.dispatch(id, sched);
            }
            Event::SwitchArrival(pkt) => {
                self.queue.enqueue(pkt, &mut self.red_rng);
                self.start_service(sched);
            }
            Event::BottleneckTxDone => {
                let pkt = self.in_service.take().expect("transmission in progress");
                self.bottleneck_tx_bytes += u64::from(pkt.wire_len);
                if self.bottleneck.prop_delay() == SimDuration::ZERO {
                    self.receive(pkt, sched);
                }
                self.start_service(sched);
            }
            Event::ReceiverArrival(pkt) => self.receive(pkt, sched),
            Event::AckArrival(ack) => {
                let id = ack.flow_id;
                let mut out = std::mem::take(&mut self.scratch);
                self.flows[id as usize].conn.on_ack(&ack, now, &mut out);
                self.scratch = out;
                self.dispatch(id, sched);
            }
            Event::RtoCheck(id) => {
                let f = &mut self.flows[id as usize];
                if f.timer_at == Some(now) {
                    f.timer_at = None;
                }
                let mut out = std::mem::take(&mut self.scratch);
                self.flows[id as usize].conn.on_rto(now, &mut out);
                self.scratch = out;
                self.dispatch(id, sched);
            }
            Event::Snapshot => {
                self.take_snapshot(now);
                if let Some(gap) = self.sampler.next_gap() {
                    sched.schedule(gap, Event::Snapshot);
                }
            }
        }
    }
}
