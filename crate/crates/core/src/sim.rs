//! The simulation instance: stations, access point, shared medium and
//! traffic sources driven by one [`Scheduler`].
//!
//! Every station owns one contender per transmit queue (one for DCF, four
//! for EDCA). A contender's countdown is armed at the station's idle edge
//! plus its IFS and frozen whenever the medium, the station's NAV or the
//! station's own exchange makes the channel busy. The access point only
//! receives and answers with CTS/ACK after SIFS.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcf::{cts_nav_end, rts_nav_end, Contention, ContentionParams, Countdown, Phase, TxOutcome};
use crate::edca::{classify, resolve_internal_collision, txop_admits, AccessCategory};
use crate::kernel::{EventHandle, Fired, Scheduler, Timestamp};
use crate::metrics::{FlowMeta, MetricsCollector, ReportMeta, RunReport};
use crate::phy::{FrameKind, Medium, Node, PhyParams, Transmission, TxId};
use crate::traffic::{CbrClock, FlowMode, FlowSpec, Packet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacMode {
    Dcf,
    Edca,
}

impl fmt::Display for MacMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MacMode::Dcf => "dcf",
            MacMode::Edca => "edca",
        })
    }
}

#[derive(Debug, Clone)]
pub struct StationSetup {
    pub id: u32,
    /// One entry per transmit queue, highest priority first.
    pub contenders: Vec<ContentionParams>,
    pub rts_cts: bool,
    pub queue_capacity: usize,
}

#[derive(Debug, Clone)]
pub struct SimSetup {
    pub name: String,
    pub phy: PhyParams,
    pub mac_mode: MacMode,
    pub stations: Vec<StationSetup>,
    pub flows: Vec<FlowSpec>,
    /// Instants at which flows are added; they also split statistics windows.
    pub changes: Vec<Timestamp>,
    pub duration: Timestamp,
    pub warmup: Timestamp,
    pub seed: u64,
    pub rep: usize,
    /// Keep countdown, burst, NAV and CW logs for trace assertions.
    pub diagnostics: bool,
    /// Keep one `time_us,seq,target,kind` line per fired event.
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Responder {
    Cts,
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { flow: usize },
    BackoffExpiry { station: usize },
    /// AP response or the SIFS-spaced data frame of an ongoing exchange.
    TxStart { station: usize, from_ap: bool },
    TxEnd { tx: TxId },
    Timeout { station: usize },
    ScenarioChange { index: usize },
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::Arrival { .. } => "arrival",
            EventKind::BackoffExpiry { .. } => "backoff-slot-boundary",
            EventKind::TxStart { .. } => "tx-start",
            EventKind::TxEnd { .. } => "tx-end",
            EventKind::Timeout { .. } => "ack-timeout",
            EventKind::ScenarioChange { .. } => "scenario-change",
        }
    }
}

/// One fired event, as written to the debug trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub time_us: u64,
    pub seq: u64,
    pub target: String,
    pub kind: &'static str,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.time_us, self.seq, self.target, self.kind)
    }
}

/// A countdown segment that ended, either frozen by a busy edge or expired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountdownRecord {
    pub station: u32,
    pub queue: usize,
    pub ifs_us: u64,
    pub edge: Timestamp,
    pub resume_at: Timestamp,
    pub end_at: Timestamp,
    pub remaining_at_resume: u32,
    pub slots_counted: u32,
    pub expired: bool,
    pub immediate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstRecord {
    pub station: u32,
    pub queue: usize,
    pub txop_limit_us: u64,
    pub first_data_start: Timestamp,
    pub last_ack_end: Timestamp,
    pub frames: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualCollision {
    pub station: u32,
    pub at: Timestamp,
    pub expiring: Vec<usize>,
    pub winner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwChange {
    pub station: u32,
    pub queue: usize,
    pub at: Timestamp,
    pub old_cw: u32,
    pub new_cw: u32,
    pub outcome: TxOutcome,
    pub internal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NavUpdate {
    pub station: u32,
    pub at: Timestamp,
    pub nav_until: Timestamp,
}

/// A frame put on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRecord {
    pub sender: Node,
    pub kind: FrameKind,
    pub start: Timestamp,
    pub end: Timestamp,
    pub corrupted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub countdowns: Vec<CountdownRecord>,
    pub bursts: Vec<BurstRecord>,
    pub virtual_collisions: Vec<VirtualCollision>,
    pub cw_changes: Vec<CwChange>,
    pub nav_updates: Vec<NavUpdate>,
    pub transmissions: Vec<TxRecord>,
}

/// Counters kept on every run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Distinct instants at which at least one contender won access.
    pub access_rounds: u64,
    /// Rounds in which two or more contenders started together.
    pub collided_rounds: u64,
    pub frames_sent: u64,
    pub frames_corrupted: u64,
    pub events_fired: u64,
}

#[derive(Debug)]
struct Queue {
    c: Contention,
    packets: VecDeque<Packet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Rts,
    AwaitCts,
    Data,
    AwaitAck,
}

#[derive(Debug)]
struct Exchange {
    queue: usize,
    stage: Stage,
    burst_start: Option<Timestamp>,
    data_end: Timestamp,
    frames: u32,
    timeout: Option<EventHandle>,
}

#[derive(Debug)]
struct Station {
    id: u32,
    queues: Vec<Queue>,
    rts_cts: bool,
    capacity: usize,
    nav_until: Timestamp,
    exchange: Option<Exchange>,
    exchange_end: Timestamp,
    expiry: Option<(Timestamp, EventHandle)>,
    rng: ChaCha8Rng,
}

#[derive(Debug)]
struct FlowState {
    spec: FlowSpec,
    station: usize,
    queue: usize,
    next_seq: u64,
    cbr: Option<CbrClock>,
}

#[derive(Debug, Clone, Copy)]
struct TxCtx {
    station: usize,
    kind: FrameKind,
    from_ap: bool,
    record: Option<usize>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of an independent random stream for `(seed, domain, id)`.
pub fn stream_seed(seed: u64, domain: u64, id: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)) ^ id)
}

const STATION_STREAM: u64 = 1;
const FLOW_STREAM: u64 = 2;

pub struct Simulation {
    name: String,
    mac_mode: MacMode,
    seed: u64,
    rep: usize,
    duration: Timestamp,
    phy: PhyParams,
    sched: Scheduler<EventKind>,
    medium: Medium,
    stations: Vec<Station>,
    flows: Vec<FlowState>,
    changes: Vec<Timestamp>,
    tx_ctx: HashMap<TxId, TxCtx>,
    metrics: MetricsCollector,
    stats: ChannelStats,
    last_access: Option<(Timestamp, bool)>,
    diag: Option<Diagnostics>,
    trace: Option<Vec<TraceLine>>,
}

impl Simulation {
    pub fn new(setup: SimSetup) -> Simulation {
        let phy = setup.phy.clone();
        let mut medium = Medium::new(phy.clone());
        if setup.diagnostics {
            medium = medium.with_busy_log();
        }
        let stations: Vec<Station> = setup
            .stations
            .iter()
            .map(|s| Station {
                id: s.id,
                queues: s
                    .contenders
                    .iter()
                    .map(|p| Queue {
                        c: Contention::new(p.clone()),
                        packets: VecDeque::new(),
                    })
                    .collect(),
                rts_cts: s.rts_cts,
                capacity: s.queue_capacity,
                nav_until: Timestamp::ZERO,
                exchange: None,
                exchange_end: Timestamp::ZERO,
                expiry: None,
                rng: ChaCha8Rng::seed_from_u64(stream_seed(setup.seed, STATION_STREAM, s.id as u64)),
            })
            .collect();

        let flows: Vec<FlowState> = setup
            .flows
            .iter()
            .map(|f| {
                let station = stations
                    .iter()
                    .position(|s| s.id == f.station)
                    .unwrap_or_else(|| panic!("flow {} names unknown station {}", f.flow_id, f.station));
                let queue = match setup.mac_mode {
                    MacMode::Dcf => 0,
                    MacMode::Edca => classify(f.traffic_class).index(),
                };
                assert!(queue < stations[station].queues.len());
                FlowState {
                    spec: f.clone(),
                    station,
                    queue,
                    next_seq: 0,
                    cbr: None,
                }
            })
            .collect();

        let metas = flows
            .iter()
            .map(|f| FlowMeta {
                flow_id: f.spec.flow_id.clone(),
                station: f.spec.station,
                class: f.spec.traffic_class,
                start_at: f.spec.start_at,
                stop_at: f.spec.stop_at,
            })
            .collect();
        let mut changes = setup.changes.clone();
        changes.sort();
        changes.dedup();
        let metrics = MetricsCollector::new(metas, &changes, setup.duration, setup.warmup);

        let mut sim = Simulation {
            name: setup.name,
            mac_mode: setup.mac_mode,
            seed: setup.seed,
            rep: setup.rep,
            duration: setup.duration,
            phy,
            sched: Scheduler::new(),
            medium,
            stations,
            flows,
            changes,
            tx_ctx: HashMap::new(),
            metrics,
            stats: ChannelStats::default(),
            last_access: None,
            diag: setup.diagnostics.then(Diagnostics::default),
            trace: setup.trace.then(Vec::new),
        };

        for (index, &at) in sim.changes.clone().iter().enumerate() {
            if at < sim.duration {
                sim.schedule(at, EventKind::ScenarioChange { index });
            }
        }
        for flow in 0..sim.flows.len() {
            let start = sim.flows[flow].spec.start_at;
            if !sim.changes.contains(&start) {
                sim.start_flow(flow);
            }
        }
        sim
    }

    fn schedule(&mut self, at: Timestamp, kind: EventKind) -> EventHandle {
        self.sched
            .schedule(at, kind)
            .expect("state machine scheduled an event in the past")
    }

    /// Sets a contender's pending backoff before the run starts, so tests can
    /// force simultaneous expiries. The countdown runs as a post-backoff that
    /// the first arriving frame joins.
    pub fn prime_backoff(&mut self, station_id: u32, queue: usize, slots: u32) {
        let si = self.station_index(station_id);
        let q = &mut self.stations[si].queues[queue];
        q.c.countdown = None;
        q.c.backoff_remaining = slots;
        q.c.phase = if q.packets.is_empty() {
            Phase::PostBackoff
        } else {
            Phase::Backoff
        };
        self.rearm(si);
    }

    fn station_index(&self, id: u32) -> usize {
        self.stations
            .iter()
            .position(|s| s.id == id)
            .unwrap_or_else(|| panic!("unknown station {id}"))
    }

    fn start_flow(&mut self, flow: usize) {
        let spec = &self.flows[flow].spec;
        if spec.start_at >= spec.stop_at || spec.start_at >= self.duration {
            return;
        }
        let start = spec.start_at.max(self.sched.now());
        match spec.mode {
            FlowMode::Saturated => {
                self.schedule(start, EventKind::Arrival { flow });
            }
            FlowMode::Cbr => {
                let interval = CbrClock::interval_us(spec.packet_size_bytes, spec.rate_bps).max(1);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(stream_seed(self.seed, FLOW_STREAM, flow as u64));
                let offset = rng.gen_range(0..interval);
                let mut clock = CbrClock::new(start + offset, spec.packet_size_bytes, spec.rate_bps);
                let first = clock.pop();
                self.flows[flow].cbr = Some(clock);
                if first < self.flows[flow].spec.stop_at {
                    self.schedule(first, EventKind::Arrival { flow });
                }
            }
        }
    }

    /// Runs to the configured duration.
    pub fn run(&mut self) {
        let limit = self.duration;
        while let Some(ev) = self.sched.pop_until(limit) {
            self.dispatch(ev);
        }
        self.sched.run_until(limit, |_, _| unreachable!());
    }

    /// Runs until `limit` (capped at the configured duration).
    pub fn run_until(&mut self, limit: Timestamp) {
        let limit = limit.min(self.duration);
        while let Some(ev) = self.sched.pop_until(limit) {
            self.dispatch(ev);
        }
    }

    pub fn now(&self) -> Timestamp {
        self.sched.now()
    }

    pub fn report(&self) -> RunReport {
        self.metrics.report(ReportMeta {
            scenario: self.name.clone(),
            mac_mode: self.mac_mode.to_string(),
            seed: self.seed,
            rep: self.rep,
            n_stations: self.stations.len(),
        })
    }

    pub fn metrics(&self) -> &MetricsCollector {
        &self.metrics
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        self.diag.as_ref()
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn phy(&self) -> &PhyParams {
        &self.phy
    }

    pub fn trace(&self) -> Option<&[TraceLine]> {
        self.trace.as_deref()
    }

    pub fn nav_until(&self, station_id: u32) -> Timestamp {
        self.stations[self.station_index(station_id)].nav_until
    }

    pub fn queue_len(&self, station_id: u32, queue: usize) -> usize {
        self.stations[self.station_index(station_id)].queues[queue]
            .packets
            .len()
    }

    pub fn contention(&self, station_id: u32, queue: usize) -> &Contention {
        &self.stations[self.station_index(station_id)].queues[queue].c
    }

    fn target_of(&self, kind: &EventKind) -> String {
        match *kind {
            EventKind::Arrival { flow } => format!("sta{}", self.flows[flow].spec.station),
            EventKind::BackoffExpiry { station }
            | EventKind::Timeout { station }
            | EventKind::TxStart {
                station,
                from_ap: false,
            } => format!("sta{}", self.stations[station].id),
            EventKind::TxStart { from_ap: true, .. } => "ap".to_string(),
            EventKind::TxEnd { .. } => "medium".to_string(),
            EventKind::ScenarioChange { .. } => "scenario".to_string(),
        }
    }

    fn dispatch(&mut self, ev: Fired<EventKind>) {
        self.stats.events_fired += 1;
        if self.trace.is_some() {
            let line = TraceLine {
                time_us: ev.fire_at.as_micros(),
                seq: ev.seq,
                target: self.target_of(&ev.payload),
                kind: ev.payload.tag(),
            };
            self.trace.as_mut().expect("checked").push(line);
        }
        match ev.payload {
            EventKind::Arrival { flow } => self.on_arrival(flow),
            EventKind::BackoffExpiry { station } => self.on_backoff_expiry(station),
            EventKind::TxStart { station, from_ap } => self.on_tx_start(station, from_ap),
            EventKind::TxEnd { tx } => self.on_tx_end(tx),
            EventKind::Timeout { station } => self.on_timeout(station),
            EventKind::ScenarioChange { index } => self.on_scenario_change(index),
        }
    }

    // ---- carrier sense -------------------------------------------------

    /// Instant from which the station considers the channel idle, or `None`
    /// while the medium is busy or the station is mid-exchange. May lie in
    /// the future while a NAV is pending.
    fn idle_edge(&self, si: usize) -> Option<Timestamp> {
        let now = self.sched.now();
        let s = &self.stations[si];
        if s.exchange.is_some() {
            return None;
        }
        let medium_edge = self.medium.idle_since(now)?;
        Some(medium_edge.max(s.nav_until).max(s.exchange_end))
    }

    fn rearm(&mut self, si: usize) {
        if let Some(edge) = self.idle_edge(si) {
            for q in self.stations[si].queues.iter_mut() {
                if q.c.wants_countdown() && q.c.countdown.is_none() {
                    q.c.resume(edge);
                    if q.c.phase == Phase::Backoff && edge + q.c.params.ifs_us > self.sched.now() {
                        q.c.phase = Phase::IfsWait;
                    }
                }
            }
        }
        self.reschedule_expiry(si);
    }

    fn reschedule_expiry(&mut self, si: usize) {
        let slot = self.phy.slot_time_us;
        let next = self.stations[si]
            .queues
            .iter()
            .filter_map(|q| q.c.countdown.map(|cd| cd.expiry(slot)))
            .min();
        let current = self.stations[si].expiry.map(|(t, _)| t);
        if next == current {
            return;
        }
        if let Some((_, h)) = self.stations[si].expiry.take() {
            self.sched.cancel(h);
        }
        if let Some(t) = next {
            let h = self.schedule(t, EventKind::BackoffExpiry { station: si });
            self.stations[si].expiry = Some((t, h));
        }
    }

    fn log_countdown(&mut self, si: usize, qi: usize, cd: Countdown, end: Timestamp, counted: u32, expired: bool, immediate: bool) {
        if let Some(d) = self.diag.as_mut() {
            let s = &self.stations[si];
            d.countdowns.push(CountdownRecord {
                station: s.id,
                queue: qi,
                ifs_us: s.queues[qi].c.params.ifs_us,
                edge: cd.edge,
                resume_at: cd.resume_at,
                end_at: end,
                remaining_at_resume: cd.remaining,
                slots_counted: counted,
                expired,
                immediate,
            });
        }
    }

    /// Busy edge at `now`: freeze every countdown that does not expire at
    /// this very instant.
    fn freeze_all(&mut self) {
        let now = self.sched.now();
        let slot = self.phy.slot_time_us;
        for si in 0..self.stations.len() {
            for qi in 0..self.stations[si].queues.len() {
                let c = &mut self.stations[si].queues[qi].c;
                let Some(cd) = c.countdown else { continue };
                if cd.expiry(slot) == now {
                    continue;
                }
                let immediate = c.immediate;
                let (cd, counted) = c.freeze(now, slot).expect("countdown present");
                if c.phase == Phase::IfsWait && counted > 0 {
                    c.phase = Phase::Backoff;
                }
                self.log_countdown(si, qi, cd, now, counted, false, immediate);
            }
            self.reschedule_expiry(si);
        }
    }

    fn idle_edge_all(&mut self) {
        for si in 0..self.stations.len() {
            self.rearm(si);
        }
    }

    // ---- traffic -------------------------------------------------------

    fn new_packet(&mut self, flow: usize) -> Packet {
        let now = self.sched.now();
        let f = &mut self.flows[flow];
        let p = Packet {
            flow,
            seq: f.next_seq,
            size_bytes: f.spec.packet_size_bytes,
            created_at: now,
        };
        f.next_seq += 1;
        self.metrics.record_created(&p);
        p
    }

    /// Appends a packet; returns false on tail drop.
    fn enqueue(&mut self, si: usize, qi: usize, p: Packet) -> bool {
        let s = &mut self.stations[si];
        if s.queues[qi].packets.len() >= s.capacity {
            let now = self.sched.now();
            self.metrics.record_dropped(&p, now);
            return false;
        }
        s.queues[qi].packets.push_back(p);
        true
    }

    fn on_arrival(&mut self, flow: usize) {
        let now = self.sched.now();
        if !self.flows[flow].spec.is_active(now) {
            return;
        }
        let (si, qi) = (self.flows[flow].station, self.flows[flow].queue);
        let p = self.new_packet(flow);
        let accepted = self.enqueue(si, qi, p);

        if let Some(clock) = self.flows[flow].cbr.as_mut() {
            let next = clock.pop();
            if next < self.flows[flow].spec.stop_at && next <= self.duration {
                self.schedule(next, EventKind::Arrival { flow });
            }
        }
        if accepted {
            self.on_frame_queued(si, qi);
        }
    }

    /// A frame entered a queue: start access if the contender was idle.
    fn on_frame_queued(&mut self, si: usize, qi: usize) {
        let now = self.sched.now();
        let edge = self.idle_edge(si);
        let q = &mut self.stations[si].queues[qi];
        match q.c.phase {
            Phase::PostBackoff => {
                q.c.phase = Phase::Backoff;
            }
            Phase::Idle => {
                q.c.backoff_remaining = 0;
                match edge {
                    Some(e) if e + q.c.params.ifs_us <= now => {
                        q.c.phase = Phase::Backoff;
                        q.c.countdown = Some(Countdown {
                            edge: e,
                            resume_at: now,
                            remaining: 0,
                        });
                        q.c.immediate = true;
                    }
                    Some(e) => {
                        q.c.phase = Phase::IfsWait;
                        q.c.resume(e);
                    }
                    None => {
                        let s = &mut self.stations[si];
                        let q = &mut s.queues[qi];
                        q.c.draw(&mut s.rng);
                        q.c.phase = Phase::Backoff;
                    }
                }
                self.reschedule_expiry(si);
            }
            _ => {}
        }
    }

    /// Removes the head frame after delivery or drop, refilling saturated
    /// sources, and leaves the contender in backoff or post-backoff.
    fn dequeue_head(&mut self, si: usize, qi: usize) -> Packet {
        let p = self.stations[si].queues[qi]
            .packets
            .pop_front()
            .expect("exchange without a head frame");
        let now = self.sched.now();
        let f = &self.flows[p.flow];
        if f.spec.mode == FlowMode::Saturated && f.spec.is_active(now) {
            let np = self.new_packet(p.flow);
            self.enqueue(si, qi, np);
        }
        p
    }

    fn settle_phase(&mut self, si: usize, qi: usize) {
        let q = &mut self.stations[si].queues[qi];
        q.c.phase = if q.packets.is_empty() {
            Phase::PostBackoff
        } else {
            Phase::Backoff
        };
    }

    fn apply_outcome(&mut self, si: usize, qi: usize, success: bool, internal: bool) -> TxOutcome {
        let now = self.sched.now();
        let s = &mut self.stations[si];
        let q = &mut s.queues[qi];
        let old_cw = q.c.cw;
        let outcome = if internal {
            q.c.settle(success, &mut s.rng)
        } else {
            q.c.on_tx_outcome(success, &mut s.rng)
                .expect("outcome delivered while awaiting a response")
        };
        let new_cw = q.c.cw;
        if let Some(d) = self.diag.as_mut() {
            d.cw_changes.push(CwChange {
                station: s.id,
                queue: qi,
                at: now,
                old_cw,
                new_cw,
                outcome,
                internal,
            });
        }
        if outcome == TxOutcome::Dropped {
            let p = self.dequeue_head(si, qi);
            self.metrics.record_dropped(&p, now);
        }
        outcome
    }

    fn on_scenario_change(&mut self, index: usize) {
        let at = self.changes[index];
        let starting: Vec<usize> = (0..self.flows.len())
            .filter(|&f| self.flows[f].spec.start_at == at)
            .collect();
        for f in starting {
            self.start_flow(f);
        }
    }

    // ---- channel access ------------------------------------------------

    fn on_backoff_expiry(&mut self, si: usize) {
        let now = self.sched.now();
        let slot = self.phy.slot_time_us;
        self.stations[si].expiry = None;
        debug_assert!(self.stations[si].exchange.is_none());

        let mut candidates = Vec::new();
        for qi in 0..self.stations[si].queues.len() {
            let c = &mut self.stations[si].queues[qi].c;
            let Some(cd) = c.countdown else { continue };
            if cd.expiry(slot) != now {
                continue;
            }
            let immediate = c.immediate;
            c.countdown = None;
            c.immediate = false;
            c.backoff_remaining = 0;
            let has_frame = !self.stations[si].queues[qi].packets.is_empty();
            let c = &mut self.stations[si].queues[qi].c;
            if has_frame {
                candidates.push(qi);
            } else {
                c.phase = Phase::Idle;
            }
            self.log_countdown(si, qi, cd, now, cd.remaining, true, immediate);
        }

        if candidates.is_empty() {
            self.reschedule_expiry(si);
            return;
        }
        let expiring: Vec<AccessCategory> = candidates
            .iter()
            .map(|&qi| AccessCategory::from_index(qi))
            .collect();
        let (winner, losers) =
            resolve_internal_collision(&expiring).expect("non-empty candidate set");
        if let Some(d) = self.diag.as_mut() {
            d.virtual_collisions.push(VirtualCollision {
                station: self.stations[si].id,
                at: now,
                expiring: candidates.clone(),
                winner: winner.index(),
            });
        }
        for loser in losers {
            let qi = loser.index();
            self.apply_outcome(si, qi, false, true);
            self.settle_phase(si, qi);
        }
        self.start_access(si, winner.index());
    }

    fn start_access(&mut self, si: usize, qi: usize) {
        let now = self.sched.now();
        match self.last_access {
            Some((t, collided)) if t == now => {
                if !collided {
                    self.stats.collided_rounds += 1;
                    self.last_access = Some((t, true));
                }
            }
            _ => {
                self.stats.access_rounds += 1;
                self.last_access = Some((now, false));
            }
        }
        let s = &mut self.stations[si];
        s.queues[qi].c.phase = Phase::Transmitting;
        let use_rts = s.rts_cts;
        s.exchange = Some(Exchange {
            queue: qi,
            stage: if use_rts { Stage::Rts } else { Stage::Data },
            burst_start: None,
            data_end: now,
            frames: 0,
            timeout: None,
        });
        if use_rts {
            self.send(Node::Station(self.stations[si].id), si, FrameKind::Rts, 0, false);
        } else {
            self.send_data(si);
        }
        // the other queues of this station freeze along with everyone else
        self.freeze_all();
    }

    fn send_data(&mut self, si: usize) {
        let now = self.sched.now();
        let ex = self.stations[si].exchange.as_mut().expect("in exchange");
        ex.stage = Stage::Data;
        ex.burst_start.get_or_insert(now);
        let qi = ex.queue;
        let size = self.stations[si].queues[qi]
            .packets
            .front()
            .expect("data exchange with empty queue")
            .size_bytes;
        self.stations[si].queues[qi].c.phase = Phase::Transmitting;
        self.send(Node::Station(self.stations[si].id), si, FrameKind::Data, size, false);
    }

    fn send(&mut self, sender: Node, si: usize, kind: FrameKind, payload: u64, from_ap: bool) -> Transmission {
        let now = self.sched.now();
        let tx = self
            .medium
            .begin_transmission(sender, kind, payload, now)
            .expect("radio already transmitting");
        self.stats.frames_sent += 1;
        let record = self.diag.as_mut().map(|d| {
            d.transmissions.push(TxRecord {
                sender,
                kind,
                start: tx.start,
                end: tx.end(),
                corrupted: false,
            });
            d.transmissions.len() - 1
        });
        self.tx_ctx.insert(
            tx.id,
            TxCtx {
                station: si,
                kind,
                from_ap,
                record,
            },
        );
        self.schedule(tx.end(), EventKind::TxEnd { tx: tx.id });
        tx
    }

    fn on_tx_start(&mut self, si: usize, from_ap: bool) {
        if from_ap {
            let kind = match self.stations[si].exchange.as_ref().map(|e| e.stage) {
                Some(Stage::AwaitCts) => Responder::Cts,
                Some(Stage::AwaitAck) => Responder::Ack,
                other => unreachable!("AP response scheduled in stage {other:?}"),
            };
            let frame = match kind {
                Responder::Cts => FrameKind::Cts,
                Responder::Ack => FrameKind::Ack,
            };
            self.send(Node::Ap, si, frame, 0, true);
        } else {
            self.send_data(si);
        }
        self.freeze_all();
    }

    fn head_size(&self, si: usize) -> u64 {
        let qi = self.stations[si].exchange.as_ref().expect("in exchange").queue;
        self.stations[si].queues[qi]
            .packets
            .front()
            .map(|p| p.size_bytes)
            .unwrap_or(0)
    }

    fn set_timeout(&mut self, si: usize, after: u64, stage: Stage) {
        let now = self.sched.now();
        let h = self.schedule(now + after, EventKind::Timeout { station: si });
        let ex = self.stations[si].exchange.as_mut().expect("in exchange");
        ex.stage = stage;
        ex.timeout = Some(h);
    }

    fn clear_timeout(&mut self, si: usize) {
        if let Some(h) = self
            .stations[si]
            .exchange
            .as_mut()
            .and_then(|e| e.timeout.take())
        {
            self.sched.cancel(h);
        }
    }

    fn set_nav(&mut self, except: usize, until: Timestamp) {
        let now = self.sched.now();
        for si in 0..self.stations.len() {
            if si == except {
                continue;
            }
            let s = &mut self.stations[si];
            if until > s.nav_until {
                s.nav_until = until;
                if let Some(d) = self.diag.as_mut() {
                    d.nav_updates.push(NavUpdate {
                        station: s.id,
                        at: now,
                        nav_until: until,
                    });
                }
            }
        }
    }

    fn on_tx_end(&mut self, id: TxId) {
        let now = self.sched.now();
        let tx = self
            .medium
            .end_transmission(id)
            .expect("tx-end for an unknown transmission");
        let ctx = self.tx_ctx.remove(&id).expect("transmission context");
        if tx.corrupted {
            self.stats.frames_corrupted += 1;
        }
        if let (Some(d), Some(i)) = (self.diag.as_mut(), ctx.record) {
            d.transmissions[i].corrupted = tx.corrupted;
        }
        let si = ctx.station;
        let sifs = self.phy.sifs_us;
        match (ctx.from_ap, ctx.kind) {
            (false, FrameKind::Rts) => {
                let size = self.head_size(si);
                self.set_timeout(si, self.phy.cts_timeout(), Stage::AwaitCts);
                if !tx.corrupted {
                    self.set_nav(si, rts_nav_end(&self.phy, now, size));
                    self.schedule(now + sifs, EventKind::TxStart { station: si, from_ap: true });
                }
            }
            (false, FrameKind::Data) => {
                self.stations[si].exchange.as_mut().expect("in exchange").data_end = now;
                let qi = self.stations[si].exchange.as_ref().expect("in exchange").queue;
                self.stations[si].queues[qi].c.phase = Phase::AwaitingAck;
                self.set_timeout(si, self.phy.ack_timeout(), Stage::AwaitAck);
                if !tx.corrupted {
                    self.schedule(now + sifs, EventKind::TxStart { station: si, from_ap: true });
                }
            }
            (true, FrameKind::Cts) => {
                if !tx.corrupted {
                    self.clear_timeout(si);
                    let size = self.head_size(si);
                    self.set_nav(si, cts_nav_end(&self.phy, now, size));
                    self.stations[si].exchange.as_mut().expect("in exchange").stage = Stage::Data;
                    self.schedule(now + sifs, EventKind::TxStart { station: si, from_ap: false });
                }
            }
            (true, FrameKind::Ack) => {
                if !tx.corrupted {
                    self.clear_timeout(si);
                    self.on_ack(si);
                }
            }
            other => unreachable!("unexpected frame on the air: {other:?}"),
        }
        if !self.medium.is_busy(now) {
            self.idle_edge_all();
        }
    }

    fn on_ack(&mut self, si: usize) {
        let now = self.sched.now();
        let (qi, data_end) = {
            let ex = self.stations[si].exchange.as_mut().expect("in exchange");
            ex.frames += 1;
            (ex.queue, ex.data_end)
        };
        self.apply_outcome(si, qi, true, false);
        let p = self.dequeue_head(si, qi);
        self.metrics
            .record_delivery(&p, data_end)
            .expect("delivery bookkeeping");

        let limit = self.stations[si].queues[qi].c.params.txop_limit_us;
        let burst_start = self.stations[si]
            .exchange
            .as_ref()
            .and_then(|e| e.burst_start)
            .unwrap_or(now);
        let next = self.stations[si].queues[qi]
            .packets
            .front()
            .map(|p| self.phy.data_exchange(p.size_bytes));
        if let Some(ex_us) = next {
            if txop_admits(limit, burst_start, now, self.phy.sifs_us, ex_us) {
                self.stations[si].queues[qi].c.phase = Phase::Transmitting;
                self.stations[si].exchange.as_mut().expect("in exchange").stage = Stage::Data;
                self.schedule(
                    now + self.phy.sifs_us,
                    EventKind::TxStart {
                        station: si,
                        from_ap: false,
                    },
                );
                return;
            }
        }
        self.end_exchange(si);
    }

    fn end_exchange(&mut self, si: usize) {
        let now = self.sched.now();
        let ex = self.stations[si].exchange.take().expect("in exchange");
        self.stations[si].exchange_end = now;
        if ex.frames > 0 {
            if let Some(d) = self.diag.as_mut() {
                let s = &self.stations[si];
                d.bursts.push(BurstRecord {
                    station: s.id,
                    queue: ex.queue,
                    txop_limit_us: s.queues[ex.queue].c.params.txop_limit_us,
                    first_data_start: ex.burst_start.unwrap_or(now),
                    last_ack_end: now,
                    frames: ex.frames,
                });
            }
        }
        self.settle_phase(si, ex.queue);
    }

    fn on_timeout(&mut self, si: usize) {
        let qi = {
            let ex = self.stations[si].exchange.as_mut().expect("timeout outside an exchange");
            ex.timeout = None;
            ex.queue
        };
        // a failed frame ends the exchange, burst or not
        self.stations[si].queues[qi].c.phase = Phase::AwaitingAck;
        self.apply_outcome(si, qi, false, false);
        // record any frames of a burst that did succeed before the failure
        self.end_exchange(si);
        self.rearm(si);
    }
}
