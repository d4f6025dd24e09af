//! Per-packet delay records and per-flow / per-class statistics.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Timestamp;
use crate::traffic::{Packet, TrafficClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub flow: usize,
    pub seq: u64,
    pub delay_us: u64,
    pub window: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("packet {flow}/{seq} delivered at {delivered_at} before it was created at {created_at}")]
    DeliveredBeforeCreated {
        flow: usize,
        seq: u64,
        created_at: Timestamp,
        delivered_at: Timestamp,
    },
    #[error("packet {flow}/{seq} delivered twice")]
    Duplicate { flow: usize, seq: u64 },
}

/// Delay summary over a set of integer-microsecond delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: u64,
    pub mean_us: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub max_us: u64,
}

impl DelayStats {
    /// Exact mean and nearest-rank percentiles. `None` for an empty set.
    pub fn from_delays(delays: &mut [u64]) -> Option<DelayStats> {
        if delays.is_empty() {
            return None;
        }
        delays.sort_unstable();
        let sum: u128 = delays.iter().map(|&d| d as u128).sum();
        Some(DelayStats {
            count: delays.len() as u64,
            mean_us: sum as f64 / delays.len() as f64,
            p50_us: nearest_rank(delays, 50),
            p95_us: nearest_rank(delays, 95),
            max_us: *delays.last().expect("non-empty"),
        })
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p / 100 * n)`.
pub fn nearest_rank(sorted: &[u64], p: u32) -> u64 {
    let n = sorted.len() as u64;
    let rank = (p as u64 * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

/// Delay statistics per flow for one window (or all windows).
pub fn summarize(records: &[DelayRecord], window: Option<usize>) -> BTreeMap<usize, DelayStats> {
    let mut by_flow: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| window.is_none_or(|w| r.window == w))
    {
        by_flow.entry(r.flow).or_default().push(r.delay_us);
    }
    by_flow
        .into_iter()
        .filter_map(|(flow, mut d)| DelayStats::from_delays(&mut d).map(|s| (flow, s)))
        .collect()
}

/// Static description of a flow, as the collector needs it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMeta {
    pub flow_id: String,
    pub station: u32,
    pub class: TrafficClass,
    pub start_at: Timestamp,
    pub stop_at: Timestamp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counters {
    created: u64,
    delivered: u64,
    dropped: u64,
    delivered_bytes: u64,
}

/// Collects per-packet events during one run. Packets created before the
/// warm-up horizon are ignored entirely.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    flows: Vec<FlowMeta>,
    window_starts: Vec<Timestamp>,
    end: Timestamp,
    warmup: Timestamp,
    records: Vec<DelayRecord>,
    delivered: HashSet<(usize, u64)>,
    counters: Vec<Vec<Counters>>,
}

impl MetricsCollector {
    /// `boundaries` are the instants where a new window begins (scenario
    /// changes); window 0 always starts at time zero.
    pub fn new(
        flows: Vec<FlowMeta>,
        boundaries: &[Timestamp],
        end: Timestamp,
        warmup: Timestamp,
    ) -> Self {
        let mut window_starts = vec![Timestamp::ZERO];
        window_starts.extend(boundaries.iter().copied().filter(|&b| b > Timestamp::ZERO));
        window_starts.dedup();
        let n = flows.len();
        MetricsCollector {
            counters: vec![vec![Counters::default(); n]; window_starts.len()],
            flows,
            window_starts,
            end,
            warmup,
            records: Vec::new(),
            delivered: HashSet::new(),
        }
    }

    pub fn window_of(&self, t: Timestamp) -> usize {
        self.window_starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn window_count(&self) -> usize {
        self.window_starts.len()
    }

    pub fn flows(&self) -> &[FlowMeta] {
        &self.flows
    }

    pub fn records(&self) -> &[DelayRecord] {
        &self.records
    }

    fn counted(&self, p: &Packet) -> bool {
        p.created_at >= self.warmup
    }

    pub fn record_created(&mut self, p: &Packet) {
        if self.counted(p) {
            let w = self.window_of(p.created_at);
            self.counters[w][p.flow].created += 1;
        }
    }

    pub fn record_dropped(&mut self, p: &Packet, at: Timestamp) {
        if self.counted(p) {
            let w = self.window_of(at);
            self.counters[w][p.flow].dropped += 1;
        }
    }

    pub fn record_delivery(
        &mut self,
        p: &Packet,
        delivered_at: Timestamp,
    ) -> Result<Option<DelayRecord>, MetricsError> {
        if delivered_at < p.created_at {
            return Err(MetricsError::DeliveredBeforeCreated {
                flow: p.flow,
                seq: p.seq,
                created_at: p.created_at,
                delivered_at,
            });
        }
        if !self.delivered.insert((p.flow, p.seq)) {
            return Err(MetricsError::Duplicate {
                flow: p.flow,
                seq: p.seq,
            });
        }
        if !self.counted(p) {
            return Ok(None);
        }
        let window = self.window_of(delivered_at);
        let c = &mut self.counters[window][p.flow];
        c.delivered += 1;
        c.delivered_bytes += p.size_bytes;
        let rec = DelayRecord {
            flow: p.flow,
            seq: p.seq,
            delay_us: delivered_at.since(p.created_at),
            window,
        };
        self.records.push(rec);
        Ok(Some(rec))
    }

    fn window_span(&self, w: usize) -> (Timestamp, Timestamp) {
        let start = self.window_starts[w];
        let end = self.window_starts.get(w + 1).copied().unwrap_or(self.end);
        (start, end)
    }

    fn active_secs(&self, flow: usize, from: Timestamp, to: Timestamp) -> f64 {
        let f = &self.flows[flow];
        let lo = from.max(f.start_at).max(self.warmup);
        let hi = to.min(f.stop_at).min(self.end);
        if hi > lo {
            hi.since(lo) as f64 / 1e6
        } else {
            0.0
        }
    }

    fn window_report(&self, window: Option<usize>) -> WindowReport {
        let (index, (start, end)) = match window {
            Some(w) => (w as i64, self.window_span(w)),
            None => (-1, (Timestamp::ZERO, self.end)),
        };
        let stats = summarize(&self.records, window);
        let counters: Vec<Counters> = (0..self.flows.len())
            .map(|f| {
                let ws: Vec<usize> = match window {
                    Some(w) => vec![w],
                    None => (0..self.window_count()).collect(),
                };
                ws.iter().fold(Counters::default(), |mut acc, &w| {
                    let c = self.counters[w][f];
                    acc.created += c.created;
                    acc.delivered += c.delivered;
                    acc.dropped += c.dropped;
                    acc.delivered_bytes += c.delivered_bytes;
                    acc
                })
            })
            .collect();

        let mut flows = Vec::with_capacity(self.flows.len());
        for (i, meta) in self.flows.iter().enumerate() {
            let c = counters[i];
            let secs = self.active_secs(i, start, end);
            let throughput_bps = if secs > 0.0 {
                8.0 * c.delivered_bytes as f64 / secs
            } else {
                0.0
            };
            flows.push(FlowStats {
                flow_id: meta.flow_id.clone(),
                station: meta.station,
                class: meta.class,
                created: c.created,
                delivered: c.delivered,
                dropped: c.dropped,
                delay: stats.get(&i).copied(),
                throughput_bps,
            });
        }

        let mut classes = Vec::new();
        for class in TrafficClass::ALL {
            let members: Vec<usize> = (0..self.flows.len())
                .filter(|&i| self.flows[i].class == class)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut delays: Vec<u64> = self
                .records
                .iter()
                .filter(|r| window.is_none_or(|w| r.window == w))
                .filter(|r| self.flows[r.flow].class == class)
                .map(|r| r.delay_us)
                .collect();
            classes.push(ClassStats {
                class,
                flows: members.len(),
                created: members.iter().map(|&i| flows[i].created).sum(),
                delivered: members.iter().map(|&i| flows[i].delivered).sum(),
                dropped: members.iter().map(|&i| flows[i].dropped).sum(),
                delay: DelayStats::from_delays(&mut delays),
                throughput_bps: members.iter().map(|&i| flows[i].throughput_bps).sum(),
            });
        }

        WindowReport {
            index,
            start_s: start.as_secs_f64(),
            end_s: end.as_secs_f64(),
            flows,
            classes,
        }
    }

    /// One report per window plus a whole-run total.
    pub fn report(&self, meta: ReportMeta) -> RunReport {
        RunReport {
            scenario: meta.scenario,
            mac_mode: meta.mac_mode,
            seed: meta.seed,
            rep: meta.rep,
            n_stations: meta.n_stations,
            duration_s: self.end.as_secs_f64(),
            windows: (0..self.window_count())
                .map(|w| self.window_report(Some(w)))
                .collect(),
            total: self.window_report(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub scenario: String,
    pub mac_mode: String,
    pub seed: u64,
    pub rep: usize,
    pub n_stations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub flow_id: String,
    pub station: u32,
    pub class: TrafficClass,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Absent when nothing was delivered.
    pub delay: Option<DelayStats>,
    pub throughput_bps: f64,
}

impl FlowStats {
    pub fn mean_delay_us(&self) -> Option<f64> {
        self.delay.map(|d| d.mean_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: TrafficClass,
    pub flows: usize,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delay: Option<DelayStats>,
    pub throughput_bps: f64,
}

impl ClassStats {
    pub fn mean_delay_us(&self) -> Option<f64> {
        self.delay.map(|d| d.mean_us)
    }

    pub fn drop_rate(&self) -> f64 {
        if self.created == 0 {
            0.0
        } else {
            self.dropped as f64 / self.created as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// Window index, or -1 for the whole-run total.
    pub index: i64,
    pub start_s: f64,
    pub end_s: f64,
    pub flows: Vec<FlowStats>,
    pub classes: Vec<ClassStats>,
}

impl WindowReport {
    pub fn class(&self, class: TrafficClass) -> Option<&ClassStats> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn class_mean_us(&self, class: TrafficClass) -> Option<f64> {
        self.class(class).and_then(|c| c.mean_delay_us())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mac_mode: String,
    pub seed: u64,
    pub rep: usize,
    pub n_stations: usize,
    pub duration_s: f64,
    pub windows: Vec<WindowReport>,
    pub total: WindowReport,
}
