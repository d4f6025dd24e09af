//! Flow descriptions and packet arrival processes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kernel::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficClass {
    Voice,
    Video,
    BestEffort,
    Background,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 4] = [
        TrafficClass::Voice,
        TrafficClass::Video,
        TrafficClass::BestEffort,
        TrafficClass::Background,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Voice => "voice",
            TrafficClass::Video => "video",
            TrafficClass::BestEffort => "best-effort",
            TrafficClass::Background => "background",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrafficClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown traffic class `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    Cbr,
    Saturated,
}

/// A resolved flow, ready to drive the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub flow_id: String,
    pub station: u32,
    pub traffic_class: TrafficClass,
    pub mode: FlowMode,
    pub packet_size_bytes: u64,
    /// Only meaningful for CBR flows.
    pub rate_bps: u64,
    pub start_at: Timestamp,
    pub stop_at: Timestamp,
}

impl FlowSpec {
    pub fn is_active(&self, at: Timestamp) -> bool {
        self.start_at <= at && at < self.stop_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Index of the flow in the simulation's flow table.
    pub flow: usize,
    pub seq: u64,
    pub size_bytes: u64,
    pub created_at: Timestamp,
}

/// Constant-bit-rate arrival clock.
///
/// The k-th arrival is at `origin + floor(k * bits * 1e6 / rate)`, so the
/// fractional part of the inter-arrival time never accumulates as drift.
#[derive(Debug, Clone)]
pub struct CbrClock {
    origin: Timestamp,
    bits_us: u128,
    rate_bps: u128,
    next_k: u64,
}

impl CbrClock {
    pub fn new(origin: Timestamp, packet_size_bytes: u64, rate_bps: u64) -> Self {
        assert!(rate_bps > 0 && packet_size_bytes > 0);
        CbrClock {
            origin,
            bits_us: 8 * packet_size_bytes as u128 * 1_000_000,
            rate_bps: rate_bps as u128,
            next_k: 0,
        }
    }

    /// Nominal inter-arrival time rounded down to whole microseconds.
    pub fn interval_us(packet_size_bytes: u64, rate_bps: u64) -> u64 {
        (8 * packet_size_bytes as u128 * 1_000_000 / rate_bps as u128) as u64
    }

    pub fn arrival(&self, k: u64) -> Timestamp {
        self.origin + (k as u128 * self.bits_us / self.rate_bps) as u64
    }

    /// First arrival strictly after `now`, advancing the clock past it.
    pub fn next_arrival(&mut self, now: Timestamp) -> Timestamp {
        while self.arrival(self.next_k) <= now {
            self.next_k += 1;
        }
        let t = self.arrival(self.next_k);
        self.next_k += 1;
        t
    }

    /// Pops the next arrival in sequence, regardless of the clock.
    pub fn pop(&mut self) -> Timestamp {
        let t = self.arrival(self.next_k);
        self.next_k += 1;
        t
    }
}
