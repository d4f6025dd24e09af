//! Shared half-duplex channel: frame airtime, carrier sense and collisions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Timestamp;

/// PHY timing and framing parameters. Defaults follow the 802.11g ERP-OFDM
/// short-slot profile at 54 Mb/s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyParams {
    pub slot_time_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub data_rate_bps: u64,
    pub ctrl_rate_bps: u64,
    pub plcp_overhead_us: u64,
    pub mac_header_bytes: u64,
    pub ack_frame_bytes: u64,
    pub rts_frame_bytes: u64,
    pub cts_frame_bytes: u64,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            slot_time_us: 9,
            sifs_us: 10,
            difs_us: 28,
            data_rate_bps: 54_000_000,
            ctrl_rate_bps: 24_000_000,
            plcp_overhead_us: 20,
            mac_header_bytes: 28,
            ack_frame_bytes: 14,
            rts_frame_bytes: 20,
            cts_frame_bytes: 14,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PhyParamsError {
    #[error("`{0}` must be greater than zero")]
    NotPositive(&'static str),
    #[error("difs_us ({difs}) must equal sifs_us + 2 * slot_time_us ({expected})")]
    DifsMismatch { difs: u64, expected: u64 },
}

impl PhyParams {
    pub fn validate(&self) -> Result<(), PhyParamsError> {
        let positive = [
            ("slot_time_us", self.slot_time_us),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("data_rate_bps", self.data_rate_bps),
            ("ctrl_rate_bps", self.ctrl_rate_bps),
            ("plcp_overhead_us", self.plcp_overhead_us),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PhyParamsError::NotPositive(name));
            }
        }
        let expected = self.sifs_us + 2 * self.slot_time_us;
        if self.difs_us != expected {
            return Err(PhyParamsError::DifsMismatch {
                difs: self.difs_us,
                expected,
            });
        }
        Ok(())
    }

    /// Airtime of one frame in whole microseconds, rounded up.
    pub fn frame_airtime(&self, kind: FrameKind, payload_bytes: u64) -> u64 {
        let (header, rate) = match kind {
            FrameKind::Data => (self.mac_header_bytes, self.data_rate_bps),
            FrameKind::Ack => (self.ack_frame_bytes, self.ctrl_rate_bps),
            FrameKind::Rts => (self.rts_frame_bytes, self.ctrl_rate_bps),
            FrameKind::Cts => (self.cts_frame_bytes, self.ctrl_rate_bps),
        };
        let bits = 8 * (header + payload_bytes) as u128;
        let us = (bits * 1_000_000).div_ceil(rate as u128);
        self.plcp_overhead_us + us as u64
    }

    pub fn ack_airtime(&self) -> u64 {
        self.frame_airtime(FrameKind::Ack, 0)
    }

    pub fn cts_airtime(&self) -> u64 {
        self.frame_airtime(FrameKind::Cts, 0)
    }

    pub fn rts_airtime(&self) -> u64 {
        self.frame_airtime(FrameKind::Rts, 0)
    }

    /// Time after a data frame ends at which a missing ACK is declared lost.
    pub fn ack_timeout(&self) -> u64 {
        self.sifs_us + self.ack_airtime() + self.slot_time_us
    }

    pub fn cts_timeout(&self) -> u64 {
        self.sifs_us + self.cts_airtime() + self.slot_time_us
    }

    /// Duration of a full data exchange: DATA + SIFS + ACK.
    pub fn data_exchange(&self, payload_bytes: u64) -> u64 {
        self.frame_airtime(FrameKind::Data, payload_bytes) + self.sifs_us + self.ack_airtime()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Data,
    Ack,
    Rts,
    Cts,
}

/// A radio on the channel: a station or the access point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Station(u32),
    Ap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub id: TxId,
    pub sender: Node,
    pub frame_kind: FrameKind,
    pub payload_bytes: u64,
    pub start: Timestamp,
    pub airtime_us: u64,
    pub corrupted: bool,
}

impl Transmission {
    pub fn end(&self) -> Timestamp {
        self.start + self.airtime_us
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MediumError {
    #[error("{0:?} started a transmission while already transmitting")]
    AlreadyTransmitting(Node),
    #[error("unknown transmission {0:?}")]
    UnknownTransmission(TxId),
}

/// The single shared channel. Every radio hears every other radio; a frame
/// is lost only when it overlaps another frame in time. Busy intervals are
/// half-open `[start, end)`.
#[derive(Debug, Clone)]
pub struct Medium {
    params: PhyParams,
    active: Vec<Transmission>,
    last_busy_end: Timestamp,
    next_id: u64,
    busy_log: Option<Vec<(Timestamp, Timestamp)>>,
    total_airtime: u64,
}

impl Medium {
    pub fn new(params: PhyParams) -> Self {
        Medium {
            params,
            active: Vec::new(),
            last_busy_end: Timestamp::ZERO,
            next_id: 0,
            busy_log: None,
            total_airtime: 0,
        }
    }

    /// Keep a merged log of busy intervals (used by trace assertions).
    pub fn with_busy_log(mut self) -> Self {
        self.busy_log = Some(Vec::new());
        self
    }

    pub fn params(&self) -> &PhyParams {
        &self.params
    }

    pub fn frame_airtime(&self, kind: FrameKind, payload_bytes: u64) -> u64 {
        self.params.frame_airtime(kind, payload_bytes)
    }

    /// Puts a frame on the air. Any transmission still on the air at `start`
    /// and the new one are all marked corrupted. The caller schedules the
    /// matching [`Medium::end_transmission`] at `start + airtime_us`.
    pub fn begin_transmission(
        &mut self,
        sender: Node,
        frame_kind: FrameKind,
        payload_bytes: u64,
        start: Timestamp,
    ) -> Result<Transmission, MediumError> {
        if self
            .active
            .iter()
            .any(|t| t.sender == sender && t.end() > start)
        {
            return Err(MediumError::AlreadyTransmitting(sender));
        }
        let airtime_us = self.params.frame_airtime(frame_kind, payload_bytes);
        let mut tx = Transmission {
            id: TxId(self.next_id),
            sender,
            frame_kind,
            payload_bytes,
            start,
            airtime_us,
            corrupted: false,
        };
        self.next_id += 1;
        for other in self.active.iter_mut().filter(|t| t.end() > start) {
            other.corrupted = true;
            tx.corrupted = true;
        }
        self.total_airtime += airtime_us;
        if let Some(log) = self.busy_log.as_mut() {
            let end = tx.end();
            match log.last_mut() {
                Some(last) if last.1 >= start => last.1 = last.1.max(end),
                _ => log.push((start, end)),
            }
        }
        self.active.push(tx.clone());
        Ok(tx)
    }

    /// Takes a finished transmission off the air and returns it with its
    /// final corruption flag.
    pub fn end_transmission(&mut self, id: TxId) -> Result<Transmission, MediumError> {
        let pos = self
            .active
            .iter()
            .position(|t| t.id == id)
            .ok_or(MediumError::UnknownTransmission(id))?;
        let tx = self.active.swap_remove(pos);
        self.last_busy_end = self.last_busy_end.max(tx.end());
        Ok(tx)
    }

    pub fn is_busy(&self, now: Timestamp) -> bool {
        self.active.iter().any(|t| t.start <= now && now < t.end())
    }

    pub fn is_transmitting(&self, node: Node, now: Timestamp) -> bool {
        self.active
            .iter()
            .any(|t| t.sender == node && t.start <= now && now < t.end())
    }

    /// End of the most recent busy period, or `None` while busy.
    pub fn idle_since(&self, now: Timestamp) -> Option<Timestamp> {
        if self.is_busy(now) {
            None
        } else {
            let ended = self
                .active
                .iter()
                .map(|t| t.end())
                .filter(|&e| e <= now)
                .max()
                .unwrap_or(Timestamp::ZERO);
            Some(self.last_busy_end.max(ended))
        }
    }

    /// True iff nothing occupied the channel anywhere in `[t, now]`.
    pub fn medium_idle_since(&self, t: Timestamp, now: Timestamp) -> bool {
        match self.idle_since(now) {
            Some(edge) => edge <= t,
            None => false,
        }
    }

    pub fn busy_log(&self) -> Option<&[(Timestamp, Timestamp)]> {
        self.busy_log.as_deref()
    }

    /// Sum of all airtimes ever started, overlaps counted twice.
    pub fn total_airtime(&self) -> u64 {
        self.total_airtime
    }
}
