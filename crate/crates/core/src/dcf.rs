//! Per-contender backoff state shared by legacy DCF stations and each EDCA
//! access category: CW growth, retry accounting, and slot countdown with
//! freeze/resume.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Timestamp;
use crate::phy::{FrameKind, PhyParams};

/// Which integers a backoff draw ranges over for a window value `cw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackoffRange {
    /// `{0, .., cw - 1}`, the legacy DCF convention.
    ExclusiveUpper,
    /// `{0, .., cw}`, the EDCA convention.
    InclusiveUpper,
}

/// Draws a backoff in slots from the station's own random stream.
pub fn draw_backoff<R: Rng + ?Sized>(cw: u32, range: BackoffRange, rng: &mut R) -> u32 {
    match range {
        BackoffRange::ExclusiveUpper => {
            assert!(cw >= 1, "contention window must be at least 1");
            rng.gen_range(0..cw)
        }
        BackoffRange::InclusiveUpper => rng.gen_range(0..=cw),
    }
}

/// Next CW stage after a failure: `((cw + 1) * 2) - 1`, capped at `cw_max`.
pub fn grow_cw(cw: u32, cw_max: u32) -> u32 {
    cw.saturating_add(1)
        .saturating_mul(2)
        .saturating_sub(1)
        .min(cw_max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentionParams {
    pub cw_min: u32,
    pub cw_max: u32,
    /// Idle time required before the countdown runs (DIFS or AIFS).
    pub ifs_us: u64,
    pub retry_limit: u32,
    /// 0 means one frame per channel access.
    pub txop_limit_us: u64,
    pub range: BackoffRange,
}

impl ContentionParams {
    /// Legacy DCF defaults: CW 15..1023, DIFS, 7 retries.
    pub fn dcf(phy: &PhyParams) -> Self {
        ContentionParams {
            cw_min: 15,
            cw_max: 1023,
            ifs_us: phy.difs_us,
            retry_limit: 7,
            txop_limit_us: 0,
            range: BackoffRange::ExclusiveUpper,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MacError {
    #[error("transmission outcome delivered while not awaiting one")]
    UnexpectedOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Idle,
    IfsWait,
    Backoff,
    Transmitting,
    AwaitingAck,
    PostBackoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Delivered,
    Retry,
    Dropped,
}

/// Countdown segment armed at an idle edge: `remaining` slots counted from
/// `resume_at = edge + ifs`, one per idle slot boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Countdown {
    pub edge: Timestamp,
    pub resume_at: Timestamp,
    pub remaining: u32,
}

impl Countdown {
    pub fn expiry(&self, slot_us: u64) -> Timestamp {
        self.resume_at + self.remaining as u64 * slot_us
    }

    /// Slot boundaries crossed by `at`. A boundary that coincides with `at`
    /// counts, since the slot before it was idle.
    pub fn slots_elapsed(&self, at: Timestamp, slot_us: u64) -> u32 {
        if at < self.resume_at {
            0
        } else {
            let n = at.since(self.resume_at) / slot_us;
            n.min(self.remaining as u64) as u32
        }
    }
}

/// Backoff state of one contender (a DCF station or one EDCA access
/// category).
#[derive(Debug, Clone)]
pub struct Contention {
    pub params: ContentionParams,
    pub cw: u32,
    pub backoff_remaining: u32,
    pub retry_count: u32,
    pub phase: Phase,
    /// Set while the countdown runs; cleared when frozen or expired.
    pub countdown: Option<Countdown>,
    /// True when the countdown was armed for immediate access (a frame
    /// arriving to an idle contender on an idle medium).
    pub immediate: bool,
    pub drops: u64,
}

impl Contention {
    pub fn new(params: ContentionParams) -> Self {
        let cw = params.cw_min;
        Contention {
            params,
            cw,
            backoff_remaining: 0,
            retry_count: 0,
            phase: Phase::Idle,
            countdown: None,
            immediate: false,
            drops: 0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u32 {
        self.backoff_remaining = draw_backoff(self.cw, self.params.range, rng);
        self.backoff_remaining
    }

    /// True if this contender wants slot countdown when the medium is idle.
    pub fn wants_countdown(&self) -> bool {
        matches!(
            self.phase,
            Phase::IfsWait | Phase::Backoff | Phase::PostBackoff
        )
    }

    /// Arms the countdown from an idle edge.
    pub fn resume(&mut self, edge: Timestamp) -> Countdown {
        let cd = Countdown {
            edge,
            resume_at: edge + self.params.ifs_us,
            remaining: self.backoff_remaining,
        };
        self.countdown = Some(cd);
        cd
    }

    /// Stops the countdown at `at`, keeping the slots not yet counted.
    /// Returns the segment that was running, if any.
    pub fn freeze(&mut self, at: Timestamp, slot_us: u64) -> Option<(Countdown, u32)> {
        let cd = self.countdown.take()?;
        let counted = cd.slots_elapsed(at, slot_us);
        self.backoff_remaining = cd.remaining - counted;
        self.immediate = false;
        Some((cd, counted))
    }

    /// Applies the result of an exchange. On success the CW resets and a
    /// post-backoff is drawn. On failure the CW grows and a new backoff is
    /// drawn, unless the retry limit is exceeded, in which case the frame is
    /// dropped and the CW resets.
    pub fn on_tx_outcome<R: Rng + ?Sized>(
        &mut self,
        success: bool,
        rng: &mut R,
    ) -> Result<TxOutcome, MacError> {
        if !matches!(self.phase, Phase::AwaitingAck | Phase::Transmitting) {
            return Err(MacError::UnexpectedOutcome);
        }
        Ok(self.settle(success, rng))
    }

    /// Same as [`Contention::on_tx_outcome`] without the phase check; used
    /// for internal (virtual) collisions, which never reach the medium.
    pub fn settle<R: Rng + ?Sized>(&mut self, success: bool, rng: &mut R) -> TxOutcome {
        let outcome = if success {
            self.cw = self.params.cw_min;
            self.retry_count = 0;
            TxOutcome::Delivered
        } else {
            self.retry_count += 1;
            if self.retry_count > self.params.retry_limit {
                self.cw = self.params.cw_min;
                self.retry_count = 0;
                self.drops += 1;
                TxOutcome::Dropped
            } else {
                self.cw = grow_cw(self.cw, self.params.cw_max);
                TxOutcome::Retry
            }
        };
        self.draw(rng);
        self.phase = Phase::Backoff;
        outcome
    }
}

/// NAV end advertised by an RTS that ends at `rts_end`.
pub fn rts_nav_end(phy: &PhyParams, rts_end: Timestamp, payload_bytes: u64) -> Timestamp {
    rts_end
        + phy.sifs_us
        + phy.cts_airtime()
        + phy.sifs_us
        + phy.frame_airtime(FrameKind::Data, payload_bytes)
        + phy.sifs_us
        + phy.ack_airtime()
}

/// NAV end advertised by a CTS that ends at `cts_end`.
pub fn cts_nav_end(phy: &PhyParams, cts_end: Timestamp, payload_bytes: u64) -> Timestamp {
    cts_end + phy.sifs_us + phy.frame_airtime(FrameKind::Data, payload_bytes) + phy.sifs_us
        + phy.ack_airtime()
}
