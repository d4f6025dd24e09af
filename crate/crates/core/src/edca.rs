//! 802.11e EDCA access categories.
//!
//! Each access category contends like an independent DCF station with its
//! own AIFS, CW bounds and TXOP limit. Categories of one station only
//! interact through [`resolve_internal_collision`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcf::{grow_cw, BackoffRange, Contention, ContentionParams};
use crate::phy::PhyParams;
use crate::traffic::TrafficClass;

/// Access categories in priority order: `Vo` is the highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessCategory {
    Vo,
    Vi,
    Be,
    Bk,
}

impl AccessCategory {
    /// Highest priority first.
    pub const ALL: [AccessCategory; 4] = [
        AccessCategory::Vo,
        AccessCategory::Vi,
        AccessCategory::Be,
        AccessCategory::Bk,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> AccessCategory {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AccessCategory::Vo => "vo",
            AccessCategory::Vi => "vi",
            AccessCategory::Be => "be",
            AccessCategory::Bk => "bk",
        }
    }

    /// True if `self` wins an internal collision against `other`.
    pub fn outranks(self, other: AccessCategory) -> bool {
        self < other
    }
}

impl fmt::Display for AccessCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccessCategory::ALL
            .into_iter()
            .find(|ac| ac.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown access category `{s}` (expected vo, vi, be or bk)"))
    }
}

/// Maps a flow's traffic class to the queue it is served from.
pub fn classify(class: TrafficClass) -> AccessCategory {
    match class {
        TrafficClass::Voice => AccessCategory::Vo,
        TrafficClass::Video => AccessCategory::Vi,
        TrafficClass::BestEffort => AccessCategory::Be,
        TrafficClass::Background => AccessCategory::Bk,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcParams {
    pub cwmin: u32,
    pub cwmax: u32,
    pub aifsn: u32,
    #[serde(default)]
    pub txop_limit_us: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdcaParamsError {
    #[error("{ac}: aifsn must be at least 1")]
    ZeroAifsn { ac: AccessCategory },
    #[error("{ac}: cwmin ({cwmin}) exceeds cwmax ({cwmax})")]
    CwOrder {
        ac: AccessCategory,
        cwmin: u32,
        cwmax: u32,
    },
}

impl AcParams {
    pub fn validate(&self, ac: AccessCategory) -> Result<(), EdcaParamsError> {
        if self.aifsn < 1 {
            return Err(EdcaParamsError::ZeroAifsn { ac });
        }
        if self.cwmin > self.cwmax {
            return Err(EdcaParamsError::CwOrder {
                ac,
                cwmin: self.cwmin,
                cwmax: self.cwmax,
            });
        }
        Ok(())
    }
}

/// Parameters for all four categories, indexed by [`AccessCategory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdcaParamSet {
    pub vo: AcParams,
    pub vi: AcParams,
    pub be: AcParams,
    pub bk: AcParams,
}

impl Default for EdcaParamSet {
    fn default() -> Self {
        let ac = |cwmin, cwmax, aifsn| AcParams {
            cwmin,
            cwmax,
            aifsn,
            txop_limit_us: 0,
        };
        EdcaParamSet {
            vo: ac(7, 15, 2),
            vi: ac(15, 31, 2),
            be: ac(31, 1023, 7),
            bk: ac(31, 1023, 9),
        }
    }
}

impl EdcaParamSet {
    pub fn get(&self, ac: AccessCategory) -> &AcParams {
        match ac {
            AccessCategory::Vo => &self.vo,
            AccessCategory::Vi => &self.vi,
            AccessCategory::Be => &self.be,
            AccessCategory::Bk => &self.bk,
        }
    }

    pub fn get_mut(&mut self, ac: AccessCategory) -> &mut AcParams {
        match ac {
            AccessCategory::Vo => &mut self.vo,
            AccessCategory::Vi => &mut self.vi,
            AccessCategory::Be => &mut self.be,
            AccessCategory::Bk => &mut self.bk,
        }
    }

    pub fn validate(&self) -> Result<(), EdcaParamsError> {
        AccessCategory::ALL
            .into_iter()
            .try_for_each(|ac| self.get(ac).validate(ac))
    }

    /// Contention parameters of one category. Retry limit is inherited from
    /// the legacy default.
    pub fn contention(&self, ac: AccessCategory, phy: &PhyParams) -> ContentionParams {
        let p = self.get(ac);
        ContentionParams {
            cw_min: p.cwmin,
            cw_max: p.cwmax,
            ifs_us: aifs_duration(p.aifsn, phy),
            retry_limit: ContentionParams::dcf(phy).retry_limit,
            txop_limit_us: p.txop_limit_us,
            range: BackoffRange::InclusiveUpper,
        }
    }
}

/// `AIFS = SIFS + AIFSN * aSlotTime`.
pub fn aifs_duration(aifsn: u32, phy: &PhyParams) -> u64 {
    phy.sifs_us + aifsn as u64 * phy.slot_time_us
}

/// CW after a failed (or internally collided) attempt:
/// `min(((old + 1) * 2) - 1, cwmax)`.
pub fn update_cw_on_failure(old_cw: u32, cwmax: u32) -> u32 {
    grow_cw(old_cw, cwmax)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("internal collision resolution needs at least one expiring category")]
pub struct EmptyCollisionSet;

/// Splits the categories whose backoff expired in the same slot into the
/// winner (highest priority) and the losers, which take the failure path
/// without touching the medium.
pub fn resolve_internal_collision(
    expiring: &[AccessCategory],
) -> Result<(AccessCategory, Vec<AccessCategory>), EmptyCollisionSet> {
    let winner = *expiring.iter().min().ok_or(EmptyCollisionSet)?;
    let mut losers: Vec<AccessCategory> =
        expiring.iter().copied().filter(|&ac| ac != winner).collect();
    losers.sort();
    losers.dedup();
    Ok((winner, losers))
}

/// True if another DATA + SIFS + ACK exchange of `exchange_us`, started a
/// SIFS after `now`, still ends within the TXOP that began at `burst_start`.
pub fn txop_admits(
    txop_limit_us: u64,
    burst_start: crate::kernel::Timestamp,
    now: crate::kernel::Timestamp,
    sifs_us: u64,
    exchange_us: u64,
) -> bool {
    txop_limit_us > 0 && (now + sifs_us + exchange_us).since(burst_start) <= txop_limit_us
}

/// Number of frames a single access sends back to back when the queue holds
/// frames whose exchanges take `exchanges_us` each, under `txop_limit_us`.
pub fn burst_length(txop_limit_us: u64, sifs_us: u64, exchanges_us: &[u64]) -> usize {
    use crate::kernel::Timestamp;
    let Some(&first) = exchanges_us.first() else {
        return 0;
    };
    let start = Timestamp::ZERO;
    let mut now = start + first;
    let mut sent = 1;
    for &ex in &exchanges_us[1..] {
        if !txop_admits(txop_limit_us, start, now, sifs_us, ex) {
            break;
        }
        now = now + sifs_us + ex;
        sent += 1;
    }
    sent
}

/// A contender bound to its access category.
pub fn contender(ac: AccessCategory, params: &EdcaParamSet, phy: &PhyParams) -> Contention {
    Contention::new(params.contention(ac, phy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcf::Phase;
    use crate::phy::FrameKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aifs_examples() {
        let phy = PhyParams::default();
        assert_eq!(aifs_duration(2, &phy), 28);
        assert_eq!(aifs_duration(7, &phy), 73);
        assert_eq!(aifs_duration(2, &phy), phy.difs_us);
    }

    #[test]
    fn default_params_match_table() {
        let p = EdcaParamSet::default();
        assert_eq!((p.vo.cwmin, p.vo.cwmax, p.vo.aifsn), (7, 15, 2));
        assert_eq!((p.vi.cwmin, p.vi.cwmax, p.vi.aifsn), (15, 31, 2));
        assert_eq!((p.be.cwmin, p.be.cwmax, p.be.aifsn), (31, 1023, 7));
        assert_eq!((p.bk.cwmin, p.bk.cwmax, p.bk.aifsn), (31, 1023, 9));
        p.validate().unwrap();
    }

    #[test]
    fn zero_aifsn_is_invalid() {
        let mut p = EdcaParamSet::default();
        p.vi.aifsn = 0;
        assert_eq!(
            p.validate(),
            Err(EdcaParamsError::ZeroAifsn {
                ac: AccessCategory::Vi
            })
        );
    }

    #[test]
    fn cw_update_examples() {
        assert_eq!(update_cw_on_failure(7, 15), 15);
        assert_eq!(update_cw_on_failure(15, 31), 31);
        assert_eq!(update_cw_on_failure(31, 31), 31);
    }

    #[test]
    fn success_returns_to_cwmin() {
        let phy = PhyParams::default();
        let params = EdcaParamSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = contender(AccessCategory::Vi, &params, &phy);
        c.phase = Phase::AwaitingAck;
        c.on_tx_outcome(false, &mut rng).unwrap();
        assert_eq!(c.cw, 31);
        assert!(c.backoff_remaining <= 31);
        c.phase = Phase::AwaitingAck;
        c.on_tx_outcome(true, &mut rng).unwrap();
        assert_eq!(c.cw, 15);
    }

    #[test]
    fn internal_collision_examples() {
        use AccessCategory::*;
        assert_eq!(resolve_internal_collision(&[Be, Vo]), Ok((Vo, vec![Be])));
        assert_eq!(resolve_internal_collision(&[Vi]), Ok((Vi, vec![])));
        assert_eq!(
            resolve_internal_collision(&[Bk, Vi, Be]),
            Ok((Vi, vec![Be, Bk]))
        );
        assert_eq!(resolve_internal_collision(&[]), Err(EmptyCollisionSet));
    }

    #[test]
    fn classification_is_total() {
        assert_eq!(classify(TrafficClass::Voice), AccessCategory::Vo);
        assert_eq!(classify(TrafficClass::Video), AccessCategory::Vi);
        assert_eq!(classify(TrafficClass::BestEffort), AccessCategory::Be);
        assert_eq!(classify(TrafficClass::Background), AccessCategory::Bk);
    }

    #[test]
    fn burst_lengths() {
        let phy = PhyParams::default();
        // 100 B frames: 20 + ceil(8*128/54) = 39 us data, 74 us exchange.
        let ex = phy.data_exchange(100);
        assert_eq!(phy.frame_airtime(FrameKind::Data, 100), 39);
        assert_eq!(ex, 74);
        let queue = [ex; 10];
        assert_eq!(burst_length(0, phy.sifs_us, &queue), 1);
        // three exchanges + two SIFS gaps = 242 us
        assert_eq!(burst_length(242, phy.sifs_us, &queue), 3);
        assert_eq!(burst_length(325, phy.sifs_us, &queue), 3);
        assert_eq!(burst_length(326, phy.sifs_us, &queue), 4);
        assert_eq!(burst_length(10_000, phy.sifs_us, &queue[..2]), 2);
    }
}
