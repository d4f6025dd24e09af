#![allow(dead_code)]

use edcasim::dcf::{ContentionParams, TxOutcome};
use edcasim::edca::{AccessCategory, EdcaParamSet};
use edcasim::kernel::Timestamp;
use edcasim::phy::{FrameKind, Node, PhyParams};
use edcasim::sim::{MacMode, SimSetup, Simulation, StationSetup};
use edcasim::traffic::{FlowMode, FlowSpec, TrafficClass};

/// Airtime worked out independently of the library: preamble plus the
/// bits at the given rate, rounded up to whole microseconds.
pub fn airtime(bytes: u64, rate_bps: u64) -> u64 {
    20 + (8 * bytes * 1_000_000).div_ceil(rate_bps)
}

pub fn data_air(payload: u64) -> u64 {
    airtime(28 + payload, 54_000_000)
}

pub const ACK_AIR: u64 = 25;
pub const RTS_AIR: u64 = 27;
pub const CTS_AIR: u64 = 25;
pub const SIFS: u64 = 10;
pub const SLOT: u64 = 9;
pub const DIFS: u64 = 28;

pub fn dcf_station(id: u32, rts_cts: bool) -> StationSetup {
    StationSetup {
        id,
        contenders: vec![ContentionParams::dcf(&PhyParams::default())],
        rts_cts,
        queue_capacity: 1000,
    }
}

pub fn edca_station(id: u32, set: &EdcaParamSet) -> StationSetup {
    let phy = PhyParams::default();
    StationSetup {
        id,
        contenders: AccessCategory::ALL
            .into_iter()
            .map(|ac| set.contention(ac, &phy))
            .collect(),
        rts_cts: false,
        queue_capacity: 1000,
    }
}

pub fn saturated(id: &str, station: u32, class: TrafficClass, size: u64, start: u64, stop: u64) -> FlowSpec {
    FlowSpec {
        flow_id: id.to_string(),
        station,
        traffic_class: class,
        mode: FlowMode::Saturated,
        packet_size_bytes: size,
        rate_bps: 0,
        start_at: Timestamp(start),
        stop_at: Timestamp(stop),
    }
}

pub fn cbr(id: &str, station: u32, class: TrafficClass, size: u64, rate: u64, stop: u64) -> FlowSpec {
    FlowSpec {
        flow_id: id.to_string(),
        station,
        traffic_class: class,
        mode: FlowMode::Cbr,
        packet_size_bytes: size,
        rate_bps: rate,
        start_at: Timestamp::ZERO,
        stop_at: Timestamp(stop),
    }
}

pub fn setup(mode: MacMode, stations: Vec<StationSetup>, flows: Vec<FlowSpec>, duration_us: u64) -> SimSetup {
    SimSetup {
        name: "test".into(),
        phy: PhyParams::default(),
        mac_mode: mode,
        stations,
        flows,
        changes: vec![],
        duration: Timestamp(duration_us),
        warmup: Timestamp::ZERO,
        seed: 7,
        rep: 0,
        diagnostics: true,
        trace: false,
    }
}

fn overlaps(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Asserts every trace-level invariant of a finished diagnostic run.
pub fn check_invariants(sim: &Simulation, setup: &SimSetup) {
    let d = sim.diagnostics().expect("diagnostics enabled");
    let phy = &setup.phy;
    let busy: Vec<(u64, u64)> = sim
        .medium()
        .busy_log()
        .expect("busy log")
        .iter()
        .map(|(a, b)| (a.as_micros(), b.as_micros()))
        .collect();

    // countdown segments: exact IFS, idle over the whole segment, whole slots
    for c in &d.countdowns {
        let st = setup.stations.iter().find(|s| s.id == c.station).unwrap();
        let ifs = st.contenders[c.queue].ifs_us;
        assert_eq!(c.ifs_us, ifs);
        if setup.mac_mode == MacMode::Dcf {
            assert_eq!(ifs, phy.difs_us);
        }
        if c.immediate {
            assert!(c.resume_at.as_micros() >= c.edge.as_micros() + ifs, "{c:?}");
            assert_eq!(c.remaining_at_resume, 0);
        } else {
            assert_eq!(c.resume_at.as_micros(), c.edge.as_micros() + ifs, "{c:?}");
        }
        let seg = (c.edge.as_micros(), c.end_at.as_micros());
        if seg.1 > seg.0 {
            assert!(
                !busy.iter().any(|&b| overlaps(b, seg)),
                "countdown over a busy medium: {c:?}"
            );
        }
        let elapsed = c.end_at.as_micros().saturating_sub(c.resume_at.as_micros()) / phy.slot_time_us;
        let expect = (elapsed as u32).min(c.remaining_at_resume);
        assert_eq!(c.slots_counted, expect, "{c:?}");
        if c.expired {
            assert_eq!(c.slots_counted, c.remaining_at_resume);
            assert_eq!(
                c.end_at.as_micros(),
                c.resume_at.as_micros() + c.remaining_at_resume as u64 * phy.slot_time_us
            );
        } else {
            assert!(c.slots_counted < c.remaining_at_resume || c.remaining_at_resume == 0);
        }
    }

    // collisions: overlapping frames are all corrupted, isolated ones never
    let tx = &d.transmissions;
    for (i, a) in tx.iter().enumerate() {
        let span = (a.start.as_micros(), a.end.as_micros());
        let clash = tx
            .iter()
            .enumerate()
            .any(|(j, b)| i != j && overlaps(span, (b.start.as_micros(), b.end.as_micros())));
        // frames still on the air at the end of the run never got a verdict
        if a.end <= setup.duration {
            assert_eq!(a.corrupted, clash, "{a:?}");
        }
        if let Node::Station(_) = a.sender {
            let own = tx.iter().enumerate().any(|(j, b)| {
                i != j && b.sender == a.sender && overlaps(span, (b.start.as_micros(), b.end.as_micros()))
            });
            assert!(!own, "station transmitting twice at once: {a:?}");
        }
    }

    // CW updates follow the ladder and reset on success or drop
    for w in &d.cw_changes {
        let st = setup.stations.iter().find(|s| s.id == w.station).unwrap();
        let p = &st.contenders[w.queue];
        match w.outcome {
            TxOutcome::Retry => {
                let next = ((w.old_cw + 1) * 2) - 1;
                assert!(w.new_cw >= next || w.new_cw == p.cw_max, "{w:?}");
                assert!(w.new_cw <= p.cw_max);
                assert!(w.new_cw >= w.old_cw);
            }
            TxOutcome::Delivered | TxOutcome::Dropped => assert_eq!(w.new_cw, p.cw_min),
        }
    }

    // virtual collisions always go to the highest priority
    for v in &d.virtual_collisions {
        assert_eq!(v.winner, *v.expiring.iter().min().unwrap());
        let lost = d
            .cw_changes
            .iter()
            .filter(|w| w.internal && w.at == v.at && w.station == v.station)
            .count();
        assert_eq!(lost, v.expiring.len() - 1);
    }

    // TXOP bursts stay inside their limit
    for b in &d.bursts {
        if b.frames > 1 {
            assert!(
                b.last_ack_end.as_micros() - b.first_data_start.as_micros() <= b.txop_limit_us,
                "{b:?}"
            );
        }
        if b.txop_limit_us == 0 {
            assert_eq!(b.frames, 1);
        }
    }

    // NAV is only ever set from decodable RTS/CTS
    for n in &d.nav_updates {
        let from = tx.iter().find(|t| {
            t.end == n.at && !t.corrupted && matches!(t.kind, FrameKind::Rts | FrameKind::Cts)
        });
        assert!(from.is_some(), "NAV without an RTS/CTS: {n:?}");
    }
    if setup.stations.iter().all(|s| !s.rts_cts) {
        assert!(d.nav_updates.is_empty());
    }
}
