//! Scenario configuration: TOML schema, validation and the built-in
//! experiments.
//!
//! A config file looks like this:
//!
//! ```toml
//! name = "two-stations"
//! mac_mode = "edca"      # or "dcf"
//! duration_s = 60
//! seed = 1
//! reps = 10
//!
//! [edca.vi]              # partial overrides of the default parameter set
//! txop_limit_us = 3008
//!
//! [[stations]]
//! id = 1
//! [[stations.flows]]
//! id = "sta1-voice"
//! class = "voice"
//! mode = "cbr"
//! packet_size_bytes = 160
//! rate_bps = 64000
//!
//! [[changes]]            # stations or flows that join mid-run
//! at_s = 30
//! [[changes.stations]]
//! id = 2
//! [[changes.stations.flows]]
//! id = "sta2-bk"
//! class = "background"
//! mode = "saturated"
//! packet_size_bytes = 1500
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::de::{DeTable, DeValue};

use crate::dcf::ContentionParams;
use crate::edca::{AccessCategory, AcParams, EdcaParamSet};
use crate::kernel::Timestamp;
use crate::phy::PhyParams;
use crate::sim::{MacMode, SimSetup, StationSetup};
use crate::traffic::{FlowMode, FlowSpec, TrafficClass};

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcfOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cw_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cw_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_limit: Option<u32>,
}

impl DcfOverrides {
    fn is_empty(&self) -> bool {
        *self == DcfOverrides::default()
    }

    fn apply(&self, p: &mut ContentionParams) {
        if let Some(v) = self.cw_min {
            p.cw_min = v;
        }
        if let Some(v) = self.cw_max {
            p.cw_max = v;
        }
        if let Some(v) = self.retry_limit {
            p.retry_limit = v;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwmin: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwmax: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aifsn: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txop_limit_us: Option<u64>,
}

impl AcOverrides {
    fn apply(&self, p: &mut AcParams) {
        if let Some(v) = self.cwmin {
            p.cwmin = v;
        }
        if let Some(v) = self.cwmax {
            p.cwmax = v;
        }
        if let Some(v) = self.aifsn {
            p.aifsn = v;
        }
        if let Some(v) = self.txop_limit_us {
            p.txop_limit_us = v;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdcaOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vo: Option<AcOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi: Option<AcOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub be: Option<AcOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bk: Option<AcOverrides>,
}

impl EdcaOverrides {
    fn is_empty(&self) -> bool {
        *self == EdcaOverrides::default()
    }

    pub fn get_mut(&mut self, ac: AccessCategory) -> &mut Option<AcOverrides> {
        match ac {
            AccessCategory::Vo => &mut self.vo,
            AccessCategory::Vi => &mut self.vi,
            AccessCategory::Be => &mut self.be,
            AccessCategory::Bk => &mut self.bk,
        }
    }

    pub fn apply(&self, set: &mut EdcaParamSet) {
        for ac in AccessCategory::ALL {
            let o = match ac {
                AccessCategory::Vo => &self.vo,
                AccessCategory::Vi => &self.vi,
                AccessCategory::Be => &self.be,
                AccessCategory::Bk => &self.bk,
            };
            if let Some(o) = o {
                o.apply(set.get_mut(ac));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub id: String,
    pub class: TrafficClass,
    pub mode: FlowMode,
    pub packet_size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rts_cts: Option<bool>,
    #[serde(default, skip_serializing_if = "DcfOverrides::is_empty")]
    pub dcf: DcfOverrides,
    #[serde(default, skip_serializing_if = "EdcaOverrides::is_empty")]
    pub edca: EdcaOverrides,
    #[serde(default)]
    pub flows: Vec<FlowConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeConfig {
    pub at_s: f64,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
}

fn default_reps() -> usize {
    10
}

fn default_capacity() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mac_mode: MacMode,
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub warmup_s: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub rts_cts: bool,
    #[serde(default = "default_capacity")]
    pub queue_capacity: usize,
    #[serde(default)]
    pub phy: PhyParams,
    #[serde(default, skip_serializing_if = "DcfOverrides::is_empty")]
    pub dcf: DcfOverrides,
    #[serde(default, skip_serializing_if = "EdcaOverrides::is_empty")]
    pub edca: EdcaOverrides,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
    #[serde(default)]
    pub changes: Vec<ChangeConfig>,
}

/// A rejected config, with the 1-based line of the offending field when it
/// could be located.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Seg {
    Key(&'static str),
    Idx(usize),
}

#[derive(Debug)]
struct Invalid {
    path: Vec<Seg>,
    message: String,
}

fn invalid(path: Vec<Seg>, message: impl Into<String>) -> Invalid {
    Invalid {
        path,
        message: message.into(),
    }
}

fn path_string(path: &[Seg]) -> String {
    let mut s = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                if !s.is_empty() {
                    s.push('.');
                }
                s.push_str(k);
            }
            Seg::Idx(i) => s.push_str(&format!("[{i}]")),
        }
    }
    s
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Byte offset of the deepest element of `path` present in the document.
fn locate(text: &str, path: &[Seg]) -> Option<usize> {
    let doc = DeTable::parse(text).ok()?;
    let mut table: &DeTable = doc.get_ref();
    let mut value: Option<&toml::Spanned<DeValue>> = None;
    let mut best = None;
    for seg in path {
        match seg {
            Seg::Key(k) => {
                let (key, v) = table.iter().find(|(key, _)| key.get_ref().as_ref() == *k)?;
                best = Some(key.span().start);
                value = Some(v);
            }
            Seg::Idx(i) => match value.map(|v| v.get_ref()) {
                Some(DeValue::Array(arr)) => {
                    let item = arr.get(*i)?;
                    best = Some(item.span().start);
                    value = Some(item);
                }
                _ => return best,
            },
        }
        if let Some(DeValue::Table(t)) = value.map(|v| v.get_ref()) {
            table = t;
        }
    }
    best
}

fn secs_to_us(s: f64) -> Timestamp {
    Timestamp((s * 1e6).round() as u64)
}

impl ScenarioConfig {
    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            field: String::new(),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|inv| ConfigError {
            line: locate(text, &inv.path).map(|o| line_of(text, o)),
            field: path_string(&inv.path),
            message: inv.message,
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validation without source positions, for configs built in code.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.validate().map_err(|inv| ConfigError {
            line: None,
            field: path_string(&inv.path),
            message: inv.message,
        })
    }

    fn validate(&self) -> Result<(), Invalid> {
        use Seg::{Idx, Key};
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(vec![Key("duration_s")], "must be greater than 0"));
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(invalid(vec![Key("warmup_s")], "must lie in [0, duration_s)"));
        }
        if self.reps < 1 {
            return Err(invalid(vec![Key("reps")], "must be at least 1"));
        }
        if self.queue_capacity < 1 {
            return Err(invalid(vec![Key("queue_capacity")], "must be at least 1"));
        }
        self.phy
            .validate()
            .map_err(|e| invalid(vec![Key("phy")], e.to_string()))?;
        check_dcf(&self.dcf, &self.phy, vec![Key("dcf")])?;
        check_edca(&self.edca, &EdcaParamSet::default(), vec![Key("edca")])?;

        let mut station_ids = BTreeSet::new();
        let mut flow_ids = BTreeSet::new();
        for (i, st) in self.stations.iter().enumerate() {
            let path = vec![Key("stations"), Idx(i)];
            if !station_ids.insert(st.id) {
                return Err(invalid(
                    [path, vec![Key("id")]].concat(),
                    format!("duplicate station id {}", st.id),
                ));
            }
            self.check_station(st, path, 0.0, &mut flow_ids)?;
        }
        let mut last = None;
        for (c, ch) in self.changes.iter().enumerate() {
            let path = vec![Key("changes"), Idx(c)];
            let at_path = [path.clone(), vec![Key("at_s")]].concat();
            if !(ch.at_s.is_finite() && ch.at_s >= 0.0 && ch.at_s < self.duration_s) {
                return Err(invalid(at_path, "must lie in [0, duration_s)"));
            }
            if last.is_some_and(|l| ch.at_s <= l) {
                return Err(invalid(at_path, "change times must be strictly increasing"));
            }
            last = Some(ch.at_s);
            for (i, st) in ch.stations.iter().enumerate() {
                let spath = [path.clone(), vec![Key("stations"), Idx(i)]].concat();
                if station_ids.contains(&st.id) {
                    // an existing station only gains flows
                    if st.rts_cts.is_some() || !st.dcf.is_empty() || !st.edca.is_empty() {
                        return Err(invalid(
                            [spath, vec![Key("id")]].concat(),
                            format!("station {} already exists; a change may only add flows to it", st.id),
                        ));
                    }
                } else {
                    station_ids.insert(st.id);
                }
                self.check_station(st, spath, ch.at_s, &mut flow_ids)?;
            }
        }
        Ok(())
    }

    fn check_station(
        &self,
        st: &StationConfig,
        path: Vec<Seg>,
        joined_s: f64,
        flow_ids: &mut BTreeSet<String>,
    ) -> Result<(), Invalid> {
        use Seg::{Idx, Key};
        let at = |p: &[Seg], more: &[Seg]| [p.to_vec(), more.to_vec()].concat();
        let mut dcf = ContentionParams::dcf(&self.phy);
        self.dcf.apply(&mut dcf);
        check_dcf(&st.dcf, &self.phy, at(&path, &[Key("dcf")]))?;
        let mut base = EdcaParamSet::default();
        self.edca.apply(&mut base);
        check_edca(&st.edca, &base, at(&path, &[Key("edca")]))?;

        for (j, f) in st.flows.iter().enumerate() {
            let fp = at(&path, &[Key("flows"), Idx(j)]);
            if f.id.is_empty() {
                return Err(invalid(at(&fp, &[Key("id")]), "must not be empty"));
            }
            if !flow_ids.insert(f.id.clone()) {
                return Err(invalid(at(&fp, &[Key("id")]), format!("duplicate flow id `{}`", f.id)));
            }
            if f.packet_size_bytes == 0 {
                return Err(invalid(at(&fp, &[Key("packet_size_bytes")]), "must be greater than 0"));
            }
            match (f.mode, f.rate_bps) {
                (FlowMode::Cbr, None) => {
                    return Err(invalid(fp, "cbr flows need `rate_bps`"));
                }
                (FlowMode::Cbr, Some(0)) => {
                    return Err(invalid(at(&fp, &[Key("rate_bps")]), "must be greater than 0"));
                }
                (FlowMode::Saturated, Some(_)) => {
                    return Err(invalid(
                        at(&fp, &[Key("rate_bps")]),
                        "saturated flows take no rate",
                    ));
                }
                _ => {}
            }
            let start = f.start_s.unwrap_or(joined_s);
            let stop = f.stop_s.unwrap_or(self.duration_s);
            if !(start.is_finite() && start >= joined_s) {
                return Err(invalid(
                    at(&fp, &[Key("start_s")]),
                    "must not precede the moment the flow is added",
                ));
            }
            if !(stop.is_finite() && stop > start) {
                return Err(invalid(at(&fp, &[Key("stop_s")]), "must be greater than start_s"));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> Timestamp {
        secs_to_us(self.duration_s)
    }

    /// All stations, initial ones first, in order of appearance.
    pub fn station_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = Vec::new();
        let all = self
            .stations
            .iter()
            .chain(self.changes.iter().flat_map(|c| c.stations.iter()));
        for st in all {
            if !ids.contains(&st.id) {
                ids.push(st.id);
            }
        }
        ids
    }

    fn station_config(&self, id: u32) -> Option<&StationConfig> {
        self.stations
            .iter()
            .chain(self.changes.iter().flat_map(|c| c.stations.iter()))
            .find(|s| s.id == id)
    }

    /// Station-level EDCA overrides, creating the station entry's table when
    /// absent. Returns `None` for an unknown station.
    pub fn station_edca_mut(&mut self, id: u32) -> Option<&mut EdcaOverrides> {
        self.stations
            .iter_mut()
            .chain(self.changes.iter_mut().flat_map(|c| c.stations.iter_mut()))
            .find(|s| s.id == id)
            .map(|s| &mut s.edca)
    }

    /// Effective EDCA parameters of one station.
    pub fn edca_params(&self, station: u32) -> EdcaParamSet {
        let mut set = EdcaParamSet::default();
        self.edca.apply(&mut set);
        if let Some(st) = self.station_config(station) {
            st.edca.apply(&mut set);
        }
        set
    }

    fn contenders(&self, st: &StationConfig) -> Vec<ContentionParams> {
        let mut dcf = ContentionParams::dcf(&self.phy);
        self.dcf.apply(&mut dcf);
        st.dcf.apply(&mut dcf);
        match self.mac_mode {
            MacMode::Dcf => vec![dcf],
            MacMode::Edca => {
                let set = self.edca_params(st.id);
                AccessCategory::ALL
                    .into_iter()
                    .map(|ac| {
                        let mut p = set.contention(ac, &self.phy);
                        p.retry_limit = dcf.retry_limit;
                        p
                    })
                    .collect()
            }
        }
    }

    /// Builds the simulation input for one replication.
    pub fn sim_setup(&self, seed: u64, rep: usize) -> SimSetup {
        let duration = self.duration();
        let mut stations = Vec::new();
        let mut flows = Vec::new();
        let mut add = |st: &StationConfig, joined: f64, stations: &mut Vec<StationSetup>| {
            if !stations.iter().any(|s: &StationSetup| s.id == st.id) {
                stations.push(StationSetup {
                    id: st.id,
                    contenders: self.contenders(st),
                    rts_cts: st.rts_cts.unwrap_or(self.rts_cts),
                    queue_capacity: self.queue_capacity,
                });
            }
            for f in &st.flows {
                flows.push(FlowSpec {
                    flow_id: f.id.clone(),
                    station: st.id,
                    traffic_class: f.class,
                    mode: f.mode,
                    packet_size_bytes: f.packet_size_bytes,
                    rate_bps: f.rate_bps.unwrap_or(0),
                    start_at: secs_to_us(f.start_s.unwrap_or(joined)),
                    stop_at: f.stop_s.map(secs_to_us).unwrap_or(duration).min(duration),
                });
            }
        };
        for st in &self.stations {
            add(st, 0.0, &mut stations);
        }
        for ch in &self.changes {
            for st in &ch.stations {
                add(st, ch.at_s, &mut stations);
            }
        }
        SimSetup {
            name: self.name.clone(),
            phy: self.phy.clone(),
            mac_mode: self.mac_mode,
            stations,
            flows,
            changes: self.changes.iter().map(|c| secs_to_us(c.at_s)).collect(),
            duration,
            warmup: secs_to_us(self.warmup_s),
            seed,
            rep,
            diagnostics: false,
            trace: false,
        }
    }
}

fn check_dcf(o: &DcfOverrides, phy: &PhyParams, path: Vec<Seg>) -> Result<(), Invalid> {
    let mut p = ContentionParams::dcf(phy);
    o.apply(&mut p);
    if p.cw_min < 1 {
        return Err(invalid([path, vec![Seg::Key("cw_min")]].concat(), "must be at least 1"));
    }
    if p.cw_min > p.cw_max {
        return Err(invalid(
            [path, vec![Seg::Key("cw_max")]].concat(),
            format!("cw_min ({}) exceeds cw_max ({})", p.cw_min, p.cw_max),
        ));
    }
    Ok(())
}

fn check_edca(o: &EdcaOverrides, base: &EdcaParamSet, path: Vec<Seg>) -> Result<(), Invalid> {
    let mut set = *base;
    o.apply(&mut set);
    for ac in AccessCategory::ALL {
        let key = match ac {
            AccessCategory::Vo => "vo",
            AccessCategory::Vi => "vi",
            AccessCategory::Be => "be",
            AccessCategory::Bk => "bk",
        };
        let p = set.get(ac);
        if p.aifsn < 1 {
            return Err(invalid(
                [path.clone(), vec![Seg::Key(key), Seg::Key("aifsn")]].concat(),
                "aifsn must be at least 1",
            ));
        }
        if p.cwmin > p.cwmax {
            return Err(invalid(
                [path.clone(), vec![Seg::Key(key), Seg::Key("cwmax")]].concat(),
                format!("cwmin ({}) exceeds cwmax ({})", p.cwmin, p.cwmax),
            ));
        }
    }
    Ok(())
}

// ---- built-in scenarios -----------------------------------------------

pub const BUILTIN_NAMES: [&str; 5] = [
    "dcf-baseline",
    "edca-default",
    "saturation",
    "txop-sweep",
    "aifs-sweep",
];

pub fn describe_builtin(name: &str) -> Option<&'static str> {
    Some(match name {
        "dcf-baseline" => "n stations (default 6), each with voice, video and best-effort CBR flows, DCF, 60 s",
        "edca-default" => "same traffic as dcf-baseline under EDCA default parameters",
        "saturation" => "voice and video CBR stations plus saturated BK stations joining at 60 s and 90 s, 150 s",
        "txop-sweep" => "2 saturated hosts (video vs BK) under EDCA, 60 s; sweep the video TXOP limit",
        "aifs-sweep" => "2 saturated hosts (video vs BK) under EDCA, 60 s; sweep the video AIFSN",
        _ => return None,
    })
}

fn cbr(id: String, class: TrafficClass, size: u64, rate: u64) -> FlowConfig {
    FlowConfig {
        id,
        class,
        mode: FlowMode::Cbr,
        packet_size_bytes: size,
        rate_bps: Some(rate),
        start_s: None,
        stop_s: None,
    }
}

fn saturated(id: String, class: TrafficClass, size: u64) -> FlowConfig {
    FlowConfig {
        id,
        class,
        mode: FlowMode::Saturated,
        packet_size_bytes: size,
        rate_bps: None,
        start_s: None,
        stop_s: None,
    }
}

fn station(id: u32, flows: Vec<FlowConfig>) -> StationConfig {
    StationConfig {
        id,
        rts_cts: None,
        dcf: DcfOverrides::default(),
        edca: EdcaOverrides::default(),
        flows,
    }
}

pub const VOICE_BYTES: u64 = 160;
pub const VOICE_BPS: u64 = 64_000;
pub const VIDEO_BYTES: u64 = 1280;
pub const VIDEO_BPS: u64 = 640_000;
pub const BE_BYTES: u64 = 1500;
pub const BE_BPS: u64 = 960_000;
pub const BK_BYTES: u64 = 1500;

fn mixed_station(id: u32) -> StationConfig {
    station(
        id,
        vec![
            cbr(format!("sta{id}-voice"), TrafficClass::Voice, VOICE_BYTES, VOICE_BPS),
            cbr(format!("sta{id}-video"), TrafficClass::Video, VIDEO_BYTES, VIDEO_BPS),
            cbr(format!("sta{id}-be"), TrafficClass::BestEffort, BE_BYTES, BE_BPS),
        ],
    )
}

fn base(name: &str, mac_mode: MacMode, duration_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        mac_mode,
        duration_s,
        seed: default_seed(),
        reps: default_reps(),
        warmup_s: 0.0,
        rts_cts: false,
        queue_capacity: default_capacity(),
        phy: PhyParams::default(),
        dcf: DcfOverrides::default(),
        edca: EdcaOverrides::default(),
        stations: Vec::new(),
        changes: Vec::new(),
    }
}

/// A built-in scenario. `stations` sets the station count of the
/// station-count experiments and is ignored by the others.
pub fn builtin(name: &str, stations: Option<usize>) -> Option<ScenarioConfig> {
    let cfg = match name {
        "dcf-baseline" | "edca-default" => {
            let mode = if name == "dcf-baseline" { MacMode::Dcf } else { MacMode::Edca };
            let mut c = base(name, mode, 60.0);
            c.stations = (1..=stations.unwrap_or(6) as u32).map(mixed_station).collect();
            c
        }
        "saturation" => {
            let mut c = base(name, MacMode::Edca, 150.0);
            c.stations = vec![
                station(1, vec![cbr("sta1-voice".into(), TrafficClass::Voice, VOICE_BYTES, VOICE_BPS)]),
                station(2, vec![cbr("sta2-video".into(), TrafficClass::Video, VIDEO_BYTES, VIDEO_BPS)]),
                station(3, vec![saturated("sta3-bk".into(), TrafficClass::Background, BK_BYTES)]),
            ];
            let bk = |id: u32| station(id, vec![saturated(format!("sta{id}-bk"), TrafficClass::Background, BK_BYTES)]);
            c.changes = vec![
                ChangeConfig {
                    at_s: 60.0,
                    stations: vec![bk(4)],
                },
                ChangeConfig {
                    at_s: 90.0,
                    stations: vec![bk(5), bk(6)],
                },
            ];
            c
        }
        "txop-sweep" | "aifs-sweep" => {
            let mut c = base(name, MacMode::Edca, 60.0);
            c.stations = vec![
                station(1, vec![saturated("sta1-video".into(), TrafficClass::Video, VIDEO_BYTES)]),
                station(2, vec![saturated("sta2-bk".into(), TrafficClass::Background, BK_BYTES)]),
            ];
            c
        }
        _ => return None,
    };
    Some(cfg)
}

// ---- sweeps -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    TxopLimitUs,
    Aifsn,
    Cwmin,
    Cwmax,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::TxopLimitUs => "txop_limit_us",
            SweepParam::Aifsn => "aifsn",
            SweepParam::Cwmin => "cwmin",
            SweepParam::Cwmax => "cwmax",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "txop_limit_us" | "txop" => Ok(SweepParam::TxopLimitUs),
            "aifsn" => Ok(SweepParam::Aifsn),
            "cwmin" => Ok(SweepParam::Cwmin),
            "cwmax" => Ok(SweepParam::Cwmax),
            _ => Err(format!(
                "unknown sweep parameter `{s}` (expected txop_limit_us, aifsn, cwmin or cwmax)"
            )),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub param: SweepParam,
    pub station: u32,
    pub ac: AccessCategory,
    pub values: Vec<u64>,
}

/// Parses a `station:ac` target such as `1:vi`.
pub fn parse_target(s: &str) -> Result<(u32, AccessCategory), String> {
    let (st, ac) = s
        .split_once(':')
        .ok_or_else(|| format!("target `{s}` is not of the form station:ac"))?;
    let st = st
        .trim()
        .parse::<u32>()
        .map_err(|_| format!("bad station id in target `{s}`"))?;
    let ac = ac.trim().parse::<AccessCategory>()?;
    Ok((st, ac))
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &str, message: String| ConfigError {
            line: None,
            field: field.to_string(),
            message,
        };
        if self.values.is_empty() {
            return Err(err("values", "must not be empty".into()));
        }
        if self.base.mac_mode != MacMode::Edca {
            return Err(err("mac_mode", "sweeps apply to EDCA scenarios".into()));
        }
        if !self.base.station_ids().contains(&self.station) {
            return Err(err("target", format!("unknown station {}", self.station)));
        }
        for &v in &self.values {
            self.apply(v)?;
        }
        Ok(())
    }

    /// The base config with the swept parameter set to `value`.
    pub fn apply(&self, value: u64) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = self.base.clone();
        let ac = self.ac;
        let o = cfg
            .station_edca_mut(self.station)
            .ok_or_else(|| ConfigError {
                line: None,
                field: "target".into(),
                message: format!("unknown station {}", self.station),
            })?
            .get_mut(ac)
            .get_or_insert_with(AcOverrides::default);
        let narrow = |v: u64| {
            u32::try_from(v).map_err(|_| ConfigError {
                line: None,
                field: "values".into(),
                message: format!("{v} is out of range"),
            })
        };
        match self.param {
            SweepParam::TxopLimitUs => o.txop_limit_us = Some(value),
            SweepParam::Aifsn => o.aifsn = Some(narrow(value)?),
            SweepParam::Cwmin => o.cwmin = Some(narrow(value)?),
            SweepParam::Cwmax => o.cwmax = Some(narrow(value)?),
        }
        cfg.check()?;
        Ok(cfg)
    }
}
