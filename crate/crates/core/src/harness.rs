//! Running scenarios: single runs, replications, parameter sweeps, and the
//! CSV/JSON emitters.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{DelayStats, RunReport};
use crate::scenario::{ConfigError, ScenarioConfig, SweepParam, SweepSpec};
use crate::sim::{ChannelStats, Simulation, TraceLine};
use crate::traffic::TrafficClass;

/// One finished replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: RunReport,
    pub channel: ChannelStats,
}

pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> RunReport {
    run_rep(cfg, seed, 0).report
}

fn run_rep(cfg: &ScenarioConfig, seed: u64, rep: usize) -> RunOutput {
    let mut sim = Simulation::new(cfg.sim_setup(seed, rep));
    sim.run();
    RunOutput {
        report: sim.report(),
        channel: sim.stats(),
    }
}

/// Runs one replication keeping the per-event trace.
pub fn run_traced(cfg: &ScenarioConfig, seed: u64) -> (RunReport, Vec<TraceLine>) {
    let mut setup = cfg.sim_setup(seed, 0);
    setup.trace = true;
    let mut sim = Simulation::new(setup);
    sim.run();
    let trace = sim.trace().map(|t| t.to_vec()).unwrap_or_default();
    (sim.report(), trace)
}

/// Per-class statistics across replications for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub window: i64,
    pub class: TrafficClass,
    /// Replications in which the class delivered at least one frame.
    pub reps: usize,
    pub mean_delay_us: Option<f64>,
    /// Coefficient of variation of the per-rep means (sample standard
    /// deviation over mean); absent with fewer than two reps.
    pub cv: Option<f64>,
    pub min_rep_mean_us: Option<f64>,
    pub max_rep_mean_us: Option<f64>,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub mean_throughput_bps: f64,
}

impl ClassAggregate {
    pub fn drop_rate(&self) -> f64 {
        if self.created == 0 {
            0.0
        } else {
            self.dropped as f64 / self.created as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub mac_mode: String,
    pub reps: usize,
    pub classes: Vec<ClassAggregate>,
}

impl Aggregate {
    pub fn get(&self, window: i64, class: TrafficClass) -> Option<&ClassAggregate> {
        self.classes
            .iter()
            .find(|c| c.window == window && c.class == class)
    }

    /// Mean of per-rep means over the whole run.
    pub fn mean_us(&self, class: TrafficClass) -> Option<f64> {
        self.get(-1, class).and_then(|c| c.mean_delay_us)
    }
}

pub fn aggregate(reports: &[RunReport]) -> Aggregate {
    let first = reports.first().expect("aggregate of no reports");
    let mut classes = Vec::new();
    let windows: Vec<i64> = first
        .windows
        .iter()
        .map(|w| w.index)
        .chain(std::iter::once(first.total.index))
        .collect();
    for window in windows {
        for class in TrafficClass::ALL {
            let stats: Vec<_> = reports
                .iter()
                .filter_map(|r| {
                    let w = if window < 0 {
                        &r.total
                    } else {
                        r.windows.iter().find(|w| w.index == window)?
                    };
                    w.class(class)
                })
                .collect();
            if stats.is_empty() {
                continue;
            }
            let means: Vec<f64> = stats.iter().filter_map(|c| c.mean_delay_us()).collect();
            let n = means.len();
            let mean = (n > 0).then(|| means.iter().sum::<f64>() / n as f64);
            let cv = match mean {
                Some(m) if n >= 2 && m > 0.0 => {
                    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                    Some(var.sqrt() / m)
                }
                _ => None,
            };
            classes.push(ClassAggregate {
                window,
                class,
                reps: n,
                mean_delay_us: mean,
                cv,
                min_rep_mean_us: means.iter().copied().reduce(f64::min),
                max_rep_mean_us: means.iter().copied().reduce(f64::max),
                created: stats.iter().map(|c| c.created).sum(),
                delivered: stats.iter().map(|c| c.delivered).sum(),
                dropped: stats.iter().map(|c| c.dropped).sum(),
                mean_throughput_bps: stats.iter().map(|c| c.throughput_bps).sum::<f64>()
                    / stats.len() as f64,
            });
        }
    }
    Aggregate {
        scenario: first.scenario.clone(),
        mac_mode: first.mac_mode.clone(),
        reps: reports.len(),
        classes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replications {
    pub runs: Vec<RunOutput>,
    pub aggregate: Aggregate,
}

impl Replications {
    pub fn reports(&self) -> Vec<RunReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }
}

/// Runs `cfg.reps` replications with seeds `cfg.seed + i`, spread over the
/// available cores. Output is ordered by rep index.
pub fn run_replications(cfg: &ScenarioConfig) -> Replications {
    let reps = cfg.reps.max(1);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(reps);
    let mut slots: Vec<Option<RunOutput>> = vec![None; reps];
    if workers <= 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run_rep(cfg, cfg.seed.wrapping_add(i as u64), i));
        }
    } else {
        std::thread::scope(|scope| {
            let chunks: Vec<_> = slots.chunks_mut(reps.div_ceil(workers)).collect();
            let mut offset = 0;
            for chunk in chunks {
                let start = offset;
                offset += chunk.len();
                scope.spawn(move || {
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        let i = start + k;
                        *slot = Some(run_rep(cfg, cfg.seed.wrapping_add(i as u64), i));
                    }
                });
            }
        });
    }
    let runs: Vec<RunOutput> = slots.into_iter().map(|s| s.expect("rep ran")).collect();
    let reports: Vec<RunReport> = runs.iter().map(|r| r.report.clone()).collect();
    Replications {
        aggregate: aggregate(&reports),
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: u64,
    pub aggregate: Aggregate,
    pub runs: Vec<RunOutput>,
}

/// One replication set per value, every other parameter held fixed and the
/// same seeds used for every row.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ConfigError> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|&value| {
            let cfg = spec.apply(value)?;
            let r = run_replications(&cfg);
            Ok(SweepRow {
                param: spec.param,
                value,
                aggregate: r.aggregate,
                runs: r.runs,
            })
        })
        .collect()
}

// ---- emitters ---------------------------------------------------------

pub const CSV_HEADER: &str = "scenario,rep,seed,n_stations,window,flow_id,class,delivered,dropped,mean_delay_ms,p50_ms,p95_ms,max_ms,throughput_bps";

fn ms(us: f64) -> String {
    format!("{:.2}", us / 1000.0)
}

fn delay_cells(d: Option<&DelayStats>) -> [String; 4] {
    match d {
        Some(d) => [
            ms(d.mean_us),
            ms(d.p50_us as f64),
            ms(d.p95_us as f64),
            ms(d.max_us as f64),
        ],
        None => Default::default(),
    }
}

/// Per-flow rows, one per statistics window.
pub fn to_csv(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for w in &r.windows {
            for f in &w.flows {
                let [mean, p50, p95, max] = delay_cells(f.delay.as_ref());
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1}",
                    r.scenario,
                    r.rep,
                    r.seed,
                    r.n_stations,
                    w.index,
                    f.flow_id,
                    f.class,
                    f.delivered,
                    f.dropped,
                    mean,
                    p50,
                    p95,
                    max,
                    f.throughput_bps
                )
                .expect("write to string");
            }
        }
    }
    out
}

pub const AGGREGATE_HEADER: &str =
    "scenario,window,class,reps,mean_delay_ms,cv,min_rep_mean_ms,max_rep_mean_ms,delivered,dropped,throughput_bps";

pub fn aggregate_csv(agg: &Aggregate) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for c in &agg.classes {
        let opt_ms = |v: Option<f64>| v.map(ms).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.1}",
            agg.scenario,
            c.window,
            c.class,
            c.reps,
            opt_ms(c.mean_delay_us),
            c.cv.map(|v| format!("{v:.4}")).unwrap_or_default(),
            opt_ms(c.min_rep_mean_us),
            opt_ms(c.max_rep_mean_us),
            c.delivered,
            c.dropped,
            c.mean_throughput_bps
        )
        .expect("write to string");
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,class,reps,mean_delay_ms,cv,delivered,dropped\n");
    for row in rows {
        for c in row.aggregate.classes.iter().filter(|c| c.window == -1) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.param,
                row.value,
                c.class,
                c.reps,
                c.mean_delay_us.map(ms).unwrap_or_default(),
                c.cv.map(|v| format!("{v:.4}")).unwrap_or_default(),
                c.delivered,
                c.dropped
            )
            .expect("write to string");
        }
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Writes `<stem>.csv` + `<stem>-aggregate.csv`, or `<stem>.json`, into
/// `dir`. Returns the paths written.
pub fn write_replications(dir: &Path, stem: &str, reps: &Replications, format: Format) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            let p = dir.join(format!("{stem}.csv"));
            fs::write(&p, to_csv(&reps.reports()))?;
            written.push(p);
            let p = dir.join(format!("{stem}-aggregate.csv"));
            fs::write(&p, aggregate_csv(&reps.aggregate))?;
            written.push(p);
        }
        Format::Json => {
            let p = dir.join(format!("{stem}.json"));
            fs::write(&p, to_json(reps))?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn write_trace(path: &Path, trace: &[TraceLine]) -> io::Result<()> {
    let mut out = String::from("time_us,seq,target,kind\n");
    for line in trace {
        writeln!(out, "{line}").expect("write to string");
    }
    fs::write(path, out)
}
