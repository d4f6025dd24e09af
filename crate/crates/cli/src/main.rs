use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edcasim::harness::{self, Format};
use edcasim::scenario::{self, ScenarioConfig, SweepParam, SweepSpec};
use edcasim::sim::MacMode;
use edcasim::traffic::TrafficClass;

#[derive(Parser)]
#[command(name = "edcasim", version, about = "802.11 DCF/EDCA channel access simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mac {
    Dcf,
    Edca,
}

#[derive(clap::Args)]
struct Common {
    /// Base seed; replication i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Station count for the station-count experiments (built-ins only).
    #[arg(long)]
    stations: Option<usize>,
    /// Exclude packets created before this many seconds.
    #[arg(long)]
    warmup: Option<f64>,
    /// Override the scenario's MAC.
    #[arg(long, value_enum)]
    mac: Option<Mac>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (built-in name or config file path).
    Run {
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        common: Common,
        /// Also write the per-event trace of the first replication.
        #[arg(long)]
        trace: bool,
    },
    /// Run one replication set per value of an EDCA parameter.
    Sweep {
        #[arg(long)]
        base: String,
        /// txop_limit_us, aifsn, cwmin or cwmax
        #[arg(long)]
        param: SweepParam,
        /// station:ac, e.g. 1:vi
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print a built-in scenario as a config file.
    ShowScenario {
        name: String,
        #[arg(long)]
        stations: Option<usize>,
    },
}

enum Failure {
    Config(String),
    Io(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Config(m) => {
                eprintln!("config error: {m}");
                ExitCode::from(2)
            }
            Failure::Io(m) => {
                eprintln!("i/o error: {m}");
                ExitCode::from(3)
            }
        }
    }
}

fn load(name: &str, stations: Option<usize>) -> Result<ScenarioConfig, Failure> {
    if let Some(cfg) = scenario::builtin(name, stations) {
        return Ok(cfg);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(Failure::Config(format!(
            "`{name}` is neither a built-in scenario nor a file (see `edcasim list-scenarios`)"
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if stations.is_some() {
        return Err(Failure::Config("--stations only applies to built-in scenarios".into()));
    }
    Ok(cfg)
}

fn apply_common(cfg: &mut ScenarioConfig, c: &Common) -> Result<(), Failure> {
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.reps {
        cfg.reps = v;
    }
    if let Some(v) = c.duration {
        cfg.duration_s = v;
        cfg.changes.retain(|ch| ch.at_s < v);
    }
    if let Some(v) = c.warmup {
        cfg.warmup_s = v;
    }
    if let Some(m) = c.mac {
        cfg.mac_mode = match m {
            Mac::Dcf => MacMode::Dcf,
            Mac::Edca => MacMode::Edca,
        };
    }
    cfg.check().map_err(|e| Failure::Config(e.to_string()))
}

fn format_of(c: &Common) -> Format {
    match c.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn print_summary(agg: &harness::Aggregate) {
    println!("{:<12} {:>6} {:>10} {:>8} {:>10} {:>8}", "class", "window", "mean_ms", "cv", "delivered", "dropped");
    for c in &agg.classes {
        let mean = c.mean_delay_us.map(|v| format!("{:.3}", v / 1000.0)).unwrap_or_else(|| "-".into());
        let cv = c.cv.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let window = if c.window < 0 { "all".to_string() } else { c.window.to_string() };
        println!(
            "{:<12} {:>6} {:>10} {:>8} {:>10} {:>8}",
            c.class.as_str(),
            window,
            mean,
            cv,
            c.delivered,
            c.dropped
        );
    }
}

fn run(scenario: &str, common: &Common, trace: bool) -> Result<(), Failure> {
    let mut cfg = load(scenario, common.stations)?;
    apply_common(&mut cfg, common)?;
    let reps = harness::run_replications(&cfg);
    let stem = cfg.name.clone();
    let written = harness::write_replications(&common.out, &stem, &reps, format_of(common))
        .map_err(io_err(&common.out))?;
    if trace {
        let (_, lines) = harness::run_traced(&cfg, cfg.seed);
        let path = common.out.join(format!("{stem}-trace.csv"));
        harness::write_trace(&path, &lines).map_err(io_err(&path))?;
        eprintln!("wrote {}", path.display());
    }
    println!("{} ({}, {} reps, {} s)", cfg.name, cfg.mac_mode, cfg.reps, cfg.duration_s);
    print_summary(&reps.aggregate);
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn sweep(base: &str, param: SweepParam, target: &str, values: &[u64], common: &Common) -> Result<(), Failure> {
    let mut cfg = load(base, common.stations)?;
    apply_common(&mut cfg, common)?;
    let (station, ac) = scenario::parse_target(target).map_err(Failure::Config)?;
    let spec = SweepSpec {
        base: cfg,
        param,
        station,
        ac,
        values: values.to_vec(),
    };
    let rows = harness::run_sweep(&spec).map_err(|e| Failure::Config(e.to_string()))?;
    std::fs::create_dir_all(&common.out).map_err(io_err(&common.out))?;
    let stem = format!("{}-sweep-{}", spec.base.name, param);
    let path = match format_of(common) {
        Format::Csv => {
            let p = common.out.join(format!("{stem}.csv"));
            std::fs::write(&p, harness::sweep_csv(&rows)).map_err(io_err(&p))?;
            p
        }
        Format::Json => {
            let p = common.out.join(format!("{stem}.json"));
            std::fs::write(&p, harness::to_json(&rows)).map_err(io_err(&p))?;
            p
        }
    };
    println!("{param} on station {station} {ac}");
    print!("{:>10}", "value");
    for class in TrafficClass::ALL {
        print!(" {:>12}", class.as_str());
    }
    println!();
    for row in &rows {
        print!("{:>10}", row.value);
        for class in TrafficClass::ALL {
            let v = row
                .aggregate
                .mean_us(class)
                .map(|v| format!("{:.3}", v / 1000.0))
                .unwrap_or_else(|| "-".into());
            print!(" {v:>12}");
        }
        println!();
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            common,
            trace,
        } => run(&scenario, &common, trace),
        Command::Sweep {
            base,
            param,
            target,
            values,
            common,
        } => sweep(&base, param, &target, &values, &common),
        Command::ListScenarios => {
            for name in scenario::BUILTIN_NAMES {
                println!("{name:<14} {}", scenario::describe_builtin(name).unwrap_or(""));
            }
            Ok(())
        }
        Command::ShowScenario { name, stations } => match scenario::builtin(&name, stations) {
            Some(cfg) => {
                print!("{}", cfg.to_toml());
                Ok(())
            }
            None => Err(Failure::Config(format!("no built-in scenario `{name}`"))),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
