//! `ehsn`: simulate scenarios and plan charge requests. Also checks scenario
//! files and summarizes metrics.
//!
//! Exit status 2 means an input is invalid. Exit status 3 means a valid input
//! could not be carried out, such as an infeasible plan or a failed run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehsn_core::energy::ChargeCurve;
use ehsn_core::planner::{build_graph, build_tunnel, plan_optimal, DemandSchedule, Destination, PlanError};
use ehsn_core::sim::{
    emit_metrics, load_scenario, run, ConfigError, Metrics, MetricsFormat, ScenarioConfig, SimError, Summary,
};

#[derive(Parser)]
#[command(name = "ehsn", version, about = "RF energy-harvesting sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and emit its metrics.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write `<name>-<seed>.rows` and `<name>-<seed>.summary` here instead
        /// of printing rows to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cheapest charge requests for a cumulative demand schedule.
    Plan {
        /// One cumulative joule value per line, starting at 0.
        demand: PathBuf,
        /// Battery capacity (J).
        #[arg(long)]
        capacity: f64,
        /// Grid energy step (J).
        #[arg(long)]
        step: f64,
        /// Fixed cost per request.
        #[arg(long, default_value_t = 0.0)]
        overhead: f64,
        /// Charge curve file; the bundled curve when omitted.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Required final grid level; the cheapest final level when omitted.
        #[arg(long)]
        destination: Option<usize>,
    },
    /// Check a scenario file and report every problem found.
    Validate { scenario: PathBuf },
    /// Summarize a rows metrics file.
    Report {
        metrics: PathBuf,
        /// Print aggregate figures instead of the series index.
        #[arg(long)]
        summary: bool,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Infeasible { .. } | PlanError::DestinationUnreachable { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

fn run_scenario(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let config = load_scenario(path)?;
    let metrics = run(&config, seed)?;
    let Some(dir) = out else {
        print!("{}", metrics.render_rows());
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let stem = format!("{}-{}", config.name, metrics.seed);
    for (ext, format) in [("rows", MetricsFormat::Rows), ("summary", MetricsFormat::Summary)] {
        let file = dir.join(format!("{stem}.{ext}"));
        emit_metrics(&metrics, format, &file).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn plan(
    demand: &Path,
    capacity: f64,
    step: f64,
    overhead: f64,
    curve: Option<&Path>,
    destination: Option<usize>,
) -> Result<(), Failure> {
    let demand = DemandSchedule::load(demand)?;
    let curve = match curve {
        Some(p) => ChargeCurve::load(p).map_err(|e| Failure::Invalid(e.to_string()))?,
        None => ChargeCurve::default(),
    };
    let tunnel = build_tunnel(&demand, capacity)?;
    let destination = destination.map_or(Destination::AnyFinal, Destination::Level);
    let graph = build_graph(&tunnel, step, overhead, &curve)?.with_destination(destination);
    print!("{}", plan_optimal(&graph)?.render());
    Ok(())
}

fn describe(config: &ScenarioConfig) -> String {
    use ehsn_core::sim::config::Topology;
    let population = match &config.topology {
        Topology::Tiers(t) => format!("{} animal(s), {:?} access", t.animal_count(), t.access),
        Topology::Explicit { nodes, flows } => format!("{} station(s), {} flow(s)", nodes.len(), flows.len()),
    };
    format!(
        "ok {}: {population}, {} slot(s) of {} s, {} source(s)",
        config.name,
        config.duration,
        config.slot_length,
        config.sources.len()
    )
}

fn report(path: &Path, summary: bool) -> Result<(), Failure> {
    let metrics = Metrics::load(path).map_err(|e| Failure::Invalid(e.to_string()))?;
    if summary {
        print!("{}", Summary::from_metrics(&metrics).render(&metrics));
        return Ok(());
    }
    let mut names: Vec<&str> = metrics.records.iter().map(|r| r.series.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let records: Vec<_> = metrics.series(name).collect();
        let last = records.iter().map(|r| r.slot).max().unwrap_or(0);
        println!("series={name} records={} last_slot={last}", records.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, out } => run_scenario(&scenario, seed, out.as_deref()),
        Command::Plan {
            demand,
            capacity,
            step,
            overhead,
            curve,
            destination,
        } => plan(&demand, capacity, step, overhead, curve.as_deref(), destination),
        Command::Validate { scenario } => load_scenario(&scenario).map(|c| println!("{}", describe(&c))).map_err(Failure::from),
        Command::Report { metrics, summary } => report(&metrics, summary),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
