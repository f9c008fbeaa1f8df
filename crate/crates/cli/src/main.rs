//! Command-line driver: capacity sweeps, the power ladder and slot traces.
//!
//! Exit status: 0 on success, 2 on configuration errors, 1 on I/O errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relaycache::experiment::{
    sidecar_path, sweep_and_emit, ExperimentSpec, Scheme, SimulationSpec,
};
use relaycache::phy::{rate_ratio_ladder, PowerBudget};
use relaycache::simulator::{run_with_trace, CoopPolicy, Scheduling, SlotPolicy};
use relaycache::{Bs, CacheVector, Error, NetworkConfig, Urp};

#[derive(Parser, Debug)]
#[command(
    name = "relaycache",
    version,
    about = "Cache placement sweeps for a two-BS network with a shared relay"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity sweep (the default when no subcommand is given).
    Sweep(SweepArgs),
    /// Rate ratio and slope estimate over a transmit-power ladder.
    Ladder(LadderArgs),
    /// Per-slot CSV trace of one simulation.
    Trace(TraceArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated schemes: optimal, saa-walk, uniform, infinite, separate-rs.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "saa-walk,uniform,infinite,separate-rs"
    )]
    scheme: Vec<String>,
    /// Comma-separated cache budgets; defaults to the scenario's budget.
    #[arg(long, value_delimiter = ',')]
    capacities: Vec<f64>,
    /// Training request profiles for the placement search.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Held-out request profiles for scoring.
    #[arg(long, default_value_t = 1000)]
    eval_samples: usize,
    /// Also run the slot simulator on evaluation profiles.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 100_000)]
    slots: u64,
    #[arg(long, default_value_t = 1.0 / 256.0)]
    delta: f64,
    /// Simulated evaluation profiles per capacity.
    #[arg(long, default_value_t = 20)]
    sim_runs: usize,
    /// Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; placements go to a `.placements.json` sidecar.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LadderArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated BS powers (linear).
    #[arg(long, value_delimiter = ',', default_value = "1e2,1e4,1e6,1e8")]
    powers: Vec<f64>,
    /// Relay power as a fraction of BS power, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    relay_ratio: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Cooperative probability used by the slope column.
    #[arg(long, default_value_t = 1.0)]
    coop_prob: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Placement as a JSON array of L values (default: empty cache).
    #[arg(long)]
    placement: Option<PathBuf>,
    /// Comma-separated 1-based file index per user.
    #[arg(long, value_delimiter = ',', required = true)]
    urp: Vec<usize>,
    /// fair-coin, priority-1 or priority-2.
    #[arg(long, default_value = "fair-coin")]
    policy: String,
    /// aligned or uniform.
    #[arg(long, default_value = "aligned")]
    scheduling: String,
    #[arg(long, default_value_t = 1000)]
    slots: u64,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    delta: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Output file or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(io_error(path))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let path = args
        .scenario
        .ok_or_else(|| config_error("--scenario is required for a sweep"))?;
    let config = NetworkConfig::load(&path)?;
    let schemes = args
        .scheme
        .iter()
        .map(|s| s.trim().parse::<Scheme>())
        .collect::<Result<Vec<_>, _>>()?;
    let capacities = if args.capacities.is_empty() {
        vec![config.cache_budget()]
    } else {
        args.capacities
    };
    let spec = ExperimentSpec {
        seed: args.seed.unwrap_or(config.seed()),
        config,
        schemes,
        capacities,
        n_samples: args.samples,
        n_eval_samples: args.eval_samples,
        simulation: args.simulate.then_some(SimulationSpec {
            slots: args.slots,
            delta: args.delta,
            runs: args.sim_runs,
        }),
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let rows = sweep_and_emit(&spec, &out)?;
    eprintln!(
        "wrote {} rows to {} and placements to {}",
        rows.len(),
        out.display(),
        sidecar_path(&out).display()
    );
    Ok(())
}

fn ladder(args: LadderArgs) -> Result<(), Error> {
    let config = NetworkConfig::load(&args.scenario)?;
    if !(args.relay_ratio > 0.0 && args.relay_ratio <= 1.0) {
        return Err(config_error("--relay-ratio must lie in (0, 1]"));
    }
    if args.powers.iter().any(|&p| p.is_nan() || p <= 1.0) {
        return Err(config_error("ladder powers must exceed 1"));
    }
    let ladder: Vec<PowerBudget> = args
        .powers
        .iter()
        .map(|&p| PowerBudget {
            bs: p,
            relay: p * args.relay_ratio,
        })
        .collect();
    let rungs = rate_ratio_ladder(
        &config,
        &ladder,
        args.trials,
        args.coop_prob,
        args.seed.unwrap_or(config.seed()),
    )?;
    let target = args.out.as_deref();
    let mut w = sink(target)?;
    let err = |e| io_error(target.unwrap_or(Path::new("stdout")))(e);
    writeln!(w, "power,ratio_mean,ratio_std,dof_estimate").map_err(err)?;
    for r in rungs {
        writeln!(
            w,
            "{},{},{},{}",
            r.power, r.ratio_mean, r.ratio_std, r.dof_estimate
        )
        .map_err(err)?;
    }
    w.flush().map_err(err)
}

fn parse_policy(name: &str) -> Result<CoopPolicy, Error> {
    match name {
        "fair-coin" => Ok(CoopPolicy::FairCoin),
        "priority-1" => Ok(CoopPolicy::Priority(Bs::One)),
        "priority-2" => Ok(CoopPolicy::Priority(Bs::Two)),
        other => Err(config_error(format!(
            "unknown policy {other:?}; expected fair-coin, priority-1 or priority-2"
        ))),
    }
}

fn parse_scheduling(name: &str) -> Result<Scheduling, Error> {
    match name {
        "aligned" => Ok(Scheduling::Aligned),
        "uniform" => Ok(Scheduling::Uniform),
        other => Err(config_error(format!(
            "unknown scheduling {other:?}; expected aligned or uniform"
        ))),
    }
}

fn trace(args: TraceArgs) -> Result<(), Error> {
    let config = NetworkConfig::load(&args.scenario)?;
    let q = match &args.placement {
        None => CacheVector::zeros(config.files()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            let values: Vec<f64> = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?;
            CacheVector::new(values)?
        }
    };
    let pi = Urp::from_indices(&args.urp)?;
    let policy = SlotPolicy::new(parse_policy(&args.policy)?, args.delta)?
        .with_scheduling(parse_scheduling(&args.scheduling)?);
    let target = args.out.as_deref();
    let mut w = sink(target)?;
    let result = run_with_trace(
        &config,
        &q,
        &pi,
        &policy,
        args.slots,
        args.seed.unwrap_or(config.seed()),
        &mut w,
    )?;
    w.flush()
        .map_err(io_error(target.unwrap_or(Path::new("stdout"))))?;
    eprintln!(
        "cooperative fraction {:.6}, DoF {:.6}",
        result.empirical_coop, result.dof_count
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Some(Command::Sweep(args)) => sweep(args),
        Some(Command::Ladder(args)) => ladder(args),
        Some(Command::Trace(args)) => trace(args),
        None => sweep(cli.sweep),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
