//! `kinex` — experiment front door. Configs come from flags or a JSON file
//! (`--config`, flags win); every run directory receives its artifacts plus
//! a manifest.json from which the run can be reproduced byte-for-byte.
//! Exit codes: 0 success, 2 invalid configuration, 1 runtime failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::*;
use kinex::agent::{ExchangeRule, InitialCondition, TimeConvention};

#[derive(Parser)]
#[command(
    name = "kinex",
    version,
    about = "Numerical laboratory for pairwise binomial-reshuffling exchange dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON config file; a previous run's manifest.json also works
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory the artifacts are written to
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(ValueEnum, Clone, Copy)]
enum RuleFlag {
    Binomial,
    Uniform,
    RepeatedAverage,
    Saving,
}

#[derive(ValueEnum, Clone, Copy)]
enum TimeFlag {
    Discrete,
    PoissonClock,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| "expected LO,HI".to_string())?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("hi: {e}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of agents
    #[arg(long)]
    agents: Option<usize>,
    /// Number of exchange events
    #[arg(long)]
    events: Option<u64>,
    /// Seed for the replica-splittable generator
    #[arg(long)]
    seed: Option<u64>,
    /// Exchange rule applied at each event
    #[arg(long, value_enum)]
    rule: Option<RuleFlag>,
    /// Pool fraction at stake under the saving rule
    #[arg(long, value_name = "S")]
    saving_s: Option<f64>,
    /// Start every agent at this wealth
    #[arg(long, value_name = "VALUE", conflicts_with = "initial_range")]
    initial_dirac: Option<f64>,
    /// Start from evenly spread wealths LO,HI
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    initial_range: Option<(f64, f64)>,
    /// Record a snapshot every this many events
    #[arg(long)]
    snapshot_every: Option<u64>,
    /// Clock convention
    #[arg(long, value_enum)]
    time: Option<TimeFlag>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MeanfieldArgs {
    /// Start from a point mass at this level
    #[arg(long, conflicts_with = "poisson")]
    dirac: Option<usize>,
    /// Start from the Poisson law with this rate
    #[arg(long)]
    poisson: Option<f64>,
    /// Truncation window (default: tail-bound choice for the mean)
    #[arg(long)]
    truncation: Option<usize>,
    /// Integration step
    #[arg(long)]
    dt: Option<f64>,
    /// Final time
    #[arg(long)]
    t_end: Option<f64>,
    /// Snapshot spacing
    #[arg(long)]
    snap_step: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CoupleArgs {
    /// Point-mass start level for the evolving side
    #[arg(long)]
    dirac: Option<usize>,
    /// Equilibrium rate for the stationary side
    #[arg(long)]
    lambda: Option<f64>,
    /// Coupled pairs per replica
    #[arg(long)]
    pairs: Option<usize>,
    /// Final time
    #[arg(long)]
    t_end: Option<f64>,
    /// Recording grid spacing
    #[arg(long)]
    grid_step: Option<f64>,
    /// Independent replicas (averaged in the artifacts)
    #[arg(long)]
    replicas: Option<u64>,
    /// Master seed; replica r uses stream r
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ChainArgs {
    /// Number of agents
    #[arg(long)]
    agents: Option<usize>,
    /// Total conserved wealth
    #[arg(long)]
    total: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LaplaceArgs {
    /// Point-mass start level
    #[arg(long)]
    dirac: Option<usize>,
    /// Ladder truncation depth
    #[arg(long)]
    depth: Option<usize>,
    /// Final time
    #[arg(long)]
    t_end: Option<f64>,
    /// Integration step
    #[arg(long)]
    dt: Option<f64>,
    /// Recording spacing in the ladder CSV
    #[arg(long)]
    snap_step: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MetricsArgs {
    /// First distribution, as a `n,p_n` CSV
    #[arg(long)]
    p: Option<PathBuf>,
    /// Optional second distribution to compare against
    #[arg(long)]
    q: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Fig1Args {
    /// Number of agents
    #[arg(long)]
    n: Option<usize>,
    /// Number of exchange events
    #[arg(long)]
    events: Option<u64>,
    /// Seed
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Fig4Args {
    /// Conserved mean; the run starts from a point mass at this level
    #[arg(long)]
    lambda: Option<f64>,
    /// Final time
    #[arg(long)]
    t_end: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Fig5Args {
    /// Final time
    #[arg(long)]
    t_end: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Figure {
    /// Large-population relaxation: snapshot CSVs + Poisson comparison
    Fig1(Fig1Args),
    /// Deterministic flow to near-equilibrium: trajectory + final distance
    Fig4(Fig4Args),
    /// Metric decay traces from a mean-5.15 start + decay fits
    Fig5(Fig5Args),
}

#[derive(Subcommand)]
enum Cmd {
    /// Stochastic N-agent exchange simulation
    Simulate(SimulateArgs),
    /// Deterministic single-agent law under the collision operator
    Meanfield(MeanfieldArgs),
    /// Two-ensemble shared-coin coupling experiment
    Couple(CoupleArgs),
    /// Exact finite chain: transition matrix and stationary law
    Chain(ChainArgs),
    /// Generating-function ladder integration
    Laplace(LaplaceArgs),
    /// Transport and inequality metrics between two distributions
    Metrics(MetricsArgs),
    /// Bundled experiment presets
    Reproduce {
        #[command(subcommand)]
        figure: Figure,
    },
}

fn load_or_default<T>(common: &Common, command: &str) -> Result<T, Failure>
where
    T: serde::de::DeserializeOwned + Default,
{
    match &common.config {
        Some(path) => load_config(path, command),
        None => Ok(T::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Simulate(args) => {
            let mut run: SimulateRun = load_or_default(&args.common, "simulate")?;
            if let Some(v) = args.agents {
                run.agents = v;
            }
            if let Some(v) = args.events {
                run.events = v;
            }
            if let Some(v) = args.seed {
                run.seed = v;
            }
            if let Some(flag) = args.rule {
                run.rule = match flag {
                    RuleFlag::Binomial => ExchangeRule::Binomial,
                    RuleFlag::Uniform => ExchangeRule::Uniform,
                    RuleFlag::RepeatedAverage => ExchangeRule::RepeatedAverage,
                    RuleFlag::Saving => ExchangeRule::Saving {
                        s: args.saving_s.unwrap_or(0.5),
                    },
                };
            } else if args.saving_s.is_some() {
                return Err(Failure::Validation(
                    "saving_s: requires --rule saving (got a bare --saving-s)".into(),
                ));
            }
            if let Some(v) = args.initial_dirac {
                run.initial = InitialCondition::Dirac { value: v };
            }
            if let Some((lo, hi)) = args.initial_range {
                run.initial = InitialCondition::UniformRange { lo, hi };
            }
            if let Some(v) = args.snapshot_every {
                run.snapshot_every = Some(v);
            }
            if let Some(flag) = args.time {
                run.time_convention = match flag {
                    TimeFlag::Discrete => TimeConvention::Discrete,
                    TimeFlag::PoissonClock => TimeConvention::PoissonClock,
                };
            }
            run.validate()?;
            run::exec_simulate(&run, &args.common.out, args.common.force)
        }
        Cmd::Meanfield(args) => {
            let mut run: MeanfieldRun = load_or_default(&args.common, "meanfield")?;
            if let Some(v) = args.dirac {
                run.initial = PmfInitial::Dirac { value: v };
            }
            if let Some(v) = args.poisson {
                run.initial = PmfInitial::Poisson { lambda: v };
            }
            if let Some(v) = args.truncation {
                run.truncation = Some(v);
            }
            if let Some(v) = args.dt {
                run.dt = v;
            }
            if let Some(v) = args.t_end {
                run.t_end = v;
            }
            if let Some(v) = args.snap_step {
                run.snap_step = v;
            }
            run.validate()?;
            run::exec_meanfield(&run, &args.common.out, args.common.force)
        }
        Cmd::Couple(args) => {
            let mut run: CoupleRun = load_or_default(&args.common, "couple")?;
            if let Some(v) = args.dirac {
                run.dirac = v;
            }
            if let Some(v) = args.lambda {
                run.lambda = v;
            }
            if let Some(v) = args.pairs {
                run.pairs = v;
            }
            if let Some(v) = args.t_end {
                run.t_end = v;
            }
            if let Some(v) = args.grid_step {
                run.grid_step = v;
            }
            if let Some(v) = args.replicas {
                run.replicas = v;
            }
            if let Some(v) = args.seed {
                run.seed = v;
            }
            run.validate()?;
            run::exec_couple(&run, &args.common.out, args.common.force)
        }
        Cmd::Chain(args) => {
            let mut run: ChainRun = load_or_default(&args.common, "chain")?;
            if let Some(v) = args.agents {
                run.agents = v;
            }
            if let Some(v) = args.total {
                run.total = v;
            }
            run.validate()?;
            run::exec_chain(&run, &args.common.out, args.common.force)
        }
        Cmd::Laplace(args) => {
            let mut run: LaplaceRun = load_or_default(&args.common, "laplace")?;
            if let Some(v) = args.dirac {
                run.dirac = v;
            }
            if let Some(v) = args.depth {
                run.depth = v;
            }
            if let Some(v) = args.t_end {
                run.t_end = v;
            }
            if let Some(v) = args.dt {
                run.dt = v;
            }
            if let Some(v) = args.snap_step {
                run.snap_step = v;
            }
            run.validate()?;
            run::exec_laplace(&run, &args.common.out, args.common.force)
        }
        Cmd::Metrics(args) => {
            let mut run: MetricsRun = load_or_default(&args.common, "metrics")?;
            if let Some(v) = args.p {
                run.p = Some(v);
            }
            if let Some(v) = args.q {
                run.q = Some(v);
            }
            run.validate()?;
            run::exec_metrics(&run, &args.common.out, args.common.force)
        }
        Cmd::Reproduce { figure } => match figure {
            Figure::Fig1(args) => {
                let mut run: Fig1Run = load_or_default(&args.common, "reproduce-fig1")?;
                if let Some(v) = args.n {
                    run.n = v;
                }
                if let Some(v) = args.events {
                    run.events = v;
                }
                if let Some(v) = args.seed {
                    run.seed = v;
                }
                run.validate()?;
                run::exec_fig1(&run, &args.common.out, args.common.force)
            }
            Figure::Fig4(args) => {
                let mut run: Fig4Run = load_or_default(&args.common, "reproduce-fig4")?;
                if let Some(v) = args.lambda {
                    run.lambda = v;
                }
                if let Some(v) = args.t_end {
                    run.t_end = v;
                }
                run.validate()?;
                run::exec_fig4(&run, &args.common.out, args.common.force)
            }
            Figure::Fig5(args) => {
                let mut run: Fig5Run = load_or_default(&args.common, "reproduce-fig5")?;
                if let Some(v) = args.t_end {
                    run.t_end = v;
                }
                run.validate()?;
                run::exec_fig5(&run, &args.common.out, args.common.force)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
