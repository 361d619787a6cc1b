mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsecomm_core::harness::Planner;
use sparsecomm_core::scenario::Budget;

#[derive(Debug, Parser)]
#[command(name = "sparsecomm", version, about = "Bandwidth-aware collaborative perception simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one budget for each seed and write one record per seed.
    Run(RunArgs),
    /// Simulate every budget, seed and baseline.
    Sweep(SweepArgs),
    /// Rank fused channels by L1 norm and measure what pruning removes.
    Prune(PruneArgs),
    /// Check protocol invariants on randomized rounds.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML file; the built-in default scene when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Scene seed, repeatable. Defaults to the scenario's seed list.
    #[arg(long = "seed", env = "SPARSECOMM_SEED", value_delimiter = ',')]
    seeds: Vec<u64>,

    #[arg(long)]
    patch_size: Option<usize>,

    #[arg(long)]
    experts: Option<usize>,

    /// Spatial softmax temperature.
    #[arg(long)]
    tau_s: Option<f64>,

    /// Append JSON lines here instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,

    /// Fraction of full exchange (`0.05`, `5%`) or a block count (`120blocks`).
    #[arg(long, value_parser = parse_budget)]
    budget: Budget,

    #[arg(long, value_enum, default_value_t = Baseline::Coordinated)]
    baseline: Baseline,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,

    /// Budget, repeatable. Defaults to the scenario's budget schedule.
    #[arg(long = "budget", value_parser = parse_budget, value_delimiter = ',')]
    budgets: Vec<Budget>,

    /// Restrict to these baselines; all three when omitted.
    #[arg(long = "baseline", value_enum, value_delimiter = ',')]
    baselines: Vec<Baseline>,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[command(flatten)]
    common: ScenarioArgs,

    /// Pruned channel fraction, repeatable. Defaults to the scenario's list.
    #[arg(long = "fraction", value_delimiter = ',')]
    fractions: Vec<f64>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Seed from which every audit case is drawn.
    #[arg(long, env = "SPARSECOMM_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 100)]
    cases: usize,

    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<InjectedFault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Coordinated,
    Random,
    SpatialOnly,
}

impl From<Baseline> for Planner {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Coordinated => Planner::Coordinated,
            Baseline::Random => Planner::Random,
            Baseline::SpatialOnly => Planner::SpatialOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InjectedFault {
    ExceedBudget,
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    s.parse().map_err(|e: sparsecomm_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a.common, a.budget, a.baseline.into()),
        Command::Sweep(a) => {
            let planners = a.baselines.iter().map(|&b| b.into()).collect();
            commands::sweep(&a.common, &a.budgets, planners)
        }
        Command::Prune(a) => commands::prune(&a.common, &a.fractions),
        Command::Audit(a) => commands::audit(a.seed, a.cases, a.out.as_deref(), a.inject_fault.is_some()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparsecomm: {e}");
            ExitCode::from(e.code())
        }
    }
}
