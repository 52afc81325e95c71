//! Benchmark CLI for the balanced linear contextual bandit library.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use balin::harness::{run_experiment, write_outputs, EnvSpec, ExperimentConfig, SummaryRow};
use balin::policy::{LambdaRule, PolicyKind};

#[derive(Parser)]
#[command(name = "balin", version, about = "Balanced linear contextual bandit benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy sweep on an environment and write per-step CSVs plus a
    /// JSON summary.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Environment: synthetic-well, synthetic-mis or dataset:<path>
    #[arg(long)]
    env: String,

    /// Policy to run (lints, linucb, blts, blucb); repeat to compare
    #[arg(long = "algo", required = true)]
    algos: Vec<String>,

    /// Exploration constant to sweep; repeatable. Defaults to 1 for the
    /// Thompson kinds and 2 for the UCB kinds.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,

    /// Propensity clipping threshold to sweep (balanced kinds); repeatable.
    /// Defaults to 0.1.
    #[arg(long = "gamma")]
    gammas: Vec<f64>,

    /// Ridge grid cross-validated at every refit, e.g. 0.01,0.1,1,10
    #[arg(long = "lambda-grid", value_delimiter = ',')]
    lambda_grid: Vec<f64>,

    /// Online horizon. Synthetic default: 2000; datasets default to every
    /// row of the shuffled file.
    #[arg(long = "T")]
    horizon: Option<usize>,

    /// Replications (synthetic) or shuffles (datasets)
    #[arg(long)]
    reps: Option<usize>,

    /// Base seed; replication i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Monte-Carlo iterations per propensity estimate (BLTS)
    #[arg(long = "mc-iters", default_value_t = 1000)]
    mc_iters: usize,

    /// Label column of a dataset CSV (default: last column)
    #[arg(long = "label-col")]
    label_col: Option<String>,

    /// Output directory
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Recompute every propensity over the current snapshot reservoir at
    /// each update instead of caching assignment-time values (BLTS; slow)
    #[arg(long = "fidelity-recompute-propensities")]
    fidelity_recompute_propensities: bool,

    /// Probe-set size for optimal-assignment detection (synthetic)
    #[arg(long = "probe-size", default_value_t = 1000)]
    probe_size: usize,

    /// Greedy-agreement fraction that counts as finding the optimal
    /// assignment (synthetic)
    #[arg(long = "agreement-threshold", default_value_t = 0.95)]
    agreement_threshold: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
    }
}

fn parse_env(raw: &str, label_col: Option<String>) -> Result<EnvSpec> {
    match raw {
        "synthetic-well" => Ok(EnvSpec::SyntheticWell),
        "synthetic-mis" => Ok(EnvSpec::SyntheticMis),
        other => {
            if let Some(path) = other.strip_prefix("dataset:") {
                Ok(EnvSpec::Dataset {
                    path: PathBuf::from(path),
                    label_column: label_col,
                })
            } else {
                bail!("unknown --env `{other}` (expected synthetic-well, synthetic-mis or dataset:<path>)")
            }
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let env = parse_env(&args.env, args.label_col.clone())?;
    let mut config = ExperimentConfig::<f64>::new(env);
    config.policies = args
        .algos
        .iter()
        .map(|a| a.parse::<PolicyKind>())
        .collect::<balin::Result<_>>()?;
    if !args.alphas.is_empty() {
        config.alphas = Some(args.alphas.clone());
    }
    if !args.gammas.is_empty() {
        config.gammas = args.gammas.clone();
    }
    if !args.lambda_grid.is_empty() {
        config.lambda = LambdaRule::CrossValidated(args.lambda_grid.clone());
    }
    config.horizon = args.horizon;
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    config.base_seed = args.seed;
    config.mc_iterations = args.mc_iters;
    config.recompute_propensities = args.fidelity_recompute_propensities;
    config.probe_size = args.probe_size;
    config.agreement_threshold = args.agreement_threshold;

    let result = run_experiment(&config).context("experiment failed")?;
    let rows = write_outputs(&result, &args.out).context("writing outputs failed")?;
    print_summary(&rows);
    println!(
        "\nwrote {} per-step CSV file(s) and summary.json to {}",
        result.combos.len(),
        args.out.display()
    );
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<8} {:>6} {:>6} {:>14} {:>12} {:>12} {:>10} {:>11}",
        "policy",
        "alpha",
        "gamma",
        "mean_cum_reg",
        "sd_cum_reg",
        "norm_regret",
        "pct_found",
        "found_step"
    );
    for row in rows {
        println!(
            "{:<8} {:>6} {:>6} {:>14.3} {:>12.3} {:>12} {:>10} {:>11}",
            row.policy,
            row.alpha,
            row.gamma.map_or("-".to_string(), |g| g.to_string()),
            row.mean_cum_regret,
            row.sd_cum_regret,
            row.mean_norm_regret
                .map_or("-".to_string(), |v| format!("{v:.4}")),
            row.pct_optimal_found
                .map_or("-".to_string(), |v| format!("{v:.1}")),
            row.mean_found_step
                .map_or("-".to_string(), |v| format!("{v:.0}")),
        );
    }
}
