mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

/// Extinction probabilities of branching processes with countably many types.
#[derive(Parser, Debug)]
#[command(name = "gw-extinct", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extinction probability vector of one truncation.
    Solve(SolveArgs),
    /// Truncated extinction probabilities for increasing levels until they settle.
    Sequence(SequenceArgs),
    /// Perron roots of the sterile and augmented mean matrices over a range of levels.
    Spectral(SpectralArgs),
    /// Monte Carlo simulation of coupled truncations.
    Simulate(SimulateArgs),
    /// Regenerate the data behind a published figure.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Newton,
    Fi,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Inner stopping rule: sup-norm of the last update.
    #[arg(long, default_value_t = 1e-12)]
    inner_tol: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Newton)]
    method: MethodArg,
    /// Iteration cap for functional iteration.
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Zoo URI (`zoo:example2?a=1/6&c=0.875&d=2`), inline JSON or a JSON file.
    #[arg(long)]
    model: String,
}

#[derive(Args, Debug, Clone)]
struct ModeArgs {
    #[arg(long, default_value = "immortal")]
    mode: String,
    /// Replacement distribution for augmented truncations: e1, ek, uniform or custom:<json>.
    #[arg(long)]
    alpha: Option<String>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    mode: ModeArgs,
    /// Truncation level.
    #[arg(long)]
    k: u32,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV output (`type,q`); stdout when absent.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct SequenceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    mode: ModeArgs,
    /// Tracked type; the model's first type by default.
    #[arg(long = "type")]
    ty: Option<u32>,
    /// Outer stopping rule on consecutive values of the tracked component.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_k: u32,
    /// Levels below this never stop the sequence.
    #[arg(long, default_value_t = 0)]
    min_k: u32,
    #[arg(long, default_value_t = 1)]
    k_stride: u32,
    /// Number of leading components written per level.
    #[arg(long, default_value_t = 10)]
    display: usize,
    /// Start immortal levels from the previous solution.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    warm_start: bool,
    /// Re-solve warm-started levels from zero and compare.
    #[arg(long)]
    verify_minimality: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct SpectralArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "e1")]
    alpha: String,
    #[arg(long)]
    k_min: Option<u32>,
    #[arg(long, default_value_t = 400)]
    k_max: u32,
    #[arg(long, default_value_t = 1)]
    stride: u32,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Trailing levels used for the limit summaries.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Declare that the extinction probabilities are bounded away from zero.
    #[arg(long)]
    positive_extinction: Option<bool>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial type; the model's first type by default.
    #[arg(long = "type")]
    ty: Option<u32>,
    #[arg(long, default_value_t = 10_000)]
    paths: u64,
    #[arg(long, default_value_t = 500)]
    max_gen: u32,
    #[arg(long, default_value_t = 1_000_000)]
    max_pop: u64,
    /// Truncation levels, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    k: Vec<u32>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "e1")]
    alpha: String,
    /// Also follow the untruncated process.
    #[arg(long)]
    global: bool,
    /// Threshold separating small from large seed counts.
    #[arg(long, default_value_t = 10)]
    seed_bound: u64,
    /// Add the solver value of the empty-seed probability to the seed table.
    #[arg(long)]
    solver_column: bool,
    /// Extinction summary CSV; stdout when absent.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Seed-count table CSV.
    #[arg(long)]
    seeds_out: Option<std::path::PathBuf>,
    /// Per-path outcome CSV.
    #[arg(long)]
    paths_out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// fig3, fig5a, fig5b, fig5c, fig5d, fig7-top, fig7-bottom or all.
    figure: String,
    #[arg(long, default_value = ".")]
    out_dir: std::path::PathBuf,
    /// Largest truncation level of the sequence panels.
    #[arg(long, default_value_t = 100)]
    k_max: u32,
    /// Grid size per axis of the fig3 surfaces.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("GW_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::config(format!("GW_THREADS={raw} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                commands::EXIT_CONFIG
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Sequence(a) => commands::sequence(a),
        Command::Spectral(a) => commands::spectral(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Reproduce(a) => commands::reproduce(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
