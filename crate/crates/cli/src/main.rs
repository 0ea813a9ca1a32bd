use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poisson_vga::vga::SolverMode;
use poisson_vga_cli::{
    cmd_bench, cmd_hyper, cmd_solve, cmd_validate, CliError, Overrides, RunConfig, Study,
};

/// Variational Gaussian approximation for Poisson inverse problems.
#[derive(Parser)]
#[command(name = "poisson-vga", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Run config (TOML, or JSON by extension). Defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides `problem.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<SolverMode>,
    #[arg(long, global = true)]
    rank: Option<usize>,
    /// Total width of the banded covariance mask (1 = diagonal).
    #[arg(long, global = true)]
    sparsity: Option<usize>,
    /// Record wall-clock times in the reports.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal Gaussian at a fixed prior strength.
    Solve,
    /// Estimate the prior strength by hierarchical EM.
    Hyper,
    /// Compare against the Laplace approximation and an MCMC chain.
    Validate,
    /// Sweep rank or sparsity against the dense solution.
    Bench {
        #[arg(value_enum)]
        study: Study,
    },
}

fn parse_mode(s: &str) -> Result<SolverMode, String> {
    s.parse().map_err(|e: poisson_vga::VgaError| e.to_string())
}

fn run(cli: Cli) -> Result<poisson_vga_cli::Outcome, CliError> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Overrides {
        out: g.out,
        seed: g.seed,
        mode: g.mode,
        rank: g.rank,
        sparsity: g.sparsity,
        timings: g.timings,
    }
    .apply(&mut cfg);
    match cli.command {
        Command::Solve => cmd_solve(&cfg),
        Command::Hyper => cmd_hyper(&cfg),
        Command::Validate => cmd_validate(&cfg),
        Command::Bench { study } => cmd_bench(&cfg, study),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string(&outcome).expect("outcome serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
