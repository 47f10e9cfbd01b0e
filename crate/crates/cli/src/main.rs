use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbvp_cli::{cmd_solve_linear, cmd_solve_nonlinear, cmd_vdp_torus, CliError, Exit, Overrides, TorusOptions};

#[derive(Parser)]
#[command(name = "pbvp", version, about = "Periodic boundary-value problems in phase-pair form")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a linear problem and write its solution or pseudosolution.
    SolveLinear(ProblemArgs),
    /// Find generating roots and run the correction iteration.
    SolveNonlinear(ProblemArgs),
    /// Newton roots of the van der Pol amplitude system on a support.
    VdpTorus(TorusArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem document (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    series_terms: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    resonance_tol: Option<f64>,
    #[arg(long)]
    rank_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProblemArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            grid_size: self.grid_size,
            mu: self.mu,
            series_terms: self.series_terms,
            eps: self.eps,
            tol: self.tol,
            max_iter: self.max_iter,
            resonance_tol: self.resonance_tol,
            rank_tol: self.rank_tol,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct TorusArgs {
    #[arg(long)]
    n_modes: usize,
    /// One-based mode indices, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    support: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    random_starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    grid_size: usize,
    /// Radius and residual tolerance of the torus check.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    rank_tol: Option<f64>,
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    match cli.command {
        Command::SolveLinear(a) => cmd_solve_linear(&a.input, &a.out_dir, &a.overrides()),
        Command::SolveNonlinear(a) => cmd_solve_nonlinear(&a.input, &a.out_dir, &a.overrides()),
        Command::VdpTorus(a) => {
            let mut opts = TorusOptions {
                n_modes: a.n_modes,
                support: a.support,
                random_starts: a.random_starts,
                seed: a.seed,
                grid_size: a.grid_size,
                tol: a.tol,
                ..Default::default()
            };
            if let Some(r) = a.rank_tol {
                opts.newton.rank_tol = r;
            }
            cmd_vdp_torus(&opts, &a.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let exit = match run(Cli::parse()) {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    };
    ExitCode::from(exit.code() as u8)
}
