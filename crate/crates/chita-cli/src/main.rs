use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chita_cli::run::{
    cmd_gen_synthetic, cmd_gen_toy_mlp, cmd_prune, cmd_verify, GenSynthetic, GenToyMlp,
};
use chita_cli::{exit_code, CliError};

#[derive(Parser)]
#[command(
    name = "chita",
    version,
    about = "Network pruning as l0-constrained ridge regression over a low-rank gradient matrix"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded, byte-reproducible input files
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Prune: run one solver over a matrix/weights pair and record results
    Prune(PruneArgs),
    /// Run one oracle suite and report per-property pass/fail
    Verify {
        /// gradients | linesearch | woodbury | bruteforce
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Random gradient matrix and anchor weights
    Synthetic {
        /// Gradient rows (samples)
        #[arg(long)]
        n: usize,
        /// Parameters (columns)
        #[arg(long)]
        p: usize,
        /// Log-uniform column scale spread (0 = unscaled)
        #[arg(long, default_value_t = 0.0)]
        scale_spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy MLP on Gaussian blobs and export its pruning inputs
    ToyMlp {
        #[arg(long, default_value_t = 16)]
        d_in: usize,
        #[arg(long, default_value_t = 150)]
        d_hidden: usize,
        #[arg(long, default_value_t = 4)]
        d_out: usize,
        /// Dataset size
        #[arg(long, default_value_t = 600)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        /// Gradient-matrix rows
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Mini-batch size per gradient row
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PruneArgs {
    /// Run configuration (strict JSON)
    #[arg(long)]
    config: PathBuf,
    /// Gradient matrix file
    #[arg(long)]
    matrix: PathBuf,
    /// Anchor weights file
    #[arg(long)]
    wbar: PathBuf,
    /// Layer map (JSON); defaults to one layer spanning all parameters
    #[arg(long)]
    layers: Option<PathBuf>,
    /// Output directory for solution.json and results.csv
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Gen { kind } => {
            match kind {
                GenKind::Synthetic {
                    n,
                    p,
                    scale_spread,
                    seed,
                    out,
                } => cmd_gen_synthetic(&GenSynthetic {
                    n,
                    p,
                    scale_spread,
                    seed,
                    out,
                })?,
                GenKind::ToyMlp {
                    d_in,
                    d_hidden,
                    d_out,
                    samples,
                    epochs,
                    batch_size,
                    lr,
                    n,
                    m,
                    seed,
                    out,
                } => cmd_gen_toy_mlp(&GenToyMlp {
                    d_in,
                    d_hidden,
                    d_out,
                    samples,
                    epochs,
                    batch_size,
                    lr,
                    n,
                    m,
                    seed,
                    out,
                })?,
            }
            Ok(true)
        }
        Command::Prune(args) => {
            let row = cmd_prune(
                &args.config,
                &args.matrix,
                &args.wbar,
                args.layers.as_deref(),
                &args.out,
            )?;
            println!(
                "{}: k={} nnz={} objective {:.6e} -> {:.6e} in {} ms",
                row.solver, row.k, row.nnz, row.objective_initial, row.objective_final, row.wall_ms
            );
            Ok(true)
        }
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(exit_code::OK as u8),
        Ok(false) => ExitCode::from(exit_code::VERIFY as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
