//! `xifreeze`: exact laws and samplers for exchangeable coalescents with
//! freezing.
//!
//! Models are finite mixtures — a Kingman part, finitely many simplex
//! atoms, and an optional Beta single-collision part — plus a freeze rate,
//! described in a small JSON file (see `crates/cli/tests/models/` for
//! examples). All laws are computed in exact rational arithmetic; the
//! samplers are deterministic given `--seed`.

mod commands;
mod model;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, Mode};
use output::Format;

#[derive(Parser)]
#[command(
    name = "xifreeze",
    version,
    about = "Exact laws and samplers for exchangeable coalescents with freezing",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for the samplers (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output format of the main table.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Write the main table to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact freeze and collision rates for 1..=n-max blocks.
    Rates {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Largest number of blocks.
        #[arg(long, default_value_t = 6)]
        n_max: usize,
    },
    /// Exact jump-chain transition rows for 1..=n-max blocks.
    Qrows {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Largest number of blocks.
        #[arg(long, default_value_t = 6)]
        n_max: usize,
    },
    /// Exact partition probabilities for every shape of size up to n.
    Eppf {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Sample size (largest partition size).
        #[arg(long)]
        n: usize,
    },
    /// Recover the transition row at n from the partition probabilities.
    Invert {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Number of blocks of the recovered row.
        #[arg(long)]
        n: usize,
    },
    /// Sample a chain and tabulate shapes against the exact law.
    Simulate {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Sample size (ground-set size).
        #[arg(long)]
        n: usize,
        /// Number of independent runs (for --mode sa: chain steps).
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        /// Master RNG seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Which chain to run.
        #[arg(long, value_enum, default_value_t = Mode::Fm)]
        mode: Mode,
    },
    /// Run the exact cross-validation suite on a model (exit 1 on failure).
    Verify {
        /// Model file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Largest size the checks run at.
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        /// Corrupt row 2 before checking (negative control: the structural
        /// checks must then fail).
        #[arg(long, hide = true)]
        inject_q_defect: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = xifreeze_core::configure_thread_pool(cli.threads) {
            eprintln!("xifreeze: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = Ctx {
        format: cli.format,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Rates { model, n_max } => commands::cmd_rates(&ctx, &model, n_max),
        Command::Qrows { model, n_max } => commands::cmd_qrows(&ctx, &model, n_max),
        Command::Eppf { model, n } => commands::cmd_eppf(&ctx, &model, n),
        Command::Invert { model, n } => commands::cmd_invert(&ctx, &model, n),
        Command::Simulate {
            model,
            n,
            samples,
            seed,
            mode,
        } => commands::cmd_simulate(&ctx, &model, n, samples, seed, mode),
        Command::Verify {
            model,
            n_max,
            inject_q_defect,
        } => commands::cmd_verify(&ctx, &model, n_max, inject_q_defect),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("xifreeze: {e:#}");
            ExitCode::from(2)
        }
    }
}
