//! `simal`: simulate epidemics, train surrogates and run active learning.

mod commands;
mod config;
mod rundir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simal_core::theory::ScalingConfig;
use simal_core::Result;

use config::{ActiveFlags, OfflineFlags, ScoreFlags, SimulateFlags, TheoryFlags};

#[derive(Parser, Debug)]
#[command(name = "simal", version, about = "Active learning of epidemic simulator surrogates")]
struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = "SIMAL_OUT_ROOT", default_value = "runs")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, relative to the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace a run directory written with a different configuration.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario grid and write a dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: SimulateFlags,
    },
    /// Train surrogates on every candidate scenario.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: OfflineFlags,
    },
    /// Run the active-learning loop for each acquisition and seed.
    Active {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: ActiveFlags,
        /// Continue an interrupted run; fail if there is none.
        #[arg(long)]
        resume: bool,
        #[arg(long, hide = true)]
        stop_after_round: Option<usize>,
    },
    /// Greedy versus random design in the linear-Gaussian model.
    Theory {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TheoryFlags,
    },
    /// Score a pool once with a trained surrogate.
    Score {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: ScoreFlags,
    },
}

fn out_dir(root: &Path, common: &Common, default: &str) -> PathBuf {
    root.join(common.out.as_deref().unwrap_or(Path::new(default)))
}

fn run(cli: Cli) -> Result<()> {
    let root = &cli.out_root;
    match cli.command {
        Command::Simulate { common, flags } => {
            let mut s = config::load(common.config.as_deref())?;
            flags.apply(&mut s);
            commands::simulate(&out_dir(root, &common, "data"), &s, common.force)
        }
        Command::TrainOffline { common, flags } => {
            let mut s = config::load(common.config.as_deref())?;
            flags.apply(&mut s);
            commands::train_offline_cmd(&out_dir(root, &common, "offline"), &s, common.force)
        }
        Command::Active {
            common,
            flags,
            resume,
            stop_after_round,
        } => {
            let mut s = config::load(common.config.as_deref())?;
            flags.apply(&mut s);
            commands::active(&out_dir(root, &common, "active"), &s, common.force, resume, stop_after_round)
        }
        Command::Theory { common, flags } => {
            let mut s: ScalingConfig = config::load(common.config.as_deref())?;
            flags.apply(&mut s);
            commands::theory(&out_dir(root, &common, "theory"), &s, common.force)
        }
        Command::Score { common, flags } => {
            let mut s = config::load(common.config.as_deref())?;
            flags.apply(&mut s);
            commands::score(&out_dir(root, &common, "score"), &s, common.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
