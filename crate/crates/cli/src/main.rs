//! `procrl`: a pipeline driver for process-supervised policy optimization
//! on stack-program synthesis tasks. Stages write into a run directory and
//! read each other's artifacts from it.

mod config;
mod stages;

use clap::{Parser, Subcommand};
use config::RunConfig;
use stages::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "procrl", version, about = "Process-reward RL workbench for a stack-machine DSL")]
struct Cli {
    /// Config file (JSON). Defaults apply for every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config leaf, e.g. --set rl.steps=50 --set rl.mode=dense.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Where stage artifacts live. Also settable via PROCRL_RUN_DIR.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    /// Master seed; shorthand for --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the task corpus and split it into train and held-out sets.
    Taskgen,
    /// Imitation-train a fresh policy on the reference programs.
    Sft,
    /// RL from unit-test feedback only; also trains the critic the reward
    /// model will start from.
    RlBaseline,
    /// Sample responses from saved checkpoints and label prefixes by
    /// binary-searching for the first failing step.
    CollectPrmData,
    /// Fit the process reward model on the labeled prefixes.
    TrainPrm,
    /// RL with the process reward model, in the configured mode.
    RlPsgpo,
    /// Score saved policies on the held-out tasks.
    Eval,
    /// Consolidate metrics and evaluations into tables and plots.
    Report,
    /// Grid over selection strategies and dataset scales.
    Sweep,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("PROCRL_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| CliError::Config(format!("PROCRL_THREADS must be a number, got {threads:?}")))?;
        // Re-initialization only fails if a pool already exists; that pool
        // already honored the variable, so the result is safe to drop.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let run_dir = cli
        .run_dir
        .or_else(|| std::env::var_os("PROCRL_RUN_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("run"));
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg = cfg.apply_overrides(&cli.set)?;
    cfg.persist(&run_dir)?;
    match cli.command {
        Command::Taskgen => stages::stage_taskgen(&run_dir, &cfg),
        Command::Sft => stages::stage_sft(&run_dir, &cfg),
        Command::RlBaseline => stages::stage_rl_baseline(&run_dir, &cfg),
        Command::CollectPrmData => stages::stage_collect(&run_dir, &cfg),
        Command::TrainPrm => stages::stage_train_prm(&run_dir, &cfg),
        Command::RlPsgpo => stages::stage_rl_psgpo(&run_dir, &cfg),
        Command::Eval => stages::stage_eval(&run_dir, &cfg),
        Command::Report => stages::stage_report(&run_dir, &cfg),
        Command::Sweep => stages::stage_sweep(&run_dir, &cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
