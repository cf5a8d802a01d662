//! `readerprop`: simulate reader feedback, build the interaction graph,
//! train and evaluate the emotion classifier, run ablations, and report.
//!
//! Settings come from `--config` (flat TOML keys) with built-in defaults for
//! anything missing; command-line flags override both.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use readerprop::pipeline::{self, Overrides, PipelineConfig, PipelineError};

#[derive(Parser, Debug)]
#[command(name = "readerprop", version, about = "Reader-feedback emotion classification pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for every artifact of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `mock` or `http`.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Posts delivered to each reader.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Propagation rounds.
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[arg(long, global = true)]
    resume: bool,
    /// Train only the fusion head.
    #[arg(long, global = true)]
    freeze_upstream: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    Simulate,
    BuildGraph,
    Train,
    Evaluate,
    Ablate,
    /// Summarize one run directory, or every run directly below it.
    Report { run_dir: PathBuf },
}

fn config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        out: g.out.clone(),
        backend: g.backend.clone(),
        k: g.k,
        rounds: g.rounds,
        resume: g.resume,
        freeze_upstream: g.freeze_upstream,
    })?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::Report { run_dir } = &cli.command {
        print!("{}", pipeline::cmd_report(run_dir)?);
        return Ok(());
    }
    let cfg = config(&cli.global)?;
    match cli.command {
        Command::Simulate => {
            let s = pipeline::cmd_simulate(&cfg)?;
            println!("{} ledger entries\n{}", s.ledger_entries, s.report);
        }
        Command::BuildGraph => {
            let s = pipeline::cmd_build_graph(&cfg)?;
            println!("{} users, edges (follow, repost, comment) = {:?}, trained views = {:?}", s.users, s.edges, s.view_trained);
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!(
                "best epoch {} of {}, validation macro-F1 {:.4}, test macro-F1 {:.4}, {} trainable parameters",
                s.outcome.best_epoch.map_or("-".to_string(), |e| e.to_string()),
                s.outcome.logs.len(),
                s.validate.macro_f1,
                s.test.macro_f1,
                s.outcome.trainable_params
            );
        }
        Command::Evaluate => {
            let r = pipeline::cmd_evaluate(&cfg)?;
            println!("test macro-F1 {:.4}, accuracy {:.4}", r.macro_f1, r.accuracy);
        }
        Command::Ablate => {
            let s = pipeline::cmd_ablate(&cfg)?;
            print!("{}", s.table);
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
