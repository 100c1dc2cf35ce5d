mod commands;
mod config;
mod layout;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualrank::par::Exec;
use dualrank::{Error, Result};

use commands::{align, eval, train, Ctx};
use config::RunConfig;

/// Two-stage job recommendation: synthesize data, train the dual-expert
/// model, align it under a qualification constraint and evaluate.
///
/// Any config value can be overridden as `--section.key=value`.
#[derive(Debug, Parser)]
#[command(name = "dualrank", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run the data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate candidates, jobs, annotations and batches.
    Synth,
    /// Stage-I multi-task training.
    Train {
        /// Train on preference supervision only.
        #[arg(long)]
        pref_only: bool,
        /// Continue from the last saved epoch.
        #[arg(long)]
        resume: bool,
        /// Skip the finite-difference check that runs before training.
        #[arg(long)]
        skip_gradcheck: bool,
    },
    /// Finite-difference gradient check on random small models.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        draws: usize,
    },
    /// Stage-II constrained alignment of a stage-1 checkpoint.
    Align {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output name under aligned/ (default eps_<epsilon>).
        #[arg(long)]
        name: Option<String>,
    },
    /// Test-split Recall@K and NDCG@K.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        task: eval::TaskSel,
        #[arg(long, value_enum, default_value_t)]
        mode: eval::Mode,
        #[arg(long)]
        name: Option<String>,
    },
    /// Align and evaluate over a list of epsilons.
    Sweep {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated; defaults to eval.sweep_epsilons.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Top-K agreement between two checkpoints' preference rankings.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Render a CSV output as an SVG line chart.
    Plot {
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// x column (with --y).
        #[arg(long, requires = "y")]
        x: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "x")]
        y: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', requires = "x")]
        group: Option<Vec<String>>,
    },
    /// synth, train (both variants), align, eval, sweep and compare in one go.
    Pipeline,
    /// Print the resolved configuration.
    Config,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Config(_) => 1,
        Error::Numerical(_) | Error::Infeasible { .. } => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
    }
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let ctx = Ctx::new(cfg, exec);
    match cli.command {
        Command::Synth => commands::synth::run(&ctx),
        Command::Train { pref_only, resume, skip_gradcheck } => {
            train::run(&ctx, &train::TrainArgs { pref_only, resume, skip_gradcheck })
        }
        Command::Gradcheck { draws } => train::gradcheck(&ctx, draws),
        Command::Align { checkpoint, name } => align::run(&ctx, &align::AlignArgs { checkpoint, name }).map(|_| ()),
        Command::Eval { checkpoint, task, mode, name } => eval::run(&ctx, &eval::EvalArgs { checkpoint, task, mode, name }),
        Command::Sweep { checkpoint, epsilons } => align::sweep(&ctx, &align::SweepArgs { checkpoint, epsilons }),
        Command::Compare { a, b, ks, name } => eval::compare(&ctx, &eval::CompareArgs { a, b, ks, name }),
        Command::Plot { input, output, x, y, group } => {
            let spec = x.map(|x| plot::PlotSpec { x, ys: y.unwrap_or_default(), group: group.unwrap_or_default() });
            let out = plot::plot_file(&input, output.as_deref(), spec)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Pipeline => commands::pipeline(&ctx),
        Command::Config => {
            print!("{}", ctx.cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match config::extract_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
