use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pacc::models::ModelKind;
use pacc_cli::{
    cmd_bench, cmd_eval, cmd_simulate, cmd_swap, cmd_train, resolve_out_dir, CliError, RunConfig,
};

/// Position-aware CTR/CVR models on simulated position-biased logs.
#[derive(Parser)]
#[command(name = "pacc", version)]
struct Cli {
    /// Run configuration file; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides PACC_OUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate logs and a train/valid/test split.
    Simulate,
    /// Train one model on DATA/train.csv with early stopping on DATA/valid.csv.
    Train {
        /// Directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// pacc, pacc-pe, naive or posfeat; defaults to the config's model.kind.
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Ranking metrics of a checkpoint on a log file or DIR/test.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Log CSV, or a directory containing test.csv.
        #[arg(long)]
        data: PathBuf,
    },
    /// Position-swap scatter, impact curve and figures for a checkpoint.
    Swap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Log CSV, or a directory containing test.csv.
        #[arg(long)]
        data: PathBuf,
    },
    /// Simulate, train and evaluate every model over the seed grid.
    Bench,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.apply_seed();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let out = resolve_out_dir(cli.out.as_deref(), &cfg);
    match cli.command {
        Command::Simulate => {
            for path in cmd_simulate(&cfg, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train { data, model } => {
            let kind = model.unwrap_or(cfg.model.kind);
            let report = cmd_train(&cfg, &data, kind, &out)?;
            print!("{}", report.to_csv());
            if let Some(ckpt) = &report.checkpoint {
                println!("best epoch {}; wrote {}", report.best_epoch, ckpt.display());
            }
        }
        Command::Eval { checkpoint, data } => {
            let report = cmd_eval(&checkpoint, &data, &out)?;
            print!("{report}");
        }
        Command::Swap { checkpoint, data } => {
            let score = cmd_swap(&cfg, &checkpoint, &data, &out)?;
            println!("bias score {score:.6}; wrote figures to {}", out.display());
        }
        Command::Bench => {
            let (_, files) = cmd_bench(&cfg, &out, |line| eprintln!("{line}"))?;
            for path in files {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
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
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
