use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swipt::auction::Engine;
use swipt::commands::{self, AuctionArgs, Split};
use swipt::config::{RunConfig, CONFIG_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "swipt",
    version,
    about = "Revenue-maximizing SWIPT auctions: datasets, surrogate training, auction rounds and benchmarks"
)]
struct Cli {
    /// TOML run configuration; relative paths are also looked up in the
    /// config directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding config files (swipt.toml is loaded by default).
    #[arg(long, global = true, env = CONFIG_DIR_ENV, hide_env_values = true)]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw and label a dataset.
    Generate {
        #[arg(long)]
        count: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the surrogate on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Weight-initialization and shuffle seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV; defaults next to the checkpoint.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score checkpoints on datasets; pass --model/--dataset in pairs.
    Evaluate {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long, required = true)]
        dataset: Vec<PathBuf>,
        /// all, train, validation or test
        #[arg(long, default_value = "all")]
        split: Split,
        /// Confusion-matrix CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one auction round.
    Auction {
        /// Sample seed of the network realization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file {"ir": [...], "er": [...]} replacing the drawn bids.
        #[arg(long)]
        bids: Option<PathBuf>,
        /// bnb, heuristic or dnn
        #[arg(long, default_value = "bnb")]
        engine: Engine,
        /// Checkpoint for the dnn engine.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Drop the least-good users until the predicted set is feasible.
        #[arg(long)]
        repair: bool,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time and score the allocation engines.
    Bench {
        /// Instances per network (at least 30).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Machine-readable rows (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> swipt::Result<()> {
    let config = RunConfig::resolve(cli.config.as_deref(), cli.config_dir.as_deref())?;
    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Generate { count, seed, out } => {
            commands::cmd_generate(&config, count, seed, &out, stdout)
        }
        Command::Train {
            dataset,
            seed,
            out,
            history,
        } => commands::cmd_train(&config, &dataset, seed, &out, history.as_deref(), stdout)
            .map(|_| ()),
        Command::Evaluate {
            model,
            dataset,
            split,
            out,
        } => {
            if model.len() != dataset.len() {
                return Err(swipt::Error::Config(
                    "--model and --dataset must be given the same number of times".into(),
                ));
            }
            let runs: Vec<_> = model.into_iter().zip(dataset).collect();
            commands::cmd_evaluate(
                &runs,
                split,
                config.training.split_seed,
                out.as_deref(),
                stdout,
            )
            .map(|_| ())
        }
        Command::Auction {
            seed,
            bids,
            engine,
            model,
            repair,
            out,
        } => {
            let args = AuctionArgs {
                seed,
                bids: bids.as_deref(),
                engine,
                model: model.as_deref(),
                repair,
                out: out.as_deref(),
            };
            commands::cmd_auction(&config, &args, stdout).map(|_| ())
        }
        Command::Bench {
            count,
            seed,
            model,
            out,
        } => commands::cmd_bench(
            &config,
            count,
            seed,
            model.as_deref(),
            out.as_deref(),
            stdout,
        )
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
