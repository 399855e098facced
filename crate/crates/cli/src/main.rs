use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xlmimo_harness::commands::{self, DEFAULT_SHIFTS};
use xlmimo_harness::scenario::Split;
use xlmimo_harness::{CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "xlmimo", version, about = "Near-field XL-MIMO estimation and beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides training.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; CSV commands print to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-sample work.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        /// train or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train the FPN estimator.
    TrainFpn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the neural-calibration beamformer.
    TrainNc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate baselines and an optional trained model on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// FPN NMSE under distribution shifts.
    Ood {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated shifts, e.g. `snr_delta=-5,resample_sensing`.
        #[arg(long, default_value = DEFAULT_SHIFTS, allow_hyphen_values = true)]
        shifts: String,
    },
    /// Training-step memory and runtime, implicit vs unrolled.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen { common, .. }
            | Command::TrainFpn { common, .. }
            | Command::TrainNc { common, .. }
            | Command::Eval { common, .. }
            | Command::Ood { common, .. }
            | Command::Bench { common } => common,
        }
    }
}

fn required_out(common: &Common, what: &str) -> CliResult<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| CliError::Config(format!("{what} needs --out")))
}

fn run(cli: Cli) -> CliResult<()> {
    let common = cli.command.common();
    if common.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let cfg = ExperimentConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.training.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen { common, split } => {
            let split: Split = split.parse()?;
            let out = required_out(common, "gen")?;
            let summary = commands::cmd_gen(&cfg, seed, split, &out)?;
            println!("count {}", summary.count);
            println!("sha256 {}", summary.sha256);
            Ok(())
        }
        Command::TrainFpn { common, dataset } => {
            let out = required_out(common, "train-fpn")?;
            report_training(commands::cmd_train_fpn(&cfg, seed, dataset, &out)?);
            Ok(())
        }
        Command::TrainNc { common, dataset } => {
            let out = required_out(common, "train-nc")?;
            report_training(commands::cmd_train_nc(&cfg, seed, dataset, &out)?);
            Ok(())
        }
        Command::Eval { common, dataset, model } => {
            commands::cmd_eval(&cfg, seed, dataset, model.as_deref(), common.out.as_deref()).map(drop)
        }
        Command::Ood { common, model, shifts } => {
            commands::cmd_ood(&cfg, seed, model, shifts, common.out.as_deref()).map(drop)
        }
        Command::Bench { common } => commands::cmd_bench(&cfg, seed, common.out.as_deref()).map(drop),
    })
}

fn report_training(summary: commands::TrainSummary) {
    println!("model {}", display(&summary.model_path));
    println!("history {}", display(&summary.loss_path));
    println!("epochs {}", summary.history.len());
    if let Some(last) = summary.history.last() {
        println!("final {last}");
    }
    println!("sha256 {}", summary.model_sha256);
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
