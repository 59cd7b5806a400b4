mod commands;
mod pgm;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or settings; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl From<mgflow::Error> for CliError {
    fn from(e: mgflow::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mgflow", version, about = "Neural-operator surrogates for two-phase reservoir flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Floating-point precision of model arithmetic.
    #[arg(long, value_parser = ["f32", "f64"])]
    pub precision: Option<String>,
    /// File of `key=value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any setting, e.g. `--set sim.mu_o=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    pub set: Vec<(String, String)>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

#[derive(Subcommand)]
enum Command {
    /// Sample permeability fields and simulate them into a dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Cells per side.
        #[arg(long)]
        grid: Option<usize>,
        /// Simulated days.
        #[arg(long)]
        days: Option<usize>,
        /// Also store K repeated once per day.
        #[arg(long)]
        repeat_k: bool,
    },
    /// Train a surrogate on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Operator architecture [default: mgno].
        #[arg(long, value_parser = ["fno", "mgno"])]
        model: Option<String>,
        /// Relative L2 or H1 training loss [default: l2].
        #[arg(long, value_parser = ["l2", "h1"])]
        loss: Option<String>,
        /// Predicted field [default: p].
        #[arg(long, value_parser = ["p", "sw"])]
        target: Option<String>,
        /// [default: 500]
        #[arg(long)]
        epochs: Option<usize>,
        /// Supervised (sample, day) pairs per step [default: 50].
        #[arg(long)]
        batch_size: Option<usize>,
        /// Adam learning rate [default: 1e-4].
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Per-day validation errors, heatmaps and timing of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Evaluate the validation split or every sample.
        #[arg(long, value_parser = ["val", "all"], default_value = "val")]
        split: String,
        /// Samples rendered as heatmaps.
        #[arg(long, default_value_t = 1)]
        heatmaps: usize,
    },
    /// Errors of a checkpoint on a re-simulated, longer horizon.
    Rollout {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory whose validation samples are re-simulated.
        #[arg(long)]
        data: PathBuf,
        /// Horizon of the re-simulated series.
        #[arg(long)]
        days: Option<usize>,
        /// Validation samples to re-simulate; all when omitted.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn flags(common: &Common, extra: Vec<(&str, Option<String>)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = common.set.clone();
    let named = [("seed", common.seed.map(|s| s.to_string())), ("precision", common.precision.clone())];
    for (k, v) in named.into_iter().chain(extra) {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common, n, grid, days, repeat_k } => {
            let f = flags(
                &common,
                vec![
                    ("n", n.map(|v| v.to_string())),
                    ("grid", grid.map(|v| v.to_string())),
                    ("days", days.map(|v| v.to_string())),
                    ("repeat_k", repeat_k.then(|| "true".to_string())),
                ],
            );
            commands::gen_data(&common, f)
        }
        Command::Train { common, data, model, loss, target, epochs, batch_size, lr } => {
            let f = flags(
                &common,
                vec![
                    ("model", model),
                    ("loss", loss),
                    ("target", target),
                    ("epochs", epochs.map(|v| v.to_string())),
                    ("batch_size", batch_size.map(|v| v.to_string())),
                    ("lr", lr.map(|v| v.to_string())),
                ],
            );
            commands::train(&common, &data, f)
        }
        Command::Eval { common, checkpoint, data, split, heatmaps } => {
            let f = flags(&common, vec![]);
            commands::eval(&common, &checkpoint, &data, &split, heatmaps, f)
        }
        Command::Rollout { common, checkpoint, data, days, samples } => {
            let f = flags(
                &common,
                vec![("days", days.map(|v| v.to_string())), ("samples", samples.map(|v| v.to_string()))],
            );
            commands::rollout(&common, &checkpoint, &data, f)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
