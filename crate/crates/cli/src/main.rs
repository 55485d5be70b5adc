//! `ddeval` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddeval_core::{ErrorKind, Metric};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "ddeval",
    version,
    about = "Estimate and benchmark distributional discrepancy of text generators"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path. Commands that print JSON write it here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated metric list: dd,bleu,selfbleu,lm,rlm,fed.
    #[arg(long, global = true, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
}

#[derive(Debug, Args, Default)]
struct ClassifierFlags {
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Longest sentence the classifier accepts, terminator included.
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct TextFlags {
    /// Longest accepted sentence in tokens.
    #[arg(long, default_value_t = ddeval_core::corpus::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    #[arg(long)]
    lowercase: bool,
    /// Words seen fewer times map to UNK.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an add-alpha Markov chain to a corpus file (one sentence per line).
    Fit {
        corpus: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        text: TextFlags,
    },
    /// Sample sentences from a model file.
    Sample {
        model: PathBuf,
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// Exact (or Monte-Carlo) DD between two model files.
    Oracle {
        model_a: PathBuf,
        model_b: PathBuf,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Train the real-vs-generated classifier and report the DD estimate.
    TrainClf {
        real: PathBuf,
        generated: PathBuf,
        /// Also save the best model here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[command(flatten)]
        text: TextFlags,
    },
    /// Score a generated corpus against a real one with the selected metrics.
    Eval {
        real: PathBuf,
        generated: PathBuf,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[command(flatten)]
        text: TextFlags,
    },
    /// Run a full experiment config and write the rank report.
    Rank {
        /// Also write the per-cell metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        real_samples: Option<usize>,
        #[arg(long)]
        generated_samples: Option<usize>,
        #[command(flatten)]
        classifier: ClassifierFlags,
    },
    /// Score one generator of a config across temperatures.
    Sweep {
        /// Family name; the first family by default.
        #[arg(long)]
        family: Option<String>,
        /// Generator index within the family.
        #[arg(long, default_value_t = 0)]
        generator: usize,
        #[arg(long, value_delimiter = ',')]
        temperatures: Option<Vec<f64>>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        real_samples: Option<usize>,
        #[arg(long)]
        generated_samples: Option<usize>,
        #[command(flatten)]
        classifier: ClassifierFlags,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDEVAL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
