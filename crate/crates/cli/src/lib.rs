//! `robkit` command-line front end: every pipeline stage as a subcommand
//! driven by one TOML run configuration.

pub mod config;
pub mod error;
pub mod layout;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robkit_core::baselines::LossKind;
use serde_json::Value;

pub use config::{Overrides, RunConfig, TinyTask};
pub use error::CliError;
use stages::Ctx;

#[derive(Debug, Parser)]
#[command(name = "robkit", version, about = "Risk-of-bias dataset construction and model evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML). Defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Similarity a support text must exceed to be matched.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Sentences of context on each side of the matched sentence.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineKind {
    Lr,
    Svm,
}

impl From<BaselineKind> for LossKind {
    fn from(k: BaselineKind) -> Self {
        match k {
            BaselineKind::Lr => LossKind::Logistic,
            BaselineKind::Svm => LossKind::Hinge,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and segment articles into `articles.jsonl`.
    Ingest {
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalize review tables into support records.
    ParseReviews {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the sentence index, or print statistics of an existing one.
    #[command(args_conflicts_with_subcommands = true)]
    Index {
        #[command(subcommand)]
        action: Option<IndexAction>,
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match support texts to sentences and emit dataset instances.
    Annotate {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        articles: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified train/test split by bias type.
    Split {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    TrainBaseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[arg(long)]
        train: Option<PathBuf>,
        /// Also fit one model per bias type.
        #[arg(long)]
        per_bias_type: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    TrainTiny {
        #[arg(long, value_enum)]
        task: TinyTask,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict with every trained model on the test split.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query a chat-completion endpoint, or replay a previous log.
    LlmEval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate predictions into CSV, JSON and Markdown reports.
    Report {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept artifacts produced under different configurations.
        #[arg(long)]
        force: bool,
    },
    /// Run every stage in order.
    Pipeline,
}

#[derive(Debug, Subcommand)]
pub enum IndexAction {
    Stats {
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

pub fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let overrides = Overrides {
        seed: global.seed,
        threshold: global.threshold,
        window: global.window,
        run_dir: global.run_dir.clone(),
    };
    RunConfig::load(global.config.as_deref(), &overrides)
}

pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let ctx = Ctx::new(load_config(&cli.global)?);
    match &cli.command {
        Command::Ingest { articles, out } => stages::ingest(&ctx, articles.as_deref(), out.as_deref()),
        Command::ParseReviews { reviews, out } => stages::parse_reviews(&ctx, reviews.as_deref(), out.as_deref()),
        Command::Index { action: Some(IndexAction::Stats { index }), .. } => stages::index_stats(&ctx, index.as_deref()),
        Command::Index { action: None, articles, out } => stages::index_build(&ctx, articles.as_deref(), out.as_deref()),
        Command::Annotate { records, articles, index, out } => {
            stages::annotate(&ctx, records.as_deref(), articles.as_deref(), index.as_deref(), out.as_deref())
        }
        Command::Split { dataset, out } => stages::split(&ctx, dataset.as_deref(), out.as_deref()),
        Command::TrainBaseline { kind, train, per_bias_type, out } => {
            stages::train_baseline(&ctx, (*kind).into(), train.as_deref(), *per_bias_type, out.as_deref())
        }
        Command::TrainTiny { task, train, dev, out } => {
            stages::train_tiny(&ctx, *task, train.as_deref(), dev.as_deref(), out.as_deref())
        }
        Command::Eval { dataset, models, out } => stages::eval(&ctx, dataset.as_deref(), models.as_deref(), out.as_deref()),
        Command::LlmEval { dataset, train, shots, replay, out } => stages::llm_eval(
            &ctx,
            dataset.as_deref(),
            train.as_deref(),
            *shots,
            replay.as_deref(),
            out.as_deref(),
        ),
        Command::Report { dataset, predictions, out, force } => {
            stages::report(&ctx, dataset.as_deref(), predictions.as_deref(), out.as_deref(), *force)
        }
        Command::Pipeline => stages::pipeline(&ctx),
    }
}

/// Parse `args`, run, and return the process exit code. Success prints a
/// JSON summary on stdout; failure prints a JSON error on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Validation(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
