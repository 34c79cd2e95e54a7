//! `steerlab`: extract steering vectors, generate steered summaries, score
//! them and run strength sweeps.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.

mod commands;
mod config;
mod resolve;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steerlab_core::scorers::LemmaMode;

#[derive(Debug, Parser)]
#[command(name = "steerlab", version, about = "Activation steering experiments for summarization")]
pub struct Cli {
    /// Flat `key = value` file; keys are long flag names. Explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for sampling, pair construction and decoding.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a steering vector from a contrast-pair file.
    Extract(ExtractArgs),
    /// Generate one summary, optionally steered and/or prompted.
    Summarize(SummarizeArgs),
    /// Score a file of summaries.
    Evaluate(EvaluateArgs),
    /// Run a strength sweep over sampled articles.
    Sweep(SweepArgs),
    /// Aggregate sweep results into tables and plot series.
    Report(ReportArgs),
    /// Convert external data into steerlab formats.
    #[command(subcommand)]
    Convert(ConvertCommand),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Contrast pairs (`caa-pairs/1`).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Expected behavior; must match the pair file when given.
    #[arg(long)]
    pub behavior: Option<String>,
    /// `tiny`, `uniform`, a tiny-model fixture path, or `adapter:<command>`.
    #[arg(long, default_value = "tiny")]
    pub model: String,
    /// Residual layer; the model's default when omitted.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerationArgs {
    #[arg(long, default_value = "tiny")]
    pub model: String,
    #[arg(long = "max-tokens", default_value_t = 150)]
    pub max_tokens: usize,
    /// Sample at this temperature (seeded by --seed) instead of greedy decoding.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Positions that receive the steering addition: `generated` or `all`.
    #[arg(long, default_value = "generated")]
    pub policy: String,
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// Comma-separated metric groups, or `all`.
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Porter-stem tokens before ROUGE matching.
    #[arg(long)]
    pub stem: bool,
    /// Lemma topic scoring: `binary` or `frequency`.
    #[arg(long = "lemma-mode", default_value = "binary")]
    pub lemma_mode: String,
    #[arg(long = "sentiment-adapter")]
    pub sentiment_adapter: Option<String>,
    #[arg(long = "toxicity-adapter")]
    pub toxicity_adapter: Vec<String>,
    #[arg(long = "readability-adapter")]
    pub readability_adapter: Option<String>,
    #[arg(long = "readability-grade-adapter")]
    pub readability_grade_adapter: Option<String>,
    #[arg(long = "embedder-adapter")]
    pub embedder_adapter: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long = "article-file")]
    pub article_file: PathBuf,
    #[arg(long)]
    pub vector: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub strength: f64,
    #[arg(long = "prompt-behavior")]
    pub prompt_behavior: Option<String>,
    #[arg(long = "prompt-variant", default_value = "neutral")]
    pub prompt_variant: String,
    #[arg(long = "topic-description")]
    pub topic_description: Option<String>,
    /// Print a JSON record with scores instead of the bare summary.
    #[arg(long)]
    pub score: bool,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON lines with a `summary` field and optional `article_id`.
    #[arg(long)]
    pub summaries: PathBuf,
    /// Reference records (`newts-records/1`) for ROUGE, similarity and topic metrics.
    #[arg(long)]
    pub newts: Option<PathBuf>,
    /// Topic-model artifact directory.
    #[arg(long)]
    pub lda: Option<PathBuf>,
    /// Perplexity scorer.
    #[arg(long, default_value = "tiny")]
    pub model: String,
    /// Per-summary records go here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `sentiment`, `toxicity`, `readability` or `topic:<tid>`.
    #[arg(long)]
    pub behavior: String,
    /// Steering vector files; topic sweeps take one per target topic.
    #[arg(long)]
    pub vector: Vec<PathBuf>,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub newts: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Warn when the record file is not the complete split.
    #[arg(long = "full-split")]
    pub full_split: bool,
    #[arg(long)]
    pub lda: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    pub articles: usize,
    /// Comma-separated strengths; must include 0.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Add λ = ±5 to the grid.
    #[arg(long)]
    pub extremes: bool,
    /// Comma-separated subset of steer, prompt, combined.
    #[arg(long, default_value = "steer,prompt,combined")]
    pub modes: String,
    /// Perplexity scorer; the generation model when omitted.
    #[arg(long = "perplexity-model")]
    pub perplexity_model: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Start over instead of continuing an existing result file.
    #[arg(long = "no-resume")]
    pub no_resume: bool,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result directory or `results.jsonl` file.
    #[arg(long)]
    pub results: PathBuf,
    /// Output directory; the results directory when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Row label; read from the run manifest when omitted.
    #[arg(long)]
    pub behavior: Option<String>,
    /// Restrict plot series to one property family.
    #[arg(long)]
    pub property: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ConvertCommand {
    /// NEWTS CSV export to `newts-records/1`.
    NewtsCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Topic contrast pairs from topic representations or LDA artifacts.
    TopicPairs {
        #[arg(long)]
        tid: u32,
        /// `tid<TAB>kind<TAB>item[<TAB>weight]` file.
        #[arg(long)]
        representations: Option<PathBuf>,
        /// Use the top words of an LDA artifact directory instead.
        #[arg(long)]
        lda: Option<PathBuf>,
        #[arg(long, default_value = "words")]
        kind: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Polar pairs from two one-text-per-line pools.
    PolarPairs {
        #[arg(long)]
        behavior: String,
        #[arg(long)]
        positive: PathBuf,
        #[arg(long)]
        negative: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

impl ScoringArgs {
    pub fn lemma_mode(&self) -> anyhow::Result<LemmaMode> {
        match self.lemma_mode.as_str() {
            "binary" => Ok(LemmaMode::Binary),
            "frequency" => Ok(LemmaMode::Frequency),
            other => Err(resolve::usage(format!("unknown lemma mode `{other}` (expected binary or frequency)"))),
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<resolve::Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<steerlab_core::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEERLAB_LOG", "warn")).init();
    let raw: Vec<OsString> = std::env::args_os().collect();
    let cli = match config::parse_with_config(raw) {
        Ok(cli) => cli,
        Err(config::ParseFailure::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
        Err(config::ParseFailure::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
