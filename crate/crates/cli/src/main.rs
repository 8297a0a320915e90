mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdgkit::llm::LlmError;

/// SDG text detection toolkit.
#[derive(Debug, Parser)]
#[command(name = "sdgkit", version, about)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a JSONL or CSV corpus, validate it and write normalized JSONL.
    Ingest(IngestArgs),
    /// Split a corpus into eligible and rejected documents by token count.
    Filter(FilterArgs),
    /// Seeded (optionally stratified) train/test split.
    Split(SplitArgs),
    /// Label documents with taxonomy queries, optionally expanding terms.
    TaxoSearch(TaxoSearchArgs),
    /// Fit a vectorizer and classifier and save the model file.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Train and rank every method x vectorizer on one split.
    CompareMethods(CompareMethodsArgs),
    /// Write per-document predicted label sets.
    Predict(PredictArgs),
    /// Run a chat-completion prompt protocol over a corpus or name list.
    LlmRun(LlmRunArgs),
    /// Overlap statistics and detection rates for two result sets.
    Compare(CompareArgs),
    /// Few-shot identification table from truth labels and predictions.
    Fewshot(FewshotArgs),
    /// Render detection-rate tables as CSV, JSON or a grouped bar SVG.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusIn {
    /// Input corpus (.jsonl or .csv).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Force the input format (jsonl or csv) instead of using the extension.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Minimum token count after preprocessing.
    #[arg(long, default_value_t = sdgkit::corpus::DEFAULT_MIN_TOKENS)]
    pub min_tokens: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejected_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitOpts {
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain shuffle instead of stratifying on label sets.
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[command(flatten)]
    pub split: SplitOpts,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TaxoSearchArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Term list CSV (`sdg,term`); the bundled seed list when absent.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// word2vec text embeddings used to expand each term.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.6)]
    pub min_sim: f64,
    /// Run one JSON query instead of the taxonomy and print matching ids.
    #[arg(long)]
    pub query: Option<String>,
    /// Per-document label CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the (expanded) taxonomy here.
    #[arg(long)]
    pub taxonomy_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    /// logistic_regression, multinomial_nb or linear_svm.
    #[arg(long)]
    pub method: Option<String>,
    /// tfidf, word2vec or doc2vec.
    #[arg(long)]
    pub vectorizer: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Classifier seed.
    #[arg(long = "train-seed")]
    pub train_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Uniform decision threshold stored in the model.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareMethodsArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Comma-separated methods (default: all three).
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated vectorizers (default: tfidf,word2vec).
    #[arg(long)]
    pub vectorizers: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Override the model's thresholds with one uniform value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LlmRunArgs {
    /// experiment1, experiment2 or fewshot_tag.
    #[arg(long)]
    pub protocol: String,
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Plain-text file with one company name per line (experiment2).
    #[arg(long, conflicts_with = "input")]
    pub names: Option<PathBuf>,
    /// Labeled example corpus for fewshot_tag.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// Tag list for fewshot_tag, e.g. `2,7`.
    #[arg(long)]
    pub tags: Option<String>,
    /// experiment1: cut the first answer at "however" locally instead of
    /// sending the second prompt.
    #[arg(long)]
    pub local_however: bool,
    /// Serve from the cache only; never contact the endpoint.
    #[arg(long)]
    pub replay: bool,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub requests_per_second: Option<f64>,
    #[arg(long)]
    pub token_budget: Option<usize>,
    /// All records as JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `id,labels` CSV.
    #[arg(long)]
    pub detections_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SideArgs {
    /// First result set (`id,labels` CSV or JSONL records).
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long, default_value = "A")]
    pub name_a: String,
    #[arg(long, default_value = "B")]
    pub name_b: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sides: SideArgs,
    #[arg(long)]
    pub b: PathBuf,
    /// Plural noun for the compared items.
    #[arg(long, default_value = "Companies")]
    pub items: String,
    /// Also report the intersection that counts two empty sets as agreement.
    #[arg(long)]
    pub include_empty: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FewshotArgs {
    /// Single-label truth corpus.
    #[arg(long)]
    pub truth: PathBuf,
    /// Predictions (`id,labels` CSV or JSONL records).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub tags: String,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub sides: SideArgs,
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// csv, json or svg.
    #[arg(long, default_value = "svg")]
    pub format: String,
    #[arg(long, default_value = "Detection Rate by SDG")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad or missing arguments discovered after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Some protocol inputs failed because of the endpoint or the network.
#[derive(Debug)]
pub struct TransportFailures(pub usize);

impl fmt::Display for TransportFailures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} input(s) failed with transport errors", self.0)
    }
}

impl std::error::Error for TransportFailures {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<TransportFailures>() {
            return EXIT_TRANSPORT;
        }
        if cause.downcast_ref::<LlmError>().is_some_and(LlmError::is_transport) {
            return EXIT_TRANSPORT;
        }
    }
    EXIT_INPUT
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
