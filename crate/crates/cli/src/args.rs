//! Command-line flags. Every subcommand's flag struct serializes into the
//! provenance record of what it writes.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lacuna", version, about = "Restore and attribute damaged Greek inscriptions and papyri")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Parse and normalize a TSV or JSONL corpus into records.
    Ingest(IngestArgs),
    /// Build chat-format training or evaluation examples.
    BuildDataset(BuildDatasetArgs),
    /// Write a train/val/test split manifest.
    Split(SplitArgs),
    /// Train the character n-gram baseline.
    TrainBaseline(TrainArgs),
    /// Propose fillers for a gap of known letter count.
    Restore(RestoreArgs),
    /// Rank the likely places of origin.
    Attribute(AttributeArgs),
    /// Estimate the date of a text.
    Date(DateArgs),
    /// Score candidate lists against gold examples.
    Evaluate(EvaluateArgs),
    /// TIES-merge parameter vectors stored as single-column CSV files.
    MergeDemo(MergeArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::BuildDataset(_) => "build-dataset",
            Command::Split(_) => "split",
            Command::TrainBaseline(_) => "train-baseline",
            Command::Restore(_) => "restore",
            Command::Attribute(_) => "attribute",
            Command::Date(_) => "date",
            Command::Evaluate(_) => "evaluate",
            Command::MergeDemo(_) => "merge-demo",
            Command::Serve(_) => "serve",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Corpus file (`.tsv` or `.jsonl`).
    #[arg(long)]
    pub input: PathBuf,
    /// Two-column TSV mapping raw place names to canonical labels.
    #[arg(long)]
    pub places: Option<PathBuf>,
    /// Records JSONL to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Per-record error report (defaults to `<output>.errors.jsonl`).
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Restore,
    Place,
    Date,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionArg {
    Edited,
    Diplomatic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PartArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildDatasetArgs {
    /// Records JSONL from `ingest`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Examples JSONL to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Text versions restoration gaps are drawn from.
    #[arg(long, value_enum, default_value = "both")]
    pub versions: VersionArg,
    #[arg(long, default_value_t = 1)]
    pub letters_min: usize,
    #[arg(long, default_value_t = 20)]
    pub letters_max: usize,
    /// Fraction of preserved letters replaced by `-` (0.05 to 0.25).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Permute `·`-separated sentences.
    #[arg(long)]
    pub shuffle: bool,
    /// Random truncation window, in chars.
    #[arg(long, requires = "truncate_max")]
    pub truncate_min: Option<usize>,
    #[arg(long, requires = "truncate_min")]
    pub truncate_max: Option<usize>,
    #[arg(long, default_value = "train")]
    pub split_tag: String,
    /// Keep only the records of one part of this split manifest.
    #[arg(long, requires = "part")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, requires = "manifest")]
    pub part: Option<PartArg>,
    /// Build an evaluation set with this many samples per gap length
    /// instead of one example per record (restore only).
    #[arg(long)]
    pub eval_per_length: Option<usize>,
    /// Minimum source length for evaluation samples, in chars.
    #[arg(long, default_value_t = lacuna::metrics::MIN_SOURCE_CHARS)]
    pub min_chars: usize,
    /// Drop examples outside the 75..=847 token window (chars / 2.5 proxy).
    #[arg(long)]
    pub filter_tokens: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    /// Ids ending in 3 are test, ending in 4 are held out.
    PhiShared,
    Train95Test5,
    Train80Val10Test10,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// One id per line.
    #[arg(long, conflicts_with = "records", required_unless_present = "records")]
    pub ids: Option<PathBuf>,
    /// Take the ids from a records JSONL instead.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Manifest JSON (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = lacuna::baseline::DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long)]
    pub output: PathBuf,
    /// Train only on the `train` part of this split manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Remote chat-completion endpoint flags.
#[derive(Debug, Clone, Args, Serialize)]
pub struct EndpointArgs {
    /// Base URL of an OpenAI-style API; `--model` then names the remote model.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Outputs requested per prompt.
    #[arg(long, default_value_t = 60)]
    pub n_best: usize,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Extra request field, `key=value` (value parsed as JSON when it can be).
    #[arg(long = "decode", value_name = "KEY=VALUE")]
    pub decode: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Inscription,
    Papyrus,
}

#[derive(Debug, Args, Serialize)]
pub struct RestoreArgs {
    /// Text with a `[N letters missing]` placeholder, or plain text with
    /// `--start` and `--letters`.
    #[arg(long, conflicts_with = "examples")]
    pub text: Option<String>,
    /// Char offset of the gap in `--text`.
    #[arg(long, requires = "letters", requires = "text")]
    pub start: Option<usize>,
    #[arg(long, requires = "start")]
    pub letters: Option<usize>,
    /// Batch mode: examples JSONL; candidates go to `--output` as a cache.
    #[arg(long, requires = "output")]
    pub examples: Option<PathBuf>,
    /// Baseline model file, or the remote model name with `--endpoint`.
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub remote: EndpointArgs,
    #[arg(long, default_value_t = 60)]
    pub beam_width: usize,
    #[arg(long, default_value_t = lacuna::metrics::TOP_K_RESTORE)]
    pub top_n: usize,
    #[arg(long, value_enum, default_value = "inscription")]
    pub kind: KindArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AttributeArgs {
    #[arg(long, conflicts_with = "examples", required_unless_present = "examples")]
    pub text: Option<String>,
    #[arg(long, requires = "output")]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub remote: EndpointArgs,
    /// Labels to report.
    #[arg(long, default_value_t = lacuna::metrics::TOP_K_PLACE)]
    pub top: usize,
    #[arg(long, value_enum, default_value = "inscription")]
    pub kind: KindArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DateArgs {
    #[arg(long, conflicts_with = "examples", required_unless_present = "examples")]
    pub text: Option<String>,
    #[arg(long, requires = "output")]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub remote: EndpointArgs,
    #[arg(long, value_enum, default_value = "papyrus")]
    pub kind: KindArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Gold examples JSONL.
    #[arg(long)]
    pub gold: PathBuf,
    /// Candidate cache JSONL; may be repeated.
    #[arg(long, required = true)]
    pub candidates: Vec<PathBuf>,
    /// Report JSON (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-sample CSV.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MergeArgs {
    #[arg(long)]
    pub base: PathBuf,
    /// Fine-tuned vector; repeat for each.
    #[arg(long, required = true)]
    pub tuned: Vec<PathBuf>,
    #[arg(long, default_value_t = lacuna::merge::DEFAULT_DENSITY)]
    pub density: f64,
    #[arg(long, default_value_t = lacuna::merge::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Baseline model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Remote model name served by `--endpoint`.
    #[arg(long, requires = "endpoint")]
    pub endpoint_model: Option<String>,
    #[command(flatten)]
    pub remote: EndpointArgs,
    /// Concurrent model calls; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 60)]
    pub beam_width: usize,
}
