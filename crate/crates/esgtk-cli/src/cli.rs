//! Flag definitions and the `ESGTK_CONFIG` overlay.
//!
//! Precedence for every tunable: explicit flag, then the JSON config file
//! named by `ESGTK_CONFIG`, then the built-in default. The resolved values are
//! echoed into report metadata so a run can be reproduced from its output.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "esgtk",
    version,
    about = "ESG taxonomy enrichment and sustainability sentence classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a dataset file and report its shape.
    Ingest(IngestArgs),
    /// Stratified train/dev split of a taxonomy or sentence CSV.
    Split(SplitArgs),
    /// Train the concept classifier on a taxonomy CSV.
    TrainTaxonomy(TrainTaxonomyArgs),
    /// Rank concepts for new terms with a trained concept model.
    Enrich(EnrichArgs),
    /// Train the sentence classifier on a labeled sentence CSV.
    TrainSentences(TrainSentencesArgs),
    /// Label sentences with a trained sentence model.
    Classify(ClassifyArgs),
    /// Score a concept model on labeled terms.
    EvaluateTaxonomy(EvaluateTaxonomyArgs),
    /// Score a sentence model on a labeled sentence CSV.
    EvaluateSentences(EvaluateSentencesArgs),
    /// Merge an extension taxonomy into a base taxonomy.
    MergeTaxonomy(MergeTaxonomyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Taxonomy,
    Sentences,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Which schema the input file follows.
    #[arg(long, value_enum)]
    pub kind: DatasetKind,
    /// Input CSV path.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Write the validated rows back out as canonical CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Input CSV (taxonomy or sentence schema, detected from the header).
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Train fraction in (0, 1).
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV for the train portion.
    #[arg(long, value_name = "PATH")]
    pub out_train: PathBuf,
    /// Output CSV for the dev portion.
    #[arg(long, value_name = "PATH")]
    pub out_dev: PathBuf,
}

#[derive(Args)]
pub struct TrainTaxonomyArgs {
    /// Training taxonomy CSV.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Embedding backend id, e.g. test:64.
    #[arg(long)]
    pub backend: Option<String>,
    /// Output model path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Inverse L2 penalty weight (larger = weaker penalty).
    #[arg(long)]
    pub l2_strength: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Gradient-norm stopping threshold.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// L2-normalize embeddings before fitting and prediction.
    #[arg(long)]
    pub normalize_embeddings: bool,
}

#[derive(Args)]
pub struct EnrichArgs {
    /// Trained concept model path.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Text file with one candidate term per line.
    #[arg(long, value_name = "PATH")]
    pub terms: PathBuf,
    /// How many top concepts to emit per term.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Output JSONL path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainSentencesArgs {
    /// Training sentence CSV.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Embedding backend id, e.g. test:64.
    #[arg(long)]
    pub backend: Option<String>,
    /// Output model path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Width of the hidden layer.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

#[derive(Args)]
pub struct ClassifyArgs {
    /// Trained sentence model path.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Text file with one sentence per line.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output JSONL path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateTaxonomyArgs {
    /// Trained concept model path.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Embedding backend id; must match the one stored in the model.
    #[arg(long)]
    pub backend: Option<String>,
    /// Labeled taxonomy CSV to score against.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Write the full report JSON here as well.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateSentencesArgs {
    /// Trained sentence model path.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Embedding backend id; must match the one stored in the model.
    #[arg(long)]
    pub backend: Option<String>,
    /// Labeled sentence CSV to score against.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Write the full report JSON here as well.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct MergeTaxonomyArgs {
    /// Base taxonomy CSV.
    #[arg(long, value_name = "PATH")]
    pub base: PathBuf,
    /// Extension taxonomy CSV merged into the base.
    #[arg(long, value_name = "PATH")]
    pub extension: PathBuf,
    /// Output CSV for the merged taxonomy.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Optional JSON file named by `ESGTK_CONFIG`; any field left out falls back
/// to the built-in default. Unknown keys are rejected so typos surface
/// instead of silently using defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    pub top_k: Option<usize>,
    pub l2_strength: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub normalize_embeddings: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_dim: Option<usize>,
}

impl ConfigOverlay {
    pub fn from_env() -> anyhow::Result<Self> {
        match std::env::var_os("ESGTK_CONFIG") {
            None => Ok(Self::default()),
            Some(path) => {
                let path = PathBuf::from(path);
                let json = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading ESGTK_CONFIG file {}", path.display()))?;
                serde_json::from_str(&json)
                    .with_context(|| format!("parsing ESGTK_CONFIG file {}", path.display()))
            }
        }
    }
}
