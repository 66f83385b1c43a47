use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "textcause",
    version,
    about = "Discover a codebook on a training split, freeze it, apply it once to the test split, estimate effects."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a JSONL or CSV file of documents into a corpus.
    Ingest(IngestArgs),
    /// Partition a corpus into training and test documents and issue a test lock.
    Split(SplitArgs),
    /// Fit a structural topic model on the training documents.
    FitStm(FitStmArgs),
    /// Apply a frozen topic model to the test documents and estimate effects (consumes the lock).
    ApplyG(EstimateArgs),
    /// Fit a supervised latent-feature model on the training documents.
    FitSibp(FitSibpArgs),
    /// Infer latent features of the test documents and estimate their effects (consumes the lock).
    InferTreatments(EstimateArgs),
    /// Apply any frozen codebook to the test documents and estimate effects (consumes the lock).
    Estimate(EstimateArgs),
    /// Enumerate randomizations of a potential-outcome table and look for analyst-induced interference.
    Aisv(AisvArgs),
    /// Simulate selection among noise codebooks, with and without a split.
    Overfit(OverfitArgs),
    /// Refit a topic model on random subsamples and record how its summaries move.
    Stability(StabilityArgs),
    /// Write a synthetic corpus with known structure.
    Synth(SynthArgs),
    /// Print a short summary of a corpus, split or model file.
    Describe(DescribeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Split(_) => "split",
            Command::FitStm(_) => "fit-stm",
            Command::ApplyG(_) => "apply-g",
            Command::FitSibp(_) => "fit-sibp",
            Command::InferTreatments(_) => "infer-treatments",
            Command::Estimate(_) => "estimate",
            Command::Aisv(_) => "aisv",
            Command::Overfit(_) => "overfit",
            Command::Stability(_) => "stability",
            Command::Synth(_) => "synth",
            Command::Describe(_) => "describe",
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// jsonl or csv; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, default_value = "id")]
    pub id_col: String,
    #[arg(long, default_value = "text")]
    pub text_col: String,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Column holding the treatment. JSONL reads "treatment" unless told otherwise.
    #[arg(long)]
    pub treatment_col: Option<String>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Whether the text is the outcome or the treatment of the analysis.
    #[arg(long)]
    pub text_role: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Share of documents used for discovery.
    #[arg(long, default_value_t = textcause::splitter::DEFAULT_PROPORTION)]
    pub proportion: f64,
    /// Integer-valued covariate to stratify on.
    #[arg(long)]
    pub strata: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TokenizerArgs {
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
    #[arg(long, default_value_t = 0.99)]
    pub max_df: f64,
    /// snowball or none.
    #[arg(long, default_value = "snowball")]
    pub stemmer: String,
    /// english or none.
    #[arg(long, default_value = "english")]
    pub stopwords: String,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitStmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Prevalence covariates; `treatment` names the treatment field.
    #[arg(long, value_delimiter = ',')]
    pub prevalence: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub max_em_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    /// Extra discovery documents that are not part of the split (a corpus file).
    #[arg(long)]
    pub aux_train: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitSibpArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_n2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_a2: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_beta2: f64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    #[arg(long)]
    pub aux_train: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// test (consumes the lock) or train (diagnostics only).
    #[arg(long, default_value = "test")]
    pub on: String,
    /// Topic models: none, covariate or average.
    #[arg(long, default_value = "average")]
    pub prior_mode: String,
    /// Feature models: probability above which a feature is switched on.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Feature models: empirical or uniform weighting of the other features.
    #[arg(long, default_value = "empirical")]
    pub weighting: String,
    /// Feature models: also estimate every pairwise interaction.
    #[arg(long)]
    pub interactions: bool,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label registry: one `index = label` line per topic or feature.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Add Benjamini-Hochberg adjusted p-values.
    #[arg(long)]
    pub fdr: bool,
    /// Reuse an already consumed test set. Every output is stamped invalidated.
    #[arg(long)]
    pub i_know_this_invalidates_inference: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AisvArgs {
    /// CSV with columns unit, under_treatment, under_control. Defaults to the stylized four-person table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// balanced or all.
    #[arg(long, default_value = "balanced")]
    pub design: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OverfitArgs {
    #[arg(long, default_value_t = 200)]
    pub n_units: usize,
    #[arg(long, default_value_t = 50)]
    pub n_noise_gs: usize,
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = textcause::splitter::DEFAULT_PROPORTION)]
    pub proportion: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StabilityArgs {
    /// Corpus file; a synthetic corpus is generated when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 13000)]
    pub synthetic_docs: usize,
    #[arg(long, default_value_t = 400)]
    pub synthetic_vocab: usize,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![5000, 1000])]
    pub sample_sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// cold_spectral, warm_spectral or warm_oracle.
    #[arg(long, default_value = "cold_spectral")]
    pub mode: String,
    /// 1-based topics to follow; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tracked_topics: Vec<usize>,
    /// greedy or hungarian.
    #[arg(long, default_value = "greedy")]
    pub matching: String,
    #[arg(long, default_value = "treatment")]
    pub covariate: String,
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// immigration (two-arm open-ended answers) or features (planted binary features with an outcome).
    #[arg(long, default_value = "immigration")]
    pub kind: String,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub effect: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DescribeArgs {
    pub path: PathBuf,
}
