use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "priorscrub",
    version,
    about = "Detect and remove references to prior studies in radiology reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove prior references from a JSONL report corpus
    Scrub(ScrubArgs),
    /// Emit token KEEP/REMOVE labels and spans for each report
    Detect(DetectArgs),
    /// Rewrite flagged sentences through a completion endpoint
    Rewrite(RewriteArgs),
    /// Three-way token diff F1 of modified reports against ground truth
    ScoreF1(ScoreArgs),
    /// Keyword tables, before/after comparison, and dataset splits
    Stats(StatsArgs),
    /// Exact dot-product retrieval of reports or sentence composites
    Retrieve(RetrieveArgs),
    /// Semantic metrics over supplied embeddings and entity annotations
    Metrics(MetricsArgs),
    /// Patient-grouped shuffled train/test split
    Split(SplitArgs),
    /// Serve the review API (and optionally a static UI bundle)
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArg {
    /// Lexicon TOML file; the bundled lexicon is used when omitted
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScrubArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub lexicon: LexiconArg,
    /// Write run totals as JSON here
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub lexicon: LexiconArg,
    /// Also project labels onto subword units using this vocabulary (one piece per line)
    #[arg(long)]
    pub subword_vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Rewrite config TOML; defaults apply to omitted fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Use the offline mock transport instead of HTTP
    #[arg(long)]
    pub mock: bool,
    /// Per-sentence results (JSONL)
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, default_value_t = priorscrub::detect::DEFAULT_FLAG_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub lexicon: LexiconArg,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub modified: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Write the full record, per-report scores included, here
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(subcommand)]
    pub command: StatsCommand,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Keyword frequency table
    Count(CountArgs),
    /// Keyword instances before and after, with reduction
    Diff(DiffArgs),
    /// Same as the top-level `split`
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Relative-frequency denominator; defaults to the number of reports read
    #[arg(long)]
    pub denominator: Option<u64>,
    /// Count every surface variant, ignoring the `change` qualifier rule
    #[arg(long)]
    pub raw: bool,
    /// Write the table as JSON here
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArg,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArg,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Report,
    Sentences,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Score,
    Corpus,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Embedding store to search
    #[arg(long)]
    pub store: PathBuf,
    /// Query embeddings, as a store whose ids name the queries
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Sentence order inside composites
    #[arg(long, value_enum, default_value = "score")]
    pub composite_order: OrderArg,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predicted reports (JSONL)
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth reports (JSONL)
    #[arg(long)]
    pub truth: PathBuf,
    /// Report-vector stores for predictions and ground truth
    #[arg(long, num_args = 2, value_names = ["PRED", "TRUTH"])]
    pub semb_store: Option<Vec<PathBuf>>,
    /// Directory with `pred/<id>.embs` and `truth/<id>.embs` token stores
    #[arg(long)]
    pub token_emb_dir: Option<PathBuf>,
    /// Entity files for predictions and ground truth
    #[arg(long, num_args = 2, value_names = ["PRED", "TRUTH"])]
    pub entities: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: LexiconArg,
    /// Decision log; created when missing
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8600")]
    pub bind: SocketAddr,
    /// Directory with a built UI bundle, served at `/`
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value = "annotator")]
    pub annotator: String,
    /// Export destination; defaults to `<session>.export.jsonl`
    #[arg(long)]
    pub export: Option<PathBuf>,
}
