use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "densekit", version, about = "Diagnose and densify noisy NER corpora")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit JSON (the default).
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// Emit CSV where the report is tabular.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Write the report here instead of stdout.
    #[arg(long, short = 'o', global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Six structural features of a corpus.
    Metrics(MetricsArgs),
    /// Span-level precision, recall and F1 of predictions against gold labels.
    Score(ScoreArgs),
    /// Build density-family or stratified subsets.
    Resample(ResampleArgs),
    /// Pearson and Spearman correlation of each feature with F1.
    Correlate(CorrelateArgs),
    /// Morris screening and Sobol indices of F1 over the features.
    Gsa(GsaArgs),
    /// Attention spectral analysis of an ATN1 file.
    Asa(AsaArgs),
    /// Mean ASA against subset density.
    AsaDensity(AsaDensityArgs),
    /// Window-aware augmentation, or a threshold/window sweep.
    Wom(WomArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NedVariantArg {
    Eq1,
    RatioLog,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogBaseArg {
    Natural,
    Base2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RepairArg {
    Strict,
    Coerce,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureFlags {
    /// Weight of the sentence-length correction in NED.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub ned_variant: Option<NedVariantArg>,
    #[arg(long, value_enum)]
    pub log_base: Option<LogBaseArg>,
    /// WordPiece vocab.txt for SSR.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub ele_case_sensitive: bool,
    /// How orphan I- tags are handled.
    #[arg(long, value_enum, default_value = "coerce")]
    pub repair: RepairArg,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CoNLL corpus (defaults to paths.corpus in the config).
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub feature: FeatureFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub gold: PathBuf,
    pub predicted: PathBuf,
    #[arg(long, value_enum, default_value = "coerce")]
    pub repair: RepairArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum StrategyArg {
    Density,
    Stratified,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "density")]
    pub strategy: StrategyArg,
    /// Comma-separated retention rates for the density family.
    #[arg(long, value_delimiter = ',', conflicts_with = "count")]
    pub rates: Option<Vec<f64>>,
    /// Number of stratified subsets.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub rarity_bins: Option<usize>,
    #[arg(long)]
    pub no_rarity_control: bool,
    /// Write each subset as CoNLL plus its manifest into this directory.
    #[arg(long, value_name = "DIR")]
    pub materialize: Option<PathBuf>,
    #[command(flatten)]
    pub feature: FeatureFlags,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Experiment records (.csv or .jsonl).
    pub records: Option<PathBuf>,
    /// Write one feature-vs-F1 scatter per feature into this directory.
    #[arg(long, value_name = "DIR")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum GsaMethod {
    Morris,
    Sobol,
    Both,
}

#[derive(Debug, Args)]
pub struct GsaArgs {
    /// Experiment records; they fit the surrogate or bound the external command.
    pub records: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: GsaMethod,
    /// Neighbours of the k-NN surrogate.
    #[arg(long, short = 'k')]
    pub k: Option<usize>,
    /// Evaluate F1 with this program instead of the surrogate.
    #[arg(long, value_name = "PROGRAM", conflicts_with = "k")]
    pub external_command: Option<String>,
    /// Argument for the external command (repeatable).
    #[arg(long = "external-arg", value_name = "ARG", requires = "external_command", allow_hyphen_values = true)]
    pub external_args: Vec<String>,
    #[arg(long, value_name = "SECS", requires = "external_command")]
    pub external_timeout: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub base_samples: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write the Morris mu*-sigma chart here.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    RowWise1d,
    Full2d,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    BinIndex,
    NormalizedFrequency,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregateArg {
    Mean,
    PerLayer,
}

#[derive(Debug, Clone, Args)]
pub struct AsaFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub weight: Option<WeightArg>,
    #[arg(long, value_enum)]
    pub aggregate: Option<AggregateArg>,
}

#[derive(Debug, Args)]
pub struct AsaArgs {
    /// ATN1 tensor file.
    pub input: PathBuf,
    #[command(flatten)]
    pub asa: AsaFlags,
}

#[derive(Debug, Args)]
pub struct AsaDensityArgs {
    /// JSON list of {subset_id, attention, corpus | features}.
    pub subsets: PathBuf,
    /// Write the density-vs-ASA curve here.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub asa: AsaFlags,
    #[command(flatten)]
    pub feature: FeatureFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WomModeArg {
    Wom,
    Ga,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum BackendArg {
    Mock,
    Http,
    Replay,
    Record,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MockArg {
    Identity,
    Paraphrase,
}

#[derive(Debug, Args)]
pub struct WomArgs {
    pub corpus: Option<PathBuf>,
    /// Write the augmented corpus here.
    #[arg(long, value_name = "FILE")]
    pub out_corpus: Option<PathBuf>,
    #[arg(long = "window-size", short = 'W')]
    pub window_size: Option<usize>,
    #[arg(long, short = 'T')]
    pub threshold: Option<f64>,
    /// Derive T from the mean window density.
    #[arg(long, conflicts_with = "threshold")]
    pub adaptive: bool,
    #[arg(long)]
    pub adaptive_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<WomModeArg>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    pub mock: Option<MockArg>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub cassette: Option<PathBuf>,
    #[arg(long)]
    pub pivot: Option<String>,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub in_flight: Option<usize>,
    #[arg(long)]
    pub retries: Option<usize>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub failure_limit: Option<f64>,
    /// Threshold grid `start:stop:step`, inclusive.
    #[arg(long = "sweep-T", value_name = "A:B:S", conflicts_with_all = ["out_corpus", "adaptive"])]
    pub sweep_t: Option<String>,
    /// Window-size grid `start:stop:step`, inclusive.
    #[arg(long = "sweep-W", value_name = "A:B:S", conflicts_with = "out_corpus")]
    pub sweep_w: Option<String>,
    #[command(flatten)]
    pub feature: FeatureFlags,
}
