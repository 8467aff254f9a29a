//! `shelltox`: an explainable pipeline that predicts whether farmed
//! mussels will exceed the regulatory DSP toxicity limit, from routine
//! harmful-algal-bloom monitoring tables.
//!
//! Subcommands mirror the pipeline stages:
//!
//! * `synth`     : generate a synthetic monitoring campaign with ground truth
//! * `ingest`    : validate the five raw CSV families and summarize them
//! * `preprocess`: fuse raw tables into the consolidated labeled dataset
//! * `describe`  : descriptive statistics of a consolidated dataset
//! * `train`     : fit one classifier and save it as `model.json`
//! * `evaluate`  : repeated split/tune/test protocol over several algorithms
//! * `explain`   : permutation importance, SHAP values, force plots, tree export
//!
//! Every random decision derives from `--seed`; reruns with the same seed
//! and inputs are byte-identical regardless of `--threads`.
//!
//! Exit codes: 0 success, 2 malformed or missing input (schema errors),
//! 3 structurally valid input that yields an empty result, 1 anything
//! else. Failures print a single JSON line on stderr:
//! `{"kind":"schema","message":"..."}`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    /// Input that violates a declared schema: missing files, bad CSV
    /// rows, malformed config, model/data mismatches.
    Schema(String),
    /// Valid input that produces nothing to work with.
    Empty(String),
    /// Everything else (I/O on outputs, degenerate datasets, ...).
    Other(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Empty(_) => "empty",
            CliError::Other(_) => "error",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Schema(m) | CliError::Empty(m) | CliError::Other(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "shelltox", version, about = "Explainable shellfish-toxicity prediction pipeline")]
pub struct Cli {
    /// Master RNG seed; all randomness (splits, resampling, model fits,
    /// shuffles) derives from it deterministically.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections; 0 means one per core.
    /// Results never depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory artifacts are written to (created if absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// TOML run configuration; command-line flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic monitoring campaign (five raw CSVs plus
    /// per-visit ground truth) with a known label mechanism.
    Synth(SynthArgs),
    /// Parse and validate the five raw monitoring CSVs, writing a
    /// per-table summary.
    Ingest(IngestArgs),
    /// Fuse the raw tables into the consolidated 14-variable dataset:
    /// label matching, interpolation, window aggregation, overlap
    /// cleaning, and a 2-D projection for inspection.
    Preprocess(PreprocessArgs),
    /// Summarize a consolidated dataset: per-variable statistics,
    /// monthly bands, and monthly label counts.
    Describe(DescribeArgs),
    /// Fit one classifier on the training side of a stratified split
    /// and save it as model.json.
    Train(TrainArgs),
    /// Repeatedly split, tune (cross-validated grid search), and test
    /// one or more algorithms; write the full report tables.
    Evaluate(EvaluateArgs),
    /// Explain a saved model on held-out data: permutation importance,
    /// SHAP values, per-instance force records, and a tree export.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Campaign length in years.
    #[arg(long)]
    years: Option<u32>,
    /// First calendar year of the campaign.
    #[arg(long)]
    start_year: Option<i32>,
    /// Comma-separated monitoring station codes.
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<String>>,
    /// Fraction of visits that receive a toxicity test.
    #[arg(long)]
    coverage: Option<f64>,
    /// Target fraction of positive labels among tested visits.
    #[arg(long)]
    prevalence: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory holding phyto.csv, toxicity.csv, seawater.csv,
    /// meteo.csv and river.csv.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory holding the five raw CSVs (see `ingest`).
    #[arg(long)]
    input: PathBuf,
    /// Days a visit looks for its toxicity test (ahead for forward
    /// matching, back for backward).
    #[arg(long)]
    tox_window: Option<i64>,
    /// Length in days of the meteorology window ending the day before
    /// each visit (mean air temperature and wind, total precipitation
    /// and solar radiation).
    #[arg(long)]
    meteo_window: Option<i64>,
    /// Length in days of the river-discharge window ending the day
    /// before each visit (total flow).
    #[arg(long)]
    river_window: Option<i64>,
    /// Maximum day gap when filling missing seawater values from
    /// another station's reading.
    #[arg(long)]
    interp_days: Option<i64>,
    /// Regulatory toxicity limit in µg/kg; concentrations strictly
    /// above it are positive.
    #[arg(long)]
    limit: Option<f64>,
    /// Direction visits search for their toxicity test.
    #[arg(long, value_enum)]
    match_direction: Option<MatchDirArg>,
    /// Neighbours consulted by the overlap-cleaning pass.
    #[arg(long, default_value_t = 3)]
    enn_k: usize,
    /// Measure cleaning distances in raw units instead of z-scores.
    #[arg(long)]
    raw_distances: bool,
    /// Skip the overlap-cleaning pass.
    #[arg(long)]
    no_clean: bool,
}

#[derive(Args)]
struct DescribeArgs {
    /// Consolidated dataset (as written by `preprocess`).
    #[arg(long)]
    input: PathBuf,
    /// Restrict statistics to rows that carry a label.
    #[arg(long)]
    labeled_only: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Consolidated dataset (as written by `preprocess`).
    #[arg(long)]
    input: PathBuf,
    /// Algorithm to fit.
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Fraction of instances on the training side of the stratified
    /// split. `train` and `explain` derive the same split from the same
    /// seed and fraction.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// SMOTE neighbours.
    #[arg(long, default_value_t = 5)]
    smote_k: usize,
    /// SMOTE target: minority/majority ratio after oversampling.
    #[arg(long, default_value_t = 0.5)]
    smote_strategy: f64,
    /// Undersampling target: minority/majority ratio after reducing the
    /// majority class.
    #[arg(long, default_value_t = 0.6)]
    under_strategy: f64,
    /// Fit on the raw training split without resampling.
    #[arg(long)]
    no_resample: bool,
    /// Maximum tree depth (dt, rf); unlimited when absent.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Split impurity criterion (dt, rf).
    #[arg(long, value_enum, default_value_t = CriterionArg::Gini)]
    criterion: CriterionArg,
    /// Weight classes inversely to their frequency (dt, rf).
    #[arg(long)]
    balanced: bool,
    /// Number of trees (rf).
    #[arg(long, default_value_t = 300)]
    trees: usize,
    /// Soft-margin penalty C (svm).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Hidden-layer width (mlp).
    #[arg(long, default_value_t = 3)]
    hidden: usize,
    /// Keep the month column when fitting the mlp (dropped by default
    /// so the net cannot shortcut on seasonality).
    #[arg(long)]
    keep_month: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Consolidated dataset (as written by `preprocess`).
    #[arg(long)]
    input: PathBuf,
    /// Number of split/tune/test iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Comma-separated algorithms to race.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<AlgoArg>>,
    /// Metric the inner cross-validated grid search optimizes.
    #[arg(long, value_enum)]
    optimize: Option<OptimizeArg>,
    /// Freeze one split for all iterations instead of resplitting each
    /// time (isolates search/fit randomness).
    #[arg(long)]
    fixed_split: bool,
    /// Fraction of instances on the training side of each split.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Hyperparameter grid: the full default search spaces, or a small
    /// smoke grid for quick runs.
    #[arg(long, value_enum, default_value_t = GridArg::Full)]
    grid: GridArg,
}

#[derive(Args)]
struct ExplainArgs {
    /// Saved model (as written by `train`).
    #[arg(long)]
    model: PathBuf,
    /// Consolidated dataset providing the instances to explain.
    #[arg(long)]
    input: PathBuf,
    /// Side of the stratified split to explain.
    #[arg(long, value_enum, default_value_t = SideArg::Test)]
    on: SideArg,
    /// Fraction of instances on the training side of the split; use the
    /// values `train` ran with so the split matches.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Metric whose degradation permutation importance measures.
    #[arg(long, value_enum, default_value_t = PermMetricArg::F1)]
    metric: PermMetricArg,
    /// Shuffles per feature for permutation importance.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Comma-separated row indices (within the explained side) that get
    /// a force_<id>.json breakdown.
    #[arg(long, value_delimiter = ',')]
    instances: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Dt,
    Rf,
    Svm,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizeArg {
    F1,
    Recall,
    Precision,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PermMetricArg {
    Accuracy,
    F1,
    Recall,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatchDirArg {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    Full,
    Small,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    Gini,
    Entropy,
}

/// Settings shared by every subcommand, resolved flag > config > default.
pub struct Globals {
    pub seed: u64,
    pub out: PathBuf,
    pub file: FileConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = load_config(cli.config.as_ref())?;
    let threads = cli.threads.or(file.threads).unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        file,
    };
    std::fs::create_dir_all(&globals.out)
        .map_err(|e| CliError::Other(format!("{}: {e}", globals.out.display())))?;

    match cli.command {
        Command::Synth(args) => commands::synth(&globals, args),
        Command::Ingest(args) => commands::ingest(&globals, args),
        Command::Preprocess(args) => commands::preprocess(&globals, args),
        Command::Describe(args) => commands::describe(&globals, args),
        Command::Train(args) => commands::train(&globals, args),
        Command::Evaluate(args) => commands::evaluate(&globals, args),
        Command::Explain(args) => commands::explain(&globals, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "kind": e.kind(), "message": e.message() })
            );
            ExitCode::from(e.exit_code())
        }
    }
}
