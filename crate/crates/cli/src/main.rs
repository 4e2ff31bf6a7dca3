mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Subject-level speech sound disorder screening.
#[derive(Parser)]
#[command(name = "ssd-screen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-mel filter-bank (or MFCC) features for every manifest entry.
    Featurize(FeaturizeArgs),
    /// Train a frame-level attribute or phone posterior classifier.
    TrainPosterior(TrainPosteriorArgs),
    /// Posteriors and log posterior ratios from a trained classifier.
    Lpr(LprArgs),
    /// Train a diagonal-covariance universal background model.
    TrainUbm(TrainUbmArgs),
    /// Train a total variability matrix on top of a background model.
    TrainTv(TrainTvArgs),
    /// Extract subject- or word-level i-vectors.
    Extract(ExtractArgs),
    /// Fit the LDA + linear classifier back-end.
    TrainBackend(TrainBackendArgs),
    /// Score a trained back-end on labelled representations.
    Evaluate(EvaluateArgs),
    /// Speaker-disjoint cross-validation of a full configuration.
    Crossval(CrossvalArgs),
    /// Write a synthetic feature-space corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 80)]
    n_mels: usize,
    /// Keep this many cepstra instead of filter-bank energies.
    #[arg(long)]
    mfcc: Option<usize>,
    /// Normalise mean and variance per speaker.
    #[arg(long)]
    cmvn: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Attribute,
    Phone,
}

#[derive(Args)]
struct TrainPosteriorArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    /// Restrict training to the typically developing speakers of this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Task::Attribute)]
    task: Task,
    /// Attribute table replacing the built-in Cantonese one.
    #[arg(long)]
    attribute_table: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LprArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ssd_core::attributes::DEFAULT_LPR_CLAMP)]
    clamp: f64,
    /// Write posteriors instead of log posterior ratios.
    #[arg(long)]
    posteriors: bool,
}

#[derive(Args)]
struct TrainUbmArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 256)]
    components: usize,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    variance_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainTvArgs {
    /// Background model written by train-ubm.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Pool statistics per speaker of this manifest instead of per utterance.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    rank: usize,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Level {
    Subject,
    Word,
}

#[derive(Args)]
struct ExtractArgs {
    /// Model written by train-tv.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Level::Subject)]
    level: Level,
    #[arg(long)]
    length_norm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelSource {
    /// Labels from the diagnosis column; word-level ids inherit their speaker's label.
    #[arg(long, conflicts_with = "labels")]
    manifest: Option<PathBuf>,
    /// Two-column `id<TAB>label` file.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainBackendArgs {
    #[arg(long)]
    representations: PathBuf,
    #[command(flatten)]
    source: LabelSource,
    #[arg(long, default_value = "svm")]
    classifier: String,
    #[arg(long)]
    lda: bool,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    balance_classes: bool,
    #[arg(long, default_value_t = 20_000)]
    svm_iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    backend: PathBuf,
    #[arg(long)]
    representations: PathBuf,
    #[command(flatten)]
    source: LabelSource,
    /// Fuse word-level decisions into one decision per speaker by majority vote.
    #[arg(long)]
    majority: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossvalArgs {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, required_unless_present = "template")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set ubm.components=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// JSON report destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// One JSON object per fold.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Print a configuration template with every key and its default.
    #[arg(long)]
    template: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    n_td: usize,
    #[arg(long, default_value_t = 24)]
    n_ssd: usize,
    #[arg(long, default_value_t = 30)]
    n_words: usize,
    /// Substitution probability of the disordered speakers.
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    /// Comma-separated substitutions such as `t>k,s>f`; built-in set when omitted.
    #[arg(long)]
    rules: Option<String>,
    #[arg(long, default_value_t = 24)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SSD_SCREEN_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("SSD_SCREEN_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("SSD_SCREEN_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match cli.command {
        Command::Featurize(a) => commands::featurize(a),
        Command::TrainPosterior(a) => commands::train_posterior(a),
        Command::Lpr(a) => commands::lpr(a),
        Command::TrainUbm(a) => commands::train_ubm(a),
        Command::TrainTv(a) => commands::train_tv(a),
        Command::Extract(a) => commands::extract(a),
        Command::TrainBackend(a) => commands::train_backend(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Crossval(a) => commands::crossval(a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
