mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Train, binarize, evaluate and benchmark CP knowledge-graph embeddings.
#[derive(Debug, Parser)]
#[command(name = "bcp", version)]
pub struct Cli {
    /// Worker threads for evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a dense CP or binarized CP model on a dataset directory.
    Train(TrainArgs),
    /// Filtered link prediction; several comma-separated models are ensembled.
    Eval(EvalArgs),
    /// Binarize a dense model with Q_Δ.
    Pack(PackArgs),
    /// Quantize a dense model with one scale per factor matrix (VQ-CP).
    QuantizeVq(QuantizeArgs),
    /// Triple classification with a global score threshold.
    Classify(ClassifyArgs),
    /// Time float against bitwise scoring over a range of dimensions.
    Bench(BenchArgs),
    /// Storage accounting for a model file.
    Size(SizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cp,
    Bcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
}

/// Defaults are the WN18RR optimum: `--mode bcp --dim 400 --lr 0.05
/// --l2 0.0001 --delta 0.5 --neg 5 --epochs 1000`.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "bcp")]
    pub mode: ModeArg,
    /// Embedding dimension D.
    #[arg(long, default_value_t = 400)]
    pub dim: usize,
    /// SGD learning rate η.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// L2 weight λ, shared by all three factor matrices.
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Binarization scale Δ (bcp mode).
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Negatives per positive.
    #[arg(long, default_value_t = 5)]
    pub neg: usize,
    /// Maximum epochs; 0 writes the initialized model.
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs between validation checkpoints.
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    /// Model path. Vocabularies, the epoch log and a manifest are written
    /// beside it; bcp mode also keeps the real-valued factors in
    /// `<out>.latent`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file, or comma-separated files to ensemble by summed scores.
    #[arg(long, value_delimiter = ',', required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    /// Dense model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Dense model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Positive triples, `subject \t relation \t object` per line.
    #[arg(long)]
    pub pos: PathBuf,
    /// Negative triples in the same format.
    #[arg(long)]
    pub neg: PathBuf,
    /// Fixed decision threshold.
    #[arg(
        long,
        allow_negative_numbers = true,
        conflicts_with = "tune",
        required_unless_present = "tune"
    )]
    pub threshold: Option<f64>,
    /// Tune the threshold on validation positives and negatives.
    #[arg(long, num_args = 2, value_names = ["VALID_POS", "VALID_NEG"])]
    pub tune: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub dmin: usize,
    #[arg(long, default_value_t = 1000)]
    pub dmax: usize,
    #[arg(long, default_value_t = 10)]
    pub step: usize,
    /// Scores per trial.
    #[arg(long, default_value_t = bcp_bench::PAPER_REPETITIONS)]
    pub reps: usize,
    /// Timed trials per dimension; the median is reported.
    #[arg(long, default_value_t = bcp_bench::MIN_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a plot-ready CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    #[arg(long)]
    pub model: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
