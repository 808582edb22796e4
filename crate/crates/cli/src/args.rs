use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Emotion-transition co-speech gesture generation.
///
/// Stages run in order: prepare-data, the three pretraining stages, train,
/// then generate / evaluate / render. Every stage writes into a fresh
/// output directory and never modifies its inputs.
///
/// Exit codes: 0 success, 1 I/O or unexpected failure, 2 validation error,
/// 3 missing prerequisite, 4 numeric failure (non-finite loss).
#[derive(Debug, Parser)]
#[command(name = "emogest", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a run config preset as TOML.
    InitConfig {
        #[arg(long, value_enum, default_value_t = Preset::Toy)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the preset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a corpus of emotion-transition samples.
    PrepareData(PrepareArgs),
    /// Pretrain the pose emotion classifier.
    PretrainClassifier(StageArgs),
    /// Pretrain the keyframe sampler.
    PretrainSampler(StageArgs),
    /// Pretrain the FGD feature extractor.
    PretrainFgdExtractor(StageArgs),
    /// Adversarial training of the generator.
    Train(TrainArgs),
    /// Generate pose sequences for corpus samples.
    Generate(GenerateArgs),
    /// Compute the metrics report of a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Draw a pose file as stick-figure PNG frames.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Toy,
    Full,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Run config (TOML); defaults to the toy preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output corpus directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Generate a procedural corpus instead of processing clips.
    #[arg(long, conflicts_with_all = ["mock_adapters", "clips"])]
    pub synthetic: bool,
    /// Use offline mock adapters instead of the HTTP services.
    #[arg(long)]
    pub mock_adapters: bool,
    /// Directory of source clips (one sub-directory per clip).
    #[arg(long, required_unless_present = "synthetic")]
    pub clips: Option<PathBuf>,
    /// Samples to build (synthetic: exact target; otherwise an upper bound).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Speakers in the synthetic corpus.
    #[arg(long, default_value_t = 4)]
    pub speakers: usize,
    /// Tails paired with each neutral head (2 or 3).
    #[arg(long)]
    pub pairs_per_head: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory written by prepare-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint from pretrain-classifier.
    #[arg(long)]
    pub classifier: PathBuf,
    /// Checkpoint from pretrain-sampler.
    #[arg(long)]
    pub sampler: PathBuf,
    /// Checkpoint from pretrain-fgd-extractor.
    #[arg(long)]
    pub fgd_extractor: PathBuf,
    /// Overrides `train.epochs`; 0 saves the initial weights.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Train output directory or a checkpoint directory inside it.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Keyframe sampler checkpoint; defaults to the one recorded by train.
    #[arg(long)]
    pub sampler: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report file (JSON); must not exist.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub sampler: Option<PathBuf>,
    #[arg(long)]
    pub fgd_extractor: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Pose file written by generate (or any `.pose` file).
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame size in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    /// Also write an animated GIF.
    #[arg(long)]
    pub gif: bool,
    /// Also write a strip of N evenly spaced keyframes.
    #[arg(long)]
    pub keyframes: Option<usize>,
}
