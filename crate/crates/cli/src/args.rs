use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsic::frost::{BetaMode, FrostConfig};
use hsic::perceptron::{TrainConfig, DEFAULT_EMBED, DEFAULT_HIDDEN};
use hsic::scalespace::ScaleSpaceConfig;

#[derive(Parser, Debug)]
#[command(name = "hsic", version, about = "Hyperspectral band classification: despeckle, extract, train, classify, evaluate")]
pub struct Cli {
    /// Worker threads for filtering and extraction (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a speckled synthetic cube, its clean companion and a label file
    Synth(SynthArgs),
    /// Despeckle every band with the Frost filter
    Filter(FilterArgs),
    /// Extract one 139-value feature vector per band
    Extract(ExtractArgs),
    /// Train the matching perceptron on the train split
    Train(TrainArgs),
    /// Classify bands against a gallery
    Classify(ClassifyArgs),
    /// Compute PSNR, accuracy, misclassification rate and timing
    Eval(EvalArgs),
    /// Run filter, extract, train, classify and eval end to end
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthOpts {
    /// Number of classes (2 to 8)
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Bands generated per class
    #[arg(long, default_value_t = 10)]
    pub bands_per_class: usize,
    /// Band width in pixels
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Band height in pixels
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Multiplicative speckle amplitude, unitless in [0, 1)
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output prefix; writes PREFIX.hsch/.bsq/.labels and PREFIX.clean.hsch/.bsq
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: SynthOpts,
    /// Generator seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaArg {
    Damped,
    Literal,
}

#[derive(Args, Debug, Clone)]
pub struct FilterOpts {
    /// Window side in pixels (odd, >= 3)
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Damping factor K, unitless (> 0)
    #[arg(long, default_value = "2.0")]
    pub damping: f64,
    /// Beta formula: damped = K·(D/μ)², literal = 4/(n·μ²)
    #[arg(long, value_enum, default_value_t = BetaArg::Damped)]
    pub beta_mode: BetaArg,
}

impl FilterOpts {
    pub fn config(&self) -> FrostConfig {
        let beta_mode = match self.beta_mode {
            BetaArg::Damped => BetaMode::Damped,
            BetaArg::Literal => BetaMode::Literal,
        };
        FrostConfig { window: self.window, damping: self.damping, beta_mode }
    }
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Input cube prefix (PREFIX.hsch + PREFIX.bsq)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output cube prefix
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: FilterOpts,
}

#[derive(Args, Debug, Clone)]
pub struct ExtractOpts {
    /// Number of octaves
    #[arg(long, default_value_t = 3)]
    pub octaves: usize,
    /// Scales per octave
    #[arg(long, default_value_t = 3)]
    pub scales: usize,
    /// Base blur sigma in pixels
    #[arg(long, default_value_t = 1.6)]
    pub sigma0: f64,
    /// Minimum |DoG| of a keypoint, in units of the normalized [0, 1] intensity
    #[arg(long, default_value_t = 0.03)]
    pub contrast: f64,
}

impl ExtractOpts {
    pub fn config(&self) -> ScaleSpaceConfig {
        ScaleSpaceConfig {
            octaves: self.octaves,
            scales_per_octave: self.scales,
            base_sigma: self.sigma0,
            contrast_threshold: self.contrast,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Input cube prefix
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output feature file (.fvec)
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: ExtractOpts,
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    /// Hidden units H
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Embedding size E
    #[arg(long, default_value_t = DEFAULT_EMBED)]
    pub embed: usize,
    /// Gradient descent step size
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub lr: f64,
    /// Maximum full-batch epochs
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    pub epochs: usize,
    /// Stop once the mean loss improves by less than this per epoch
    #[arg(long, default_value_t = TrainConfig::default().tolerance)]
    pub tol: f64,
    /// Thread the hidden state from band to band
    #[arg(long)]
    pub recurrent: bool,
    /// Keep every train band as a gallery reference instead of per-class means
    #[arg(long)]
    pub gallery_per_band: bool,
}

impl TrainOpts {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            max_epochs: self.epochs,
            tolerance: self.tol,
            seed,
            recurrent: self.recurrent,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Feature file (.fvec)
    #[arg(long)]
    pub features: PathBuf,
    /// Label file with the train/test split
    #[arg(long)]
    pub labels: PathBuf,
    /// Output model file (.mlp)
    #[arg(long)]
    pub model: PathBuf,
    /// Output gallery file (.gal)
    #[arg(long)]
    pub gallery: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Weight initialization seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Feature file (.fvec)
    #[arg(long)]
    pub features: PathBuf,
    /// Model file (.mlp)
    #[arg(long)]
    pub model: PathBuf,
    /// Gallery file (.gal)
    #[arg(long)]
    pub gallery: PathBuf,
    /// Label file; required to select the train or test split
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Bands to classify
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    /// Output predictions CSV (band,label,score,distance)
    #[arg(long)]
    pub out: PathBuf,
    /// Optional class-map image (binary PPM)
    #[arg(long)]
    pub ppm: Option<PathBuf>,
    /// Optional timing summary CSV, read back by `eval --timing`
    #[arg(long)]
    pub timing: Option<PathBuf>,
    /// Timed repetitions of the classification pass
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predictions CSV from `classify`
    #[arg(long)]
    pub pred: PathBuf,
    /// Label file with ground truth
    #[arg(long)]
    pub truth: PathBuf,
    /// Clean reference cube prefix (PSNR/MSE are `nan` without it)
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Noisy or filtered cube prefix compared against --clean
    #[arg(long)]
    pub noisy_or_filtered: Option<PathBuf>,
    /// Timing summary CSV from `classify --timing`
    #[arg(long)]
    pub timing: Option<PathBuf>,
    /// Output metrics CSV
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Input cube prefix (PREFIX.hsch/.bsq/.labels); a synthetic cube is generated when omitted
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Directory for intermediate artifacts and the manifest
    #[arg(long, default_value = "hsic-run")]
    pub work_dir: PathBuf,
    /// Output metrics CSV
    #[arg(long)]
    pub report: PathBuf,
    /// Output class-map image (binary PPM)
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Weight initialization seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Generator seed, used only without --in
    #[arg(long, default_value_t = 42)]
    pub data_seed: u64,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    pub filter: FilterOpts,
    #[command(flatten)]
    pub extract: ExtractOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Timed repetitions of the classification pass
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}
