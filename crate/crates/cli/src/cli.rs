use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "warpfda", version, about = "Registration and pooled smoothing of two functional datasets")]
pub struct Cli {
    /// Flat `key = value` file; every flag has a key of the same name, flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print size and ranges of a dataset.
    Summarize(SummarizeArgs),
    /// Estimate the warp of the second dataset onto the first one's time scale.
    Register(RegisterArgs),
    /// Pooled Nadaraya-Watson estimate of the mean curve.
    Estimate(EstimateArgs),
    /// Model-based bootstrap standard errors, intervals and band.
    Bootstrap(BootstrapArgs),
    /// Leave-one-out check of whether pooling improves prediction.
    Cv(CvArgs),
    /// Monte Carlo comparison of first-only, plug-in and oracle estimators.
    Simulate(SimulateArgs),
    /// Leading-order MSE terms and improvement ratios for an analytic model.
    Asymptotics(AsymptoticsArgs),
    /// Symmetric-decomposition check for a two-segment sawtooth warp.
    Symmetry(SymmetryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ties {
    Reject,
    Jitter,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// First dataset (CSV with header `t,y`); its time scale is the reference.
    #[arg(long)]
    pub ds1: PathBuf,
    /// Treatment of duplicate time stamps.
    #[arg(long, value_enum, default_value = "reject")]
    pub ties: Ties,
}

#[derive(Debug, Clone, Args)]
pub struct RegistrationArgs {
    #[arg(long, default_value_t = 30)]
    pub knots: usize,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    /// Left-to-right sweeps per round.
    #[arg(long, default_value_t = 2)]
    pub sweeps: usize,
    /// Initial half-width of the per-knot search (default: 1.5 knot spacings).
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub steps: usize,
    /// Window shrink factor per round.
    #[arg(long, default_value_t = 0.5)]
    pub refinement: f64,
    /// Time bandwidth of the registration criterion: `auto` or a value.
    #[arg(long, default_value = "auto")]
    pub ht: String,
    /// Value bandwidth of the registration criterion: `auto` or a value.
    #[arg(long, default_value = "auto")]
    pub hy: String,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothingArgs {
    /// Estimator bandwidth: `auto` (leave-one-out) or a value.
    #[arg(long, default_value = "auto")]
    pub hn: String,
    /// Comma-separated candidate bandwidths for `--hn auto`.
    #[arg(long)]
    pub hn_grid: Option<String>,
    /// Number of interior evaluation points.
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Truncation point of the Gaussian estimator kernel, in bandwidths.
    #[arg(long, default_value_t = 8.0)]
    pub kernel_cutoff: f64,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "reject")]
    pub ties: Ties,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub ds2: PathBuf,
    #[command(flatten)]
    pub reg: RegistrationArgs,
    /// Warp JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("warp_source").args(["warp", "auto"])))]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Second dataset; without it the first-sample estimator is computed.
    #[arg(long)]
    pub ds2: Option<PathBuf>,
    /// Warp JSON from `register`.
    #[arg(long)]
    pub warp: Option<PathBuf>,
    /// Register first, then estimate.
    #[arg(long)]
    pub auto: bool,
    #[command(flatten)]
    pub reg: RegistrationArgs,
    #[command(flatten)]
    pub smooth: SmoothingArgs,
    /// Curve CSV output (`t,estimate,mass,flag`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("warp_source").args(["warp", "auto"]).required(true)))]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub ds2: PathBuf,
    #[arg(long)]
    pub warp: Option<PathBuf>,
    #[arg(long)]
    pub auto: bool,
    #[command(flatten)]
    pub reg: RegistrationArgs,
    #[command(flatten)]
    pub smooth: SmoothingArgs,
    /// Bootstrap replicates.
    #[arg(long = "B", id = "B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: u64,
    /// Keep the observed times instead of resampling them.
    #[arg(long)]
    pub fixed_times: bool,
    /// Resample raw residuals without kernel smoothing.
    #[arg(long)]
    pub raw_residuals: bool,
    /// Reuse the fitted warp in every replicate.
    #[arg(long)]
    pub freeze_registration: bool,
    /// Band CSV output (`t,estimate,se,ci_lo,ci_hi,band_lo,band_hi`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Fast,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub ds2: PathBuf,
    #[arg(long, value_enum, default_value = "fast")]
    pub mode: Mode,
    /// Process this many evenly spaced deletions instead of all.
    #[arg(long)]
    pub cv_max_deletions: Option<usize>,
    #[command(flatten)]
    pub reg: RegistrationArgs,
    #[command(flatten)]
    pub smooth: SmoothingArgs,
    /// Report JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 500)]
    pub n1: usize,
    #[arg(long, default_value_t = 500)]
    pub n2: usize,
    #[arg(long)]
    pub seed: u64,
    /// `builtin` or a CSV `t,y` of mean-function nodes.
    #[arg(long, default_value = "builtin")]
    pub mean: String,
    /// Noise SD as a fraction of the SD of the mean over the first times.
    #[arg(long, default_value_t = 0.10)]
    pub noise_frac: f64,
    /// `sine` (the default simulation warp), `identity`, or a warp JSON file.
    #[arg(long, default_value = "sine")]
    pub true_warp: String,
    /// Use this estimator bandwidth in every run instead of cross-validating.
    #[arg(long)]
    pub frozen_hn: Option<f64>,
    /// Use the true warp for the plug-in estimator.
    #[arg(long)]
    pub oracle_registration: bool,
    #[command(flatten)]
    pub reg: RegistrationArgs,
    /// Comma-separated candidate bandwidths for per-run cross-validation.
    #[arg(long)]
    pub hn_grid: Option<String>,
    #[arg(long, default_value_t = 8.0)]
    pub kernel_cutoff: f64,
    /// Report CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Gaussian,
    Truncated,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    /// Model file of `key = value` lines.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub h: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelChoice,
    #[arg(long, default_value_t = 8.0)]
    pub kernel_cutoff: f64,
    /// Bandwidth exponent of the sample-size rule used in the limit factors.
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    /// JSON diagnostics output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SymmetryArgs {
    #[arg(long)]
    pub t0: f64,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 50)]
    pub terms: usize,
    /// JSON diagnostics output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
