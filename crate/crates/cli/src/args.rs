use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "tvmap",
    version,
    about = "Adaptive TV denoising with learned regularisation maps"
)]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = "TVMAP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt an image with simulated noise.
    Inject(InjectArgs),
    /// Label patches from a corpus and write a filtered training dataset.
    BuildDataset(BuildDatasetArgs),
    /// Label patches from a corpus and write the unfiltered dataset.
    GenLabels(LabelArgs),
    /// Restore a noisy image.
    Denoise(DenoiseArgs),
    /// Decide whether an image carries Gaussian or Poisson noise.
    Classify(ClassifyArgs),
    /// Compare images against a clean reference (CSV of SSIM and PSNR).
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {s}"))
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("must be a positive integer, got {s}")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    #[arg(long, value_enum)]
    pub noise: NoiseKind,
    /// Gaussian variance.
    #[arg(long, value_parser = positive, conflicts_with = "alpha")]
    pub sigma2: Option<f64>,
    /// Poisson photon scale.
    #[arg(long, value_parser = positive)]
    pub alpha: Option<f64>,
    /// Poisson stabiliser, also used by the KL fidelity.
    #[arg(long, value_parser = positive, default_value_t = tvmap::noise::DEFAULT_ETA)]
    pub eta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// TV smoothing.
    #[arg(long, value_parser = positive, default_value_t = tvmap::tv::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_parser = at_least_one, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, value_parser = positive, default_value_t = 1e-5)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Interior golden-section evaluations per label.
    #[arg(long, default_value_t = 30)]
    pub budget: usize,
    /// Stop once the μ bracket is narrower than this.
    #[arg(long, value_parser = positive, default_value_t = 0.5)]
    pub bracket_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InjectArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct LabelArgs {
    /// Directory of clean PGM images.
    pub corpus: PathBuf,
    /// Output TVDS file.
    pub output: PathBuf,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise realisations per patch.
    #[arg(long, value_parser = at_least_one, default_value_t = 1)]
    pub realisations: usize,
    #[arg(long, value_parser = at_least_one, default_value_t = 32)]
    pub patch_size: usize,
    #[arg(long, value_parser = at_least_one, default_value_t = 16)]
    pub stride: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Keep labels in (0, 1.5·IQR].
    Literal,
    /// Keep labels in [Q1 − 1.5·IQR, Q3 + 1.5·IQR].
    Fence,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildDatasetArgs {
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long, value_enum, default_value_t = Rule::Literal)]
    pub rule: Rule,
    /// Keep every record.
    #[arg(long)]
    pub no_filter: bool,
}

/// `--mu` value: a scalar or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MuSpec {
    Scalar(f64),
    Auto,
}

fn mu_spec(s: &str) -> Result<MuSpec, String> {
    if s == "auto" {
        return Ok(MuSpec::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("expected a number or `auto`, got {s}"))?;
    if (tvmap::MU_MIN..=tvmap::MU_MAX).contains(&v) {
        Ok(MuSpec::Scalar(v))
    } else {
        Err(format!(
            "mu must lie in [{}, {}], got {v}",
            tvmap::MU_MIN,
            tvmap::MU_MAX
        ))
    }
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("weighting").required(true).args(["mu", "mu_map"]))]
pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Fidelity to use; with `--mu auto` this overrides the classifier.
    #[arg(long, value_enum)]
    pub fidelity: Option<NoiseKind>,
    /// Scalar weight, or `auto` to predict a per-pixel map.
    #[arg(long, value_parser = mu_spec)]
    pub mu: Option<MuSpec>,
    /// Per-pixel weights stored as a 16-bit PGM with a `.range` sidecar.
    #[arg(long)]
    pub mu_map: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// KL stabiliser for the Poisson fidelity.
    #[arg(long, value_parser = positive, default_value_t = tvmap::noise::DEFAULT_ETA)]
    pub eta: f64,
    /// Noise classifier weights (TVMW).
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Regressor weights used for Gaussian noise.
    #[arg(long)]
    pub regressor_gaussian: Option<PathBuf>,
    /// Regressor weights used for Poisson noise.
    #[arg(long)]
    pub regressor_poisson: Option<PathBuf>,
    /// Where to write the μ map that was used.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
    /// Clean image; enables a metrics CSV.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Metrics CSV path (default `<output>.metrics.csv`).
    #[arg(long, requires = "reference")]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub reference: PathBuf,
    /// Images filling the noisy, scalar and map slots in that order.
    #[arg(num_args = 0..=3)]
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[arg(long)]
    pub scalar: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Value of the image_id column (default: reference file stem).
    #[arg(long)]
    pub id: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
