//! Command-line flags. Every flag left unset keeps the value from the
//! config file, or the built-in default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use osadas_core::augment::{AugmentationPolicy, PolicyMode};
use osadas_core::backend::{SaliencyFallback, SaliencyScalar};
use osadas_core::metrics::{Baseline, ToleranceNorm};
use osadas_core::{MaskMode, SimilarityMode};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::MetricChoice;

/// Stride used when sliding masks are requested without one.
pub const DEFAULT_STRIDE: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "osadas", version, about = "Occlusion sensitivity explanations with augmentation subspaces")]
pub struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute heatmaps and write raw, sidecar and preview files.
    Explain(ExplainArgs),
    /// Score a heatmap with deletion, insertion, minimal size and overall.
    Evaluate(EvaluateArgs),
    /// Run several explainers over a corpus and tabulate their metrics.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Images to explain (PNG or JPEG).
    pub images: Vec<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image the heatmap explains.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Heatmap raw file, sidecar or stem.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Recompute from a stored report instead of running the model.
    #[arg(long)]
    pub from_report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricChoice::All)]
    pub metric: MetricChoice,
    /// Report file; printed to stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of PNG/JPEG images.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Explainers to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::OsaDas, Method::UniformRandom])]
    pub methods: Vec<Method>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Toy model name (`oracle:HxW@(row,col)`, `linear:HxWxC;k=..`) or ONNX file.
    /// Relative ONNX paths also resolve against $OSADAS_MODEL_DIR.
    #[arg(long)]
    pub model: Option<String>,
    /// Model input as HxWxC.
    #[arg(long, value_parser = parse_shape)]
    pub input_shape: Option<(usize, usize, usize)>,
    #[arg(long)]
    pub input_name: Option<String>,
    /// Tensor holding the deep feature vector.
    #[arg(long)]
    pub feature_output: Option<String>,
    /// Tensor holding class logits.
    #[arg(long)]
    pub logits_output: Option<String>,
    /// Resize the shorter image side to this many pixels.
    #[arg(long)]
    pub resize: Option<u32>,
    /// Center-crop to a square of this side.
    #[arg(long)]
    pub crop: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskModeArg {
    Sliding,
    Random,
    Gradient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Trivial,
    Randaugment,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimilarityArg {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScalarArg {
    FeatureNorm,
    MaxLogit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FallbackArg {
    /// Central finite differences on a coarse grid.
    Fd,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Zero,
    Blur,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Zero => Baseline::Zero,
            BaselineArg::Blur => Baseline::Blur,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Linf,
    L1,
}

#[derive(Debug, Args)]
pub struct ExplainerArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of masks n_m.
    #[arg(long)]
    pub masks: Option<usize>,
    /// Feature vectors per subspace n_a, the input itself included.
    #[arg(long)]
    pub augmentations: Option<usize>,
    /// Canonical angles n_c.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Mask side l in pixels.
    #[arg(long)]
    pub mask_size: Option<usize>,
    #[arg(long, value_enum)]
    pub mask_mode: Option<MaskModeArg>,
    /// Sliding-window stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Largest IoU tolerated between sampled masks.
    #[arg(long)]
    pub overlap_iou: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Ops per image for RandAugment.
    #[arg(long)]
    pub ops: Option<usize>,
    /// Magnitude in [0, 1] for RandAugment.
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Norm order p for ROSA (`inf` allowed).
    #[arg(long)]
    pub norm_order: Option<f64>,
    #[arg(long, value_enum)]
    pub similarity: Option<SimilarityArg>,
    #[arg(long, value_enum)]
    pub saliency_scalar: Option<ScalarArg>,
    #[arg(long, value_enum)]
    pub saliency_fallback: Option<FallbackArg>,
    /// Grid pitch of the finite-difference fallback.
    #[arg(long)]
    pub fd_pitch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    /// Feature tolerance for minimal size.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_enum)]
    pub tolerance_norm: Option<NormArg>,
    #[arg(long, value_enum)]
    pub deletion_baseline: Option<BaselineArg>,
    #[arg(long, value_enum)]
    pub insertion_baseline: Option<BaselineArg>,
    #[arg(long)]
    pub contour_levels: Option<usize>,
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
    match nums.as_deref() {
        Ok([h, w, c]) => Ok((*h, *w, *c)),
        _ => Err(format!("expected HxWxC, got `{s}`")),
    }
}

/// Loads `--config` if given, otherwise starts from defaults.
pub fn base_config(path: Option<&PathBuf>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        if let Some(v) = &self.model {
            m.name = v.clone();
        }
        if let Some(v) = self.input_shape {
            m.input_shape = Some(v);
        }
        if let Some(v) = &self.input_name {
            m.input_name = Some(v.clone());
        }
        if let Some(v) = &self.feature_output {
            m.feature_output = Some(v.clone());
        }
        if let Some(v) = &self.logits_output {
            m.logits_output = Some(v.clone());
        }
        if let Some(v) = self.resize {
            cfg.preprocess.resize = Some(v);
        }
        if let Some(v) = self.crop {
            cfg.preprocess.crop = Some(v);
        }
    }
}

impl ExplainerArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        let e = &mut cfg.explainer;
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { e.$field = v; })* };
        }
        set!(masks, augmentations, angles, mask_size, overlap_iou, norm_order);
        if let Some(mode) = self.mask_mode {
            e.mask_mode = match mode {
                MaskModeArg::Sliding => MaskMode::Sliding {
                    stride: self.stride.unwrap_or(match e.mask_mode {
                        MaskMode::Sliding { stride } => stride,
                        _ => DEFAULT_STRIDE,
                    }),
                },
                MaskModeArg::Random => MaskMode::Random,
                MaskModeArg::Gradient => MaskMode::Gradient,
            };
        } else if let (Some(s), MaskMode::Sliding { stride }) = (self.stride, &mut e.mask_mode) {
            *stride = s;
        }
        if let Some(policy) = self.policy {
            let pool = e.policy.pool.clone();
            e.policy = match policy {
                PolicyArg::Trivial => AugmentationPolicy::trivial(0),
                PolicyArg::None => AugmentationPolicy::disabled(),
                PolicyArg::Randaugment => {
                    AugmentationPolicy::randaugment(self.ops.unwrap_or(2), self.magnitude.unwrap_or(0.5), 0)
                        .map_err(|err| CliError::usage("config", err.to_string()))?
                }
            }
            .with_pool(pool);
        } else if let PolicyMode::RandAugment { n_ops, magnitude } = &mut e.policy.mode {
            *n_ops = self.ops.unwrap_or(*n_ops);
            *magnitude = self.magnitude.unwrap_or(*magnitude);
        }
        if let Some(s) = self.similarity {
            e.similarity = match s {
                SimilarityArg::Mean => SimilarityMode::Mean,
                SimilarityArg::Sum => SimilarityMode::Sum,
            };
        }
        if let Some(s) = self.saliency_scalar {
            e.saliency_scalar = match s {
                ScalarArg::FeatureNorm => SaliencyScalar::FeatureNorm,
                ScalarArg::MaxLogit => SaliencyScalar::MaxLogit,
            };
        }
        if let Some(f) = self.saliency_fallback {
            e.saliency_fallback = match f {
                FallbackArg::Uniform => SaliencyFallback::Uniform,
                FallbackArg::Fd => SaliencyFallback::FiniteDifference {
                    pitch: self.fd_pitch.unwrap_or(16),
                },
            };
        } else if let (Some(p), SaliencyFallback::FiniteDifference { pitch }) =
            (self.fd_pitch, &mut e.saliency_fallback)
        {
            *pitch = p;
        }
        Ok(())
    }
}

impl MetricArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.metrics;
        if let Some(v) = self.steps {
            m.steps = v;
        }
        if let Some(v) = self.tolerance {
            m.tolerance = v;
        }
        if let Some(v) = self.tolerance_norm {
            m.tolerance_norm = match v {
                NormArg::Linf => ToleranceNorm::Linf,
                NormArg::L1 => ToleranceNorm::L1,
            };
        }
        if let Some(v) = self.deletion_baseline {
            m.deletion_baseline = v.into();
        }
        if let Some(v) = self.insertion_baseline {
            m.insertion_baseline = v.into();
        }
        if let Some(v) = self.contour_levels {
            m.contour_levels = v;
        }
    }
}
