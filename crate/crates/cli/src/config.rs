//! Run configuration, loaded from a TOML file and overridden by flags.
//!
//! Every key is optional. A full file looks like:
//!
//! ```toml
//! method = "osa-das"
//! seed = 7
//! workers = 0
//! inputs = ["images/cat.png"]
//! output = "out"
//!
//! [model]
//! name = "resnet50.onnx"          # or a toy name such as "oracle:32x32@(96,96)"
//! input_shape = [224, 224, 3]
//! feature_output = "features"
//! logits_output = "logits"
//!
//! [preprocess]
//! resize = 256
//! crop = 224
//!
//! [explainer]
//! masks = 64
//! augmentations = 32
//! mask_size = 64
//! mask_mode = { kind = "gradient" }
//! policy = { mode = "randaugment", n_ops = 2, magnitude = 0.5 }
//!
//! [metrics]
//! steps = 32
//! tolerance = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use osadas_core::{ExplainerConfig, MetricConfig};

use crate::error::{CliError, CliResult};

/// Environment variable naming the directory relative model paths resolve against.
pub const MODEL_DIR_ENV: &str = "OSADAS_MODEL_DIR";

/// File name of the effective config echoed into every output directory.
pub const ECHO_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Subspace occlusion with feature augmentation.
    OsaDas,
    /// Probability drop of the top class.
    Osa,
    /// Relative change of the raw feature vector.
    Rosa,
    /// Control: i.i.d. uniform random heatmap.
    UniformRandom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::OsaDas => "osa-das",
            Method::Osa => "osa",
            Method::Rosa => "rosa",
            Method::UniformRandom => "uniform-random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Toy registry name or path to an ONNX file.
    pub name: String,
    pub input_name: Option<String>,
    /// `[H, W, C]` fed to the network.
    pub input_shape: Option<(usize, usize, usize)>,
    pub feature_output: Option<String>,
    pub logits_output: Option<String>,
    pub mean: Option<Vec<f64>>,
    pub std: Option<Vec<f64>>,
}

/// Resize-then-center-crop applied before inference.
///
/// With both fields unset, images that do not already match a model's fixed
/// input are resized so the shorter side is `256/224` of the input side and
/// then center-cropped to the input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Target length of the shorter side.
    pub resize: Option<u32>,
    /// Side of the square center crop.
    pub crop: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    pub workers: usize,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub model: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub explainer: ExplainerConfig,
    pub metrics: MetricConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::OsaDas,
            seed: 0,
            workers: 0,
            inputs: Vec::new(),
            output: PathBuf::from("out"),
            model: ModelConfig::default(),
            preprocess: PreprocessConfig::default(),
            explainer: ExplainerConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage("config", e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::runtime("config", e.to_string()))
    }

    /// Copies run-level settings into the explainer config.
    pub fn sync(&mut self) {
        self.explainer.seed = self.seed;
        self.explainer.workers = self.workers;
    }

    /// SHA-256 of everything that determines a heatmap, in hex. The input
    /// list and output directory are excluded so the same settings hash the
    /// same wherever they run.
    pub fn hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.inputs.clear();
        stripped.output = PathBuf::new();
        let bytes = serde_json::to_vec(&stripped).expect("run config serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Resolves a model file name: absolute or existing paths are used as is,
/// anything else is looked up in `$OSADAS_MODEL_DIR`.
pub fn resolve_model_path(name: &str) -> PathBuf {
    let path = PathBuf::from(name);
    if path.is_absolute() || path.exists() {
        return path;
    }
    match std::env::var_os(MODEL_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path,
    }
}
