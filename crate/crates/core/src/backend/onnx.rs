//! ONNX models executed with tract.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{Backend, BackendCapabilities};
use crate::error::{Error, Result};
use crate::image::{format_shape, Image};

/// How to load and feed an ONNX model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub path: PathBuf,
    /// Input tensor name; the first graph input when absent.
    #[serde(default)]
    pub input_name: Option<String>,
    /// `(H, W, C)` the model is fed; the tensor layout is `1×C×H×W`.
    pub input_shape: (usize, usize, usize),
    /// Tensor holding the deep feature vector (the layer before the head).
    pub feature_output: String,
    /// Tensor holding classification logits, if any.
    #[serde(default)]
    pub logits_output: Option<String>,
    /// Per-channel normalization applied after scaling pixels to `[0, 1]`.
    #[serde(default = "imagenet_mean")]
    pub mean: Vec<f64>,
    #[serde(default = "imagenet_std")]
    pub std: Vec<f64>,
}

fn imagenet_mean() -> Vec<f64> {
    vec![0.485, 0.456, 0.406]
}

fn imagenet_std() -> Vec<f64> {
    vec![0.229, 0.224, 0.225]
}

impl ModelSpec {
    pub fn new(path: impl Into<PathBuf>, input_shape: (usize, usize, usize), feature_output: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            input_name: None,
            input_shape,
            feature_output: feature_output.into(),
            logits_output: None,
            mean: imagenet_mean(),
            std: imagenet_std(),
        }
    }
}

type Plan = TypedRunnableModel<TypedModel>;

pub struct OnnxBackend {
    plan: Plan,
    spec: ModelSpec,
    feature_dim: usize,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("spec", &self.spec)
            .field("feature_dim", &self.feature_dim)
            .finish()
    }
}

fn load_err(e: impl std::fmt::Display) -> Error {
    Error::ModelLoad(e.to_string())
}

fn has_tensor(model: &InferenceModel, name: &str) -> bool {
    model.find_outlet_label(name).is_some() || model.node_by_name(name).is_ok()
}

impl OnnxBackend {
    pub fn load(spec: ModelSpec) -> Result<Self> {
        let (h, w, c) = spec.input_shape;
        if spec.mean.len() != c || spec.std.len() != c || spec.std.contains(&0.0) {
            return Err(Error::InvalidConfig(format!(
                "mean/std must have {c} entries and std must be non-zero"
            )));
        }
        let mut model = tract_onnx::onnx()
            .model_for_path(&spec.path)
            .map_err(|e| Error::ModelLoad(format!("{}: {e}", spec.path.display())))?;

        let input_ix = match &spec.input_name {
            None => 0,
            Some(name) => {
                let outlets = model.input_outlets().map_err(load_err)?;
                outlets
                    .iter()
                    .position(|o| model.node(o.node).name == *name || model.outlet_label(*o) == Some(name.as_str()))
                    .ok_or_else(|| Error::MissingTensor(name.clone()))?
            }
        };
        model
            .set_input_fact(input_ix, InferenceFact::dt_shape(f32::datum_type(), tvec!(1, c, h, w)))
            .map_err(load_err)?;

        let mut outputs = vec![spec.feature_output.clone()];
        outputs.extend(spec.logits_output.iter().cloned());
        for name in &outputs {
            if !has_tensor(&model, name) {
                return Err(Error::MissingTensor(name.clone()));
            }
        }
        model.set_output_names(&outputs).map_err(load_err)?;

        let typed = model.into_optimized().map_err(load_err)?;
        let feature_dim = typed
            .output_fact(0)
            .map_err(load_err)?
            .shape
            .as_concrete()
            .map(|dims| dims.iter().skip(1).product::<usize>())
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::ModelLoad(format!("feature tensor `{}` has no concrete shape", spec.feature_output)))?;
        let plan = typed.into_runnable().map_err(load_err)?;
        Ok(Self {
            plan,
            spec,
            feature_dim,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn run(&self, image: &Image) -> Result<TVec<TValue>> {
        let (h, w, c) = self.spec.input_shape;
        if image.shape() != self.spec.input_shape {
            return Err(Error::ShapeMismatch {
                expected: format_shape(self.spec.input_shape),
                found: format_shape(image.shape()),
            });
        }
        let (mean, std) = (&self.spec.mean, &self.spec.std);
        let input: Tensor = tract_ndarray::Array4::from_shape_fn((1, c, h, w), |(_, k, r, col)| {
            ((image.get(r, col, k) - mean[k]) / std[k]) as f32
        })
        .into();
        self.plan
            .run(tvec!(input.into()))
            .map_err(|e| Error::Inference(e.to_string()))
    }

    fn flatten(value: &TValue) -> Result<Vec<f64>> {
        let view = value
            .to_array_view::<f32>()
            .map_err(|e| Error::Inference(e.to_string()))?;
        Ok(view.iter().map(|v| *v as f64).collect())
    }
}

impl Backend for OnnxBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            has_probabilities: self.spec.logits_output.is_some(),
            has_saliency: false,
            feature_dim: self.feature_dim,
        }
    }

    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        Some(self.spec.input_shape)
    }

    fn raw_features(&self, image: &Image) -> Result<Vec<f64>> {
        let out = self.run(image)?;
        Self::flatten(&out[0])
    }

    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        if self.spec.logits_output.is_none() {
            return Err(Error::MissingClassificationHead);
        }
        let out = self.run(image)?;
        Self::flatten(&out[1])
    }
}
