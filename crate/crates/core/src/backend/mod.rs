//! Model inference behind a small capability-based trait.
//!
//! A backend always produces deep feature vectors. Class probabilities and an
//! analytic input saliency are optional capabilities; explainers that need a
//! missing capability either fail ([`Error::MissingClassificationHead`]) or
//! fall back as documented on [`SaliencyFallback`].

mod toy;

#[cfg(feature = "onnx")]
mod onnx;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::SaliencyWeights;
use crate::subspace::{l2_norm, FeatureVector};

pub use toy::{LinearBackend, OracleRegionModel, Region};

#[cfg(feature = "onnx")]
pub use onnx::{ModelSpec, OnnxBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub has_probabilities: bool,
    pub has_saliency: bool,
    pub feature_dim: usize,
}

/// Scalar whose input gradient drives anchor sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencyScalar {
    /// `‖f_raw(x)‖₂`; needs no classification head.
    #[default]
    FeatureNorm,
    /// The logit of the class that is largest on the unperturbed input.
    MaxLogit,
}

/// What to do when a backend has no analytic saliency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SaliencyFallback {
    /// Central differences of the saliency scalar over `pitch×pitch` cells.
    FiniteDifference { pitch: usize },
    /// Uniform weights over all pixels.
    Uniform,
}

impl Default for SaliencyFallback {
    fn default() -> Self {
        SaliencyFallback::FiniteDifference { pitch: 16 }
    }
}

/// A model producing deep feature vectors for images.
///
/// Implementations must be deterministic: the same image always yields
/// bit-identical outputs.
pub trait Backend: Send + Sync {
    fn capabilities(&self) -> BackendCapabilities;

    /// Input shape `(H, W, C)` the model requires, or `None` if any image
    /// the model can read is accepted.
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        None
    }

    /// Un-normalized deep feature vector.
    fn raw_features(&self, image: &Image) -> Result<Vec<f64>>;

    /// Unit-normalized deep feature vector.
    fn infer_features(&self, image: &Image) -> Result<FeatureVector> {
        FeatureVector::normalized(self.raw_features(image)?)
    }

    fn raw_features_batch(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        images.iter().map(|img| self.raw_features(img)).collect()
    }

    /// Classification logits.
    fn logits(&self, _image: &Image) -> Result<Vec<f64>> {
        Err(Error::MissingClassificationHead)
    }

    /// Class probabilities, the softmax of [`Backend::logits`].
    fn infer_probabilities(&self, image: &Image) -> Result<Vec<f64>> {
        if !self.capabilities().has_probabilities {
            return Err(Error::MissingClassificationHead);
        }
        Ok(softmax(&self.logits(image)?))
    }

    /// Analytic input saliency, if the backend can compute one.
    ///
    /// `Ok(None)` means the capability is absent; callers then use a
    /// [`SaliencyFallback`].
    fn input_saliency(&self, _image: &Image, _scalar: SaliencyScalar) -> Result<Option<SaliencyWeights>> {
        Ok(None)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn capabilities(&self) -> BackendCapabilities {
        (**self).capabilities()
    }
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        (**self).input_shape()
    }
    fn raw_features(&self, image: &Image) -> Result<Vec<f64>> {
        (**self).raw_features(image)
    }
    fn infer_features(&self, image: &Image) -> Result<FeatureVector> {
        (**self).infer_features(image)
    }
    fn raw_features_batch(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        (**self).raw_features_batch(images)
    }
    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        (**self).logits(image)
    }
    fn infer_probabilities(&self, image: &Image) -> Result<Vec<f64>> {
        (**self).infer_probabilities(image)
    }
    fn input_saliency(&self, image: &Image, scalar: SaliencyScalar) -> Result<Option<SaliencyWeights>> {
        (**self).input_saliency(image, scalar)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Saliency for anchor sampling: the backend's analytic saliency when it has
/// one, otherwise the configured fallback.
pub fn resolve_saliency<B: Backend + ?Sized>(
    backend: &B,
    image: &Image,
    scalar: SaliencyScalar,
    fallback: SaliencyFallback,
) -> Result<SaliencyWeights> {
    if let Some(weights) = backend.input_saliency(image, scalar)? {
        return Ok(weights);
    }
    match fallback {
        SaliencyFallback::FiniteDifference { pitch } => finite_difference_saliency(backend, image, scalar, pitch),
        SaliencyFallback::Uniform => Ok(SaliencyWeights::uniform(image.height(), image.width())),
    }
}

/// Coarse-grid saliency from central differences.
///
/// Every `pitch×pitch` cell is shifted by `±h` in all channels at once; the
/// absolute difference quotient of the saliency scalar is spread evenly over
/// the cell's pixels. Perturbed samples are clamped to `[0, 1]`.
pub fn finite_difference_saliency<B: Backend + ?Sized>(
    backend: &B,
    image: &Image,
    scalar: SaliencyScalar,
    pitch: usize,
) -> Result<SaliencyWeights> {
    const STEP: f64 = 1e-2;
    if pitch == 0 {
        return Err(Error::InvalidConfig("finite-difference pitch must be at least 1".into()));
    }
    let class = match scalar {
        SaliencyScalar::FeatureNorm => None,
        SaliencyScalar::MaxLogit => Some(argmax(&backend.logits(image)?)),
    };
    let evaluate = |img: &Image| -> Result<f64> {
        Ok(match class {
            None => l2_norm(&backend.raw_features(img)?),
            Some(c) => backend.logits(img)?[c],
        })
    };
    let (h, w, ch) = image.shape();
    let mut grid = vec![0.0; h * w];
    for top in (0..h).step_by(pitch) {
        for left in (0..w).step_by(pitch) {
            let rows = top..(top + pitch).min(h);
            let cols = left..(left + pitch).min(w);
            let shifted = |delta: f64| {
                let mut img = image.clone();
                for r in rows.clone() {
                    for c in cols.clone() {
                        for k in 0..ch {
                            img.set(r, c, k, image.get(r, c, k) + delta);
                        }
                    }
                }
                img
            };
            let slope = ((evaluate(&shifted(STEP))? - evaluate(&shifted(-STEP))?) / (2.0 * STEP)).abs();
            let share = slope / (rows.len() * cols.len()) as f64;
            for r in rows.clone() {
                for c in cols.clone() {
                    grid[r * w + c] = share;
                }
            }
        }
    }
    SaliencyWeights::new(h, w, grid)
}

/// Builds a backend from a toy-model registry name or a model file.
///
/// Registry names:
/// * `oracle:HxW@(row,col)`: [`OracleRegionModel`] whose region has its top-left
///   corner at `(row, col)`; optional `;k=<dim>;seed=<u64>;channels=<1|3>`.
/// * `linear:HxWxC;k=<dim>;seed=<u64>[;classes=<n>]`: seeded [`LinearBackend`].
///
/// Anything else is treated as a path and requires a [`ModelSpec`].
pub fn toy_from_name(name: &str) -> Option<Result<Box<dyn Backend>>> {
    if let Some(rest) = name.strip_prefix("oracle:") {
        return Some(toy::parse_oracle(rest).map(|m| Box::new(m) as Box<dyn Backend>));
    }
    if let Some(rest) = name.strip_prefix("linear:") {
        return Some(toy::parse_linear(rest).map(|m| Box::new(m) as Box<dyn Backend>));
    }
    None
}
