//! Occlusion sensitivity analysis with deep feature augmentation subspaces.
//!
//! The engine perturbs an image with square occlusions, embeds each occluded
//! image together with a handful of augmentations of it as a low-dimensional
//! subspace of deep feature vectors, and scores every occlusion by how far
//! that subspace has rotated away from the reference subspace of the intact
//! image. Classic and representation-vector occlusion analysis are provided
//! alongside, plus deletion, insertion, minimal-size and overall metrics to
//! evaluate any heatmap.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod backend;
pub mod error;
pub mod explain;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod rng;
pub mod subspace;

pub use augment::{AugmentationOp, AugmentationPolicy, DrawKey, OpKind, PolicyMode};
pub use backend::{Backend, BackendCapabilities, LinearBackend, OracleRegionModel, Region, SaliencyScalar};
pub use error::{Error, Result};
pub use explain::{Explanation, ExplainerConfig, Heatmap, MaskMode};
pub use image::Image;
pub use mask::{Mask, SaliencyWeights};
pub use metrics::{MetricConfig, MetricReport};
pub use subspace::{CanonicalSpectrum, FeatureVector, SimilarityMode, SubspaceBasis};

#[cfg(feature = "onnx")]
pub use backend::{ModelSpec, OnnxBackend};
