use thiserror::Error;

/// Errors raised by the explanation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty feature set")]
    EmptyFeatureSet,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("requested angles exceed subspace dimension ({requested} > {available})")]
    AnglesExceedDimension { requested: usize, available: usize },

    #[error("degenerate reference feature")]
    DegenerateReference,

    #[error("degenerate feature: vector norm below {0:e}")]
    DegenerateFeature(f64),

    #[error("degenerate saliency: weights sum to zero")]
    DegenerateSaliency,

    #[error("zero reference probability for class {0}")]
    ZeroReferenceProbability(usize),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("mask window {window} larger than image {height}x{width}")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },

    #[error("backend lacks classification head")]
    MissingClassificationHead,

    #[error("model load failed: {0}")]
    ModelLoad(String),

    #[error("model has no tensor named `{0}`")]
    MissingTensor(String),

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed curve: {0}")]
    MalformedCurve(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
