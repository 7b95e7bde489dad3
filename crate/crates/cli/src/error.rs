use std::fmt;

use osadas_core::Error as CoreError;

/// Failure class, mapped one-to-one onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad arguments, configuration or mismatched inputs.
    Usage,
    /// The model could not be loaded or lacks a required capability.
    Model,
    /// Inference or I/O failed while running.
    Runtime,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Usage => 2,
            FailureKind::Model => 3,
            FailureKind::Runtime => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    /// Which part of the pipeline failed, e.g. `config` or `model`.
    pub component: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: FailureKind, component: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            component,
            message: message.into(),
        }
    }

    pub fn usage(component: &'static str, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Usage, component, message)
    }

    pub fn runtime(component: &'static str, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Runtime, component, message)
    }

    /// Classifies an engine error raised while `component` was running.
    pub fn from_core(component: &'static str, err: CoreError) -> Self {
        let kind = match &err {
            CoreError::InvalidConfig(_)
            | CoreError::ShapeMismatch { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::WindowTooLarge { .. }
            | CoreError::AnglesExceedDimension { .. }
            | CoreError::MalformedCurve(_) => FailureKind::Usage,
            CoreError::ModelLoad(_) | CoreError::MissingTensor(_) | CoreError::MissingClassificationHead => {
                FailureKind::Model
            }
            _ => FailureKind::Runtime,
        };
        Self::new(kind, component, err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.component, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a component name to engine errors.
pub trait Context<T> {
    fn during(self, component: &'static str) -> CliResult<T>;
}

impl<T> Context<T> for osadas_core::Result<T> {
    fn during(self, component: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(component, e))
    }
}
