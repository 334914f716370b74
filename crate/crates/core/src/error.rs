use thiserror::Error;

/// Errors raised anywhere in the sampling pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid time: t = {t} must exceed the origin t0 = {t0}")]
    InvalidTime { t0: f64, t: f64 },

    #[error("coefficients are singular at t = {t} (origin {origin})")]
    SingularTime { t: f64, origin: f64 },

    #[error("evaluation at state-space boundary point {0}")]
    BoundaryEvaluation(f64),

    #[error("trigonometric singularity: {0}")]
    TrigSingularity(String),

    #[error("models do not share a diffusion coefficient: {0}")]
    IncompatibleModels(String),

    #[error("tridiagonal solve broke down at row {row}: {reason}")]
    SolverBreakdown { row: usize, reason: String },

    #[error("time step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("operator assembly failed at {location}: {reason}")]
    Assembly { location: String, reason: String },

    #[error("query ({x}, {t}) outside field domain {domain}")]
    Domain { x: f64, t: f64, domain: String },

    #[error("every point of the proposal path was rejected")]
    WholePathRejected,

    #[error("sampling failed after {attempts} attempts: {diagnostics}")]
    SamplingFailure { attempts: usize, diagnostics: String },

    #[error("simulation blew up on path {path} at t = {t}")]
    SimulationBlowup { path: usize, t: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown process: {0}")]
    UnknownProcess(String),

    #[error("io: {0}")]
    Io(String),

    #[error("config: {message}")]
    Config { key: Option<String>, message: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("replayed output differs from the manifest: {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),
}

impl Error {
    /// Rejected input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::MissingKey(_)
                | Error::InvalidParameter { .. }
                | Error::InvalidInput(_)
                | Error::UnknownProcess(_)
        )
    }

    /// Config key the error is about, when known.
    pub fn key(&self) -> Option<String> {
        match self {
            Error::Config { key, .. } => key.clone(),
            Error::MissingKey(k) => Some(k.clone()),
            Error::InvalidParameter { name, .. } => Some(name.to_string()),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidTime { .. } => "invalid-time",
            Error::SingularTime { .. } => "singular-time",
            Error::BoundaryEvaluation(_) => "boundary-evaluation",
            Error::TrigSingularity(_) => "trig-singularity",
            Error::IncompatibleModels(_) => "incompatible-models",
            Error::SolverBreakdown { .. } => "solver-breakdown",
            Error::StepFailed { .. } => "step-failed",
            Error::Assembly { .. } => "assembly",
            Error::Domain { .. } => "domain",
            Error::WholePathRejected => "whole-path-rejected",
            Error::SamplingFailure { .. } => "sampling-failure",
            Error::SimulationBlowup { .. } => "simulation-blowup",
            Error::Degenerate(_) => "degenerate",
            Error::UnknownProcess(_) => "unknown-process",
            Error::Io(_) => "io",
            Error::Config { .. } => "config",
            Error::MissingKey(_) => "missing-key",
            Error::ReplayMismatch(_) => "replay-mismatch",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
