use thiserror::Error;

/// Errors raised by the numerical engine.
///
/// Variants are grouped so that callers (notably the CLI) can map them onto
/// stable exit codes without string matching.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate curve: speed {speed:.3e} at node {node} is below the regularity floor")]
    DegenerateCurve { node: usize, speed: f64 },

    #[error("self-intersection: nodes {i} and {j} are {distance:.3e} apart")]
    SelfIntersection { i: usize, j: usize, distance: f64 },

    #[error("energy blow-up: chord |Δγ| = {chord:.3e} at node {node}, offset w = {offset:.6e} is below the separation floor")]
    EnergyBlowup { node: usize, offset: f64, chord: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear algebra failure: {message} (condition estimate {condition:.3e})")]
    LinearAlgebra { message: String, condition: f64 },

    #[error("flow stagnated: step size {dt:.3e} fell below the minimum without an admissible step")]
    Stagnation { dt: f64 },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for errors that signal a topology violation of the curve.
    pub fn is_self_intersection(&self) -> bool {
        matches!(self, Error::SelfIntersection { .. } | Error::EnergyBlowup { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
