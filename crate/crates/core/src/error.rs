use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LdlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LdlError {
    #[error("invalid domain layout: {0}")]
    InvalidLayout(String),

    #[error("class {class} out of range for {class_count} classes")]
    ClassOutOfRange { class: usize, class_count: usize },

    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    #[error("momentum {0} outside [0, 1]")]
    InvalidMomentum(f64),

    #[error("domain {domain} is the own domain of class {class}")]
    SameDomainQuery { class: usize, domain: usize },

    #[error("domain {domain} out of range for {domain_count} domains")]
    DomainOutOfRange { domain: usize, domain_count: usize },

    #[error("degenerate similarity {value:e} between class {class} and domain {domain}")]
    DegenerateSimilarity { class: usize, domain: usize, value: f64 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("label smoothing epsilon {0} outside [0, 1)")]
    InvalidEpsilon(f64),

    #[error("anchor {anchor} has no valid {missing} in the batch")]
    NoValidTriplet { anchor: usize, missing: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward called with a cache that does not match the parameters")]
    StaleCache,

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("class {class} has {available} samples, {required} required per batch")]
    InsufficientSamples { class: usize, available: usize, required: usize },

    #[error("query {query} has no valid gallery match")]
    NoValidMatch { query: usize },

    #[error("domain gap requires at least two domains")]
    SingleDomain,

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LdlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LdlError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        LdlError::Format { path: path.into(), reason: reason.into() }
    }
}
