use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input at index {0}")]
    NonFiniteInput(usize),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("vocabulary size must be at least 2, got {0}")]
    VocabTooSmall(usize),
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("non-finite probability at index {0}")]
    NonFiniteProbability(usize),
    #[error("probability mass {0} is not normalized")]
    MassNotNormalized(f64),
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error("nucleus target must lie in (0, 1], got {0}")]
    InvalidPTarget(f64),
    #[error("cutoff {cutoff} outside 1..={vocab}")]
    InvalidCutoff { cutoff: usize, vocab: usize },
    #[error("truncated prefix has zero probability mass")]
    ZeroMassPrefix,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("normalized entropy {0} outside [0, 1]")]
    EntropyOutOfRange(f64),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("site {site} is not initialized")]
    UninitializedState { site: usize },
    #[error("bad trace magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported trace dtype {0}")]
    UnsupportedDtype(u8),
    #[error("invalid trace header: {0}")]
    InvalidHeader(String),
    #[error("trace payload truncated: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("non-finite logit at payload index {0}")]
    NonFiniteLogit(usize),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

impl Error {
    /// Coarse class used by front ends to map errors onto exit codes.
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io(_) => ErrorKind::Io,
            InvalidParams(_) | InvalidSpec(_) | InvalidSweep(_) | InvalidTemperature(_)
            | InvalidThreshold(_) | InvalidPTarget(_) => ErrorKind::Config,
            BadMagic(_) | UnsupportedVersion(_) | UnsupportedDtype(_) | InvalidHeader(_)
            | TruncatedPayload { .. } => ErrorKind::Io,
            _ => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numeric,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
