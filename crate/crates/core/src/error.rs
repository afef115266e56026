use thiserror::Error;

/// Errors raised by the estimators, simulators, and file formats.
#[derive(Debug, Error)]
pub enum SisirError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("simulation failure: {0}")]
    SimulationFailure(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SisirError {
    fn from(e: std::io::Error) -> Self {
        SisirError::Io(e.to_string())
    }
}

impl SisirError {
    /// Short machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            SisirError::InvalidArgument(_) => "invalid-argument",
            SisirError::InvalidData(_) => "invalid-data",
            SisirError::SingularMatrix(_) => "singular-matrix",
            SisirError::NumericalFailure(_) => "numerical-failure",
            SisirError::RankDeficient(_) => "rank-deficient",
            SisirError::SimulationFailure(_) => "simulation-failure",
            SisirError::Parse { .. } => "parse-error",
            SisirError::ModelFile(_) => "model-file-error",
            SisirError::UnsupportedVersion { .. } => "unsupported-version",
            SisirError::Io(_) => "io-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, SisirError>;
