/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Lattice dimensions, matrix shapes or vector lengths do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The forecasting horizon does not exceed the maximum multiplexing shift.
    #[error("causality violation: tau ({tau}) must be greater than p ({p})")]
    Causality { tau: usize, p: usize },
    /// A malformed line in an input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    /// Named series were requested but are not present.
    #[error("missing series: {}", .0.join(", "))]
    MissingSeries(Vec<String>),
    /// Input data are unusable (empty, too short, degenerate).
    #[error("data error: {0}")]
    Data(String),
    /// A numerical routine could not produce a finite answer.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
