use thiserror::Error;

pub type Result<T> = std::result::Result<T, MicError>;

#[derive(Debug, Error)]
pub enum MicError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no usable rows remain after removing incomplete records")]
    EmptyData,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("column `{0}` has zero sample standard deviation")]
    DegenerateColumn(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("information matrix is singular or not positive definite: {0}")]
    RankDeficient(String),

    #[error("did not converge after {iterations} iterations (max |score| = {max_abs_score:.3e})")]
    Convergence {
        iterations: usize,
        max_abs_score: f64,
        last: Vec<f64>,
    },

    #[error("censoring calibration failed: target {target:.3} outside achievable range [{low:.3}, {high:.3}]")]
    Calibration { target: f64, low: f64, high: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
