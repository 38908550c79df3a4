use thiserror::Error;

pub type Result<T> = std::result::Result<T, HrfError>;

#[derive(Debug, Error)]
pub enum HrfError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("derivative axis {axis} out of range for complex dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("metric is not positive definite at point {point} (coords {coords:?}): smallest eigenvalue {eigenvalue:e}")]
    NotPositive { point: usize, coords: [f64; 4], eigenvalue: f64 },

    #[error("time step {dt:e} exceeds the CFL limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no admissible probe points: {0}")]
    NoAdmissiblePoints(String),

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
