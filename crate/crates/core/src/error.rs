use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty ladder: floor {floor} exceeds ceiling {ceiling}")]
    EmptyLadder { floor: f64, ceiling: f64 },

    #[error("mass mismatch: source {source_mass} vs target {target_mass}")]
    MassMismatch { source_mass: f64, target_mass: f64 },

    #[error("empty support")]
    EmptySupport,

    #[error("solver did not converge after {iterations} iterations (worst mass residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Laguerre cell {index} reaches the periodic replication boundary")]
    CellTooLarge { index: usize },

    #[error("operation requires a periodic configuration")]
    NotPeriodic,

    #[error("ball of radius {radius} around ({cx}, {cy}) leaves the non-periodic domain")]
    BallOutsideDomain { cx: f64, cy: f64, radius: f64 },

    #[error("cell {index} is empty (mass {mass:e})")]
    EmptyCell { index: usize, mass: f64 },

    #[error("index {index} out of range ({len} targets)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("smallness gate violated: E + D = {value:e} > {gate:e}")]
    GateViolated { value: f64, gate: f64 },

    #[error("normal matrix ill-conditioned even at degree {degree} (condition {condition:e})")]
    IllConditioned { degree: usize, condition: f64 },

    #[error("point ({x}, {y}) is outside the evaluable region")]
    OutsideRegion { x: f64, y: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
