use thiserror::Error;

use crate::model::Violation;
use crate::reproduction::Regime;

pub type Result<T> = std::result::Result<T, SiriError>;

#[derive(Debug, Error)]
pub enum SiriError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("matrix is not Metzler: off-diagonal entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("matrix has a negative entry ({row}, {col}) = {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("point component {index} = {value} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("endemic equilibrium iteration stopped after {iterations} iterations with residual {residual:e}")]
    EndemicNoConvergence { iterations: usize, residual: f64 },

    #[error("endemic equilibrium residual {0:e} exceeds the fixed-point bound")]
    EndemicResidual(f64),

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("state left the product simplex at t = {time}: {detail}")]
    SimplexViolation { time: f64, detail: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("model is not d-regular with global rates")]
    NotRegular,

    #[error("operation requires the bistable regime, model is {0:?}")]
    WrongRegime(Regime),

    #[error("{0}")]
    Bracket(String),

    #[error("invalid control action: {0}")]
    Control(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
