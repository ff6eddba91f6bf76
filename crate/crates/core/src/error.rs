use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{field}` is invalid: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("parameter `{field}` is not finite")]
    NonFiniteParameter { field: &'static str },

    #[error("Riccati solution exceeded the blow-up cap at t = {t}")]
    BlowUp { t: f64 },

    #[error("linearization matrix R is numerically singular at t = {t} (rcond = {rcond:e})")]
    SingularR { t: f64, rcond: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("t = {t} is not a node of the time grid")]
    NotOnGrid { t: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (gap {final_gap:e})")]
    NoConvergence { iterations: usize, final_gap: f64 },

    #[error("path {path} produced a non-finite value at t = {t}")]
    NonFinite { path: u64, t: f64 },

    #[error("{0}")]
    InvalidInput(String),
}
