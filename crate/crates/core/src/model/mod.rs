//! Model parameters, FBSDE coefficient matrices, and the small-horizon
//! existence bound.

mod bound;
mod matrices;
mod params;

pub use bound::{existence_bound, spectral_norm, BoundReport};
pub use matrices::{assemble_matrices, SystemMatrices};
pub use params::{
    validate_params, CheckKind, ModelParams, ParamCheck, ValidationReport, PARAMETER_NAMES,
};
