//! Closed-form Nash equilibrium between a broker trading in a lit market with
//! instantaneous and transient (exponentially decaying) price impact and an
//! informed client who observes a drift signal.
//!
//! The equilibrium strategies solve a linear forward-backward system
//!
//! ```text
//! dX = (A X + B Y + b_t) dt,          X_0 = (qB0, qI0, Y0)
//! dY = (Â X + B̂ Y + b̂_t) dt + dM,    Y_T = G X_T
//! ```
//!
//! with forward state `X = (Q^B, Q^I, impact)` and backward state
//! `Y = (ν, η, Z)`. The decoupling field `Y_t = ℓ_t + P_t X_t` is obtained from
//! a non-symmetric matrix Riccati equation for `P` ([`riccati`]) and a linear
//! equation for the offset `ℓ` ([`offset`]). [`oracle`] holds independent
//! checks (Picard iteration, finite-difference Gâteaux derivatives) and
//! [`sim`] runs Monte Carlo simulations of the equilibrium.

pub mod error;
pub mod grid;
pub mod model;
pub mod offset;
pub mod oracle;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{
    assemble_matrices, existence_bound, spectral_norm, validate_params, BoundReport, ModelParams,
    SystemMatrices, ValidationReport,
};
pub use offset::{
    build_fundamental_solution, ell_quadrature, solve_offset_odes, FundamentalSolution, OffsetGrid,
};
pub use riccati::{
    residual_profile, riccati_residual, solve_riccati, solve_riccati_direct,
    solve_riccati_linearized, verify_freiling_conditions, ConditionReport, LinearizationPair,
    RiccatiGrid, RiccatiMethod,
};
