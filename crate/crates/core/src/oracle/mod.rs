//! Independent checks of the closed-form equilibrium: a Picard fixed-point
//! solver for the zero-noise FBSDE and Monte Carlo Gâteaux derivatives of
//! both players' criteria.

mod gateaux;
mod picard;

pub use gateaux::{
    gateaux_broker, gateaux_informed, random_directions, ControlEnsemble, ControlPath, Direction,
    EquilibriumEnsemble, GateauxConfig, GateauxReport, Player, VerificationEntry,
};
pub use picard::{
    closed_form_trajectory, picard_residual, picard_solve, DeterministicTrajectory, PicardConfig,
    PicardResult,
};
