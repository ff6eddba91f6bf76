use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::sim::{
    broker_integral, draw_drivers, informed_integral, run_feedback, simulate_path, Estimate,
    SimContext,
};

/// Realized signal, flow and control processes of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
}

/// A family of control paths on a common grid, produced on demand.
pub trait ControlEnsemble: Sync {
    fn grid(&self) -> TimeGrid;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn path(&self, i: usize) -> Result<ControlPath>;

    /// Grid of an optional coarser companion ensemble driven by the same
    /// randomness, used to extrapolate the time step away.
    fn coarse_grid(&self) -> Option<TimeGrid> {
        None
    }

    /// Path `i` together with its coarse companion, when there is one.
    fn path_pair(&self, i: usize) -> Result<(ControlPath, Option<ControlPath>)> {
        Ok((self.path(i)?, None))
    }
}

/// Equilibrium controls, regenerated path by path from the simulator.
///
/// With `coarse` set, every path is also replayed on that coarser grid using
/// the same draws.
pub struct EquilibriumEnsemble<'a> {
    pub ctx: SimContext<'a>,
    pub n_paths: usize,
    pub coarse: Option<SimContext<'a>>,
}

fn to_control(pb: crate::sim::PathBundle) -> ControlPath {
    ControlPath {
        alpha: pb.alpha,
        xi: pb.xi,
        nu: pb.nu,
        eta: pb.eta,
    }
}

impl ControlEnsemble for EquilibriumEnsemble<'_> {
    fn grid(&self) -> TimeGrid {
        *self.ctx.grid()
    }

    fn len(&self) -> usize {
        self.n_paths
    }

    fn path(&self, i: usize) -> Result<ControlPath> {
        simulate_path(&self.ctx, i as u64).map(to_control)
    }

    fn coarse_grid(&self) -> Option<TimeGrid> {
        self.coarse.as_ref().map(|c| *c.grid())
    }

    fn path_pair(&self, i: usize) -> Result<(ControlPath, Option<ControlPath>)> {
        let drivers = draw_drivers(&self.ctx, i as u64);
        let fine = run_feedback(&self.ctx, &drivers, i as u64)?;
        let coarse = match &self.coarse {
            Some(c) => {
                let factor = self.ctx.grid().n_steps() / c.grid().n_steps();
                let d = drivers.coarsen(factor)?;
                Some(to_control(run_feedback(c, &d, i as u64)?))
            }
            None => None,
        };
        Ok((to_control(fine), coarse))
    }
}

impl ControlEnsemble for (TimeGrid, Vec<ControlPath>) {
    fn grid(&self) -> TimeGrid {
        self.0
    }

    fn len(&self) -> usize {
        self.1.len()
    }

    fn path(&self, i: usize) -> Result<ControlPath> {
        Ok(self.1[i].clone())
    }
}

/// Adapted perturbation `n_t = base + alpha_loading·α_t + xi_loading·ξ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub base: f64,
    pub alpha_loading: f64,
    pub xi_loading: f64,
}

impl Direction {
    pub const ZERO: Self = Self {
        base: 0.0,
        alpha_loading: 0.0,
        xi_loading: 0.0,
    };

    pub fn value(&self, alpha: f64, xi: f64) -> f64 {
        self.base + self.alpha_loading * alpha + self.xi_loading * xi
    }
}

/// Reproducible random directions. The flow loading is scaled down because
/// the uninformed flow is two orders of magnitude larger than the signal.
pub fn random_directions(count: usize, seed: u64) -> Vec<Direction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let base: f64 = rng.sample(StandardNormal);
            let alpha_loading: f64 = rng.sample(StandardNormal);
            let xi: f64 = rng.sample(StandardNormal);
            Direction {
                base,
                alpha_loading,
                xi_loading: 0.05 * xi,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateauxConfig {
    pub epsilon_list: Vec<f64>,
    pub n_directions: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Size of the finite perturbation used for the strict-improvement check.
    pub perturbation: f64,
}

impl Default for GateauxConfig {
    fn default() -> Self {
        Self {
            epsilon_list: vec![1e-2, 1e-3],
            n_directions: 5,
            n_paths: 10_000,
            seed: 2024,
            perturbation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Informed,
    Broker,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeEstimate {
    pub epsilon: f64,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateauxReport {
    pub player: Player,
    pub direction: Direction,
    pub n_paths_used: usize,
    /// Difference quotients on the simulation grid, one per ε.
    pub derivatives: Vec<DerivativeEstimate>,
    /// Directional derivative: quotients extrapolated linearly to ε = 0 from
    /// the two smallest ε, then to Δt = 0 against the coarse companion grid
    /// when the ensemble has one.
    pub estimate: Estimate,
    pub step_extrapolated: bool,
    /// `J(+εn) + J(−εn) − 2J` at the largest ε.
    pub second_difference: Estimate,
    pub perturbation: f64,
    /// `J(+δn) − J` at the finite perturbation δ.
    pub perturbation_increment: Estimate,
    pub zero_derivative_pass: bool,
    pub concavity_pass: bool,
    pub improvement_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationEntry {
    pub check: String,
    pub statistic: f64,
    pub standard_error: Option<f64>,
    pub pass: bool,
}

impl GateauxReport {
    pub fn entries(&self, tag: &str) -> Vec<VerificationEntry> {
        let who = match self.player {
            Player::Informed => "informed",
            Player::Broker => "broker",
        };
        vec![
            VerificationEntry {
                check: format!("gateaux_{who}_zero_derivative_{tag}"),
                statistic: self.estimate.mean,
                standard_error: Some(self.estimate.standard_error),
                pass: self.zero_derivative_pass,
            },
            VerificationEntry {
                check: format!("gateaux_{who}_second_difference_{tag}"),
                statistic: self.second_difference.mean,
                standard_error: Some(self.second_difference.standard_error),
                pass: self.concavity_pass,
            },
            VerificationEntry {
                check: format!("gateaux_{who}_perturbation_loss_{tag}"),
                statistic: self.perturbation_increment.mean,
                standard_error: Some(self.perturbation_increment.standard_error),
                pass: self.improvement_pass,
            },
        ]
    }
}

/// Criterion of `player` along one path after shifting that player's control
/// by `delta·n`. The other player's control is held as realized.
fn criterion(
    player: Player,
    p: &ModelParams,
    dt: f64,
    path: &ControlPath,
    dir: &Direction,
    delta: f64,
) -> f64 {
    let len = path.alpha.len();
    let shift = |k: usize| delta * dir.value(path.alpha[k], path.xi[k]);
    let s_init = p.initial_midprice();
    match player {
        Player::Informed => {
            let eta: Vec<f64> = (0..len).map(|k| path.eta[k] + shift(k)).collect();
            let mut q = Vec::with_capacity(len);
            let mut y = Vec::with_capacity(len);
            let (mut qi, mut yy) = (p.q_i0, p.y0);
            for k in 0..len {
                q.push(qi);
                y.push(yy);
                qi += dt * eta[k];
                yy += dt * (p.impact_h * path.nu[k] - p.decay_p * yy);
            }
            informed_integral(p, dt, s_init, &path.alpha, &path.nu, &eta, &y, &q)
        }
        Player::Broker => {
            let nu: Vec<f64> = (0..len).map(|k| path.nu[k] + shift(k)).collect();
            let mut q = Vec::with_capacity(len);
            let mut y = Vec::with_capacity(len);
            let (mut qb, mut yy) = (p.q_b0, p.y0);
            for k in 0..len {
                q.push(qb);
                y.push(yy);
                qb += dt * (nu[k] - path.eta[k] - path.xi[k]);
                yy += dt * (p.impact_h * nu[k] - p.decay_p * yy);
            }
            broker_integral(p, dt, s_init, &path.alpha, &path.xi, &nu, &path.eta, &y, &q)
        }
    }
}

fn gateaux(
    player: Player,
    ens: &dyn ControlEnsemble,
    directions: &[Direction],
    params: &ModelParams,
    cfg: &GateauxConfig,
) -> Result<Vec<GateauxReport>> {
    if cfg.epsilon_list.is_empty() || cfg.epsilon_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput(
            "epsilon_list must hold positive values".into(),
        ));
    }
    let grid = ens.grid();
    let coarse_grid = ens.coarse_grid();
    if let Some(cg) = coarse_grid {
        let (nf, nc) = (grid.n_steps(), cg.n_steps());
        if nc == 0 || nc >= nf || nf % nc != 0 || cg.horizon() != grid.horizon() {
            return Err(Error::GridMismatch(format!(
                "coarse grid with {nc} steps does not divide {nf}"
            )));
        }
    }
    let eps_max = cfg.epsilon_list.iter().copied().fold(0.0, f64::max);
    let mut sorted = cfg.epsilon_list.clone();
    sorted.sort_by(f64::total_cmp);
    let n_eps = cfg.epsilon_list.len();

    // Derivative at one path on one grid, extrapolated in ε. The criterion
    // is quadratic in ε, so the quotient is affine and two points suffice.
    let derivative = |dt: f64, path: &ControlPath, base: f64, d: &Direction| {
        let q = |e: f64| (criterion(player, params, dt, path, d, e) - base) / e;
        match sorted.as_slice() {
            [e] => q(*e),
            [e1, e2, ..] => (e2 * q(*e1) - e1 * q(*e2)) / (e2 - e1),
            [] => unreachable!(),
        }
    };

    // Per path and direction: [quotients..., estimate, second difference, increment].
    let rows: Vec<Option<Vec<Vec<f64>>>> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let (path, coarse) = ens.path_pair(i).ok()?;
            let dt = grid.dt();
            let base = criterion(player, params, dt, &path, &Direction::ZERO, 0.0);
            let coarse_base = coarse.as_ref().map(|c| {
                let dtc = coarse_grid.unwrap().dt();
                (
                    dtc,
                    c,
                    criterion(player, params, dtc, c, &Direction::ZERO, 0.0),
                )
            });
            let per_dir = directions
                .iter()
                .map(|d| {
                    let mut row: Vec<f64> = cfg
                        .epsilon_list
                        .iter()
                        .map(|&e| (criterion(player, params, dt, &path, d, e) - base) / e)
                        .collect();
                    let fine = derivative(dt, &path, base, d);
                    row.push(match &coarse_base {
                        Some((dtc, c, cb)) => {
                            let r = dtc / dt;
                            (r * fine - derivative(*dtc, c, *cb, d)) / (r - 1.0)
                        }
                        None => fine,
                    });
                    let plus = criterion(player, params, dt, &path, d, eps_max);
                    let minus = criterion(player, params, dt, &path, d, -eps_max);
                    row.push(plus + minus - 2.0 * base);
                    row.push(criterion(player, params, dt, &path, d, cfg.perturbation) - base);
                    row
                })
                .collect::<Vec<_>>();
            per_dir
                .iter()
                .flatten()
                .all(|v| v.is_finite())
                .then_some(per_dir)
        })
        .collect();
    let valid: Vec<&Vec<Vec<f64>>> = rows.iter().flatten().collect();

    let reports = directions
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let col = |c: usize| {
                Estimate::from_samples(&valid.iter().map(|r| r[j][c]).collect::<Vec<_>>())
            };
            let derivatives: Vec<DerivativeEstimate> = cfg
                .epsilon_list
                .iter()
                .enumerate()
                .map(|(c, &e)| {
                    let est = col(c);
                    DerivativeEstimate {
                        epsilon: e,
                        mean: est.mean,
                        standard_error: est.standard_error,
                    }
                })
                .collect();
            let estimate = col(n_eps);
            let second_difference = col(n_eps + 1);
            let increment = col(n_eps + 2);
            GateauxReport {
                player,
                direction: *d,
                n_paths_used: valid.len(),
                derivatives,
                zero_derivative_pass: estimate.mean.abs() <= 3.0 * estimate.standard_error,
                concavity_pass: second_difference.mean <= 3.0 * second_difference.standard_error,
                improvement_pass: increment.mean < -3.0 * increment.standard_error,
                estimate,
                step_extrapolated: coarse_grid.is_some(),
                second_difference,
                perturbation: cfg.perturbation,
                perturbation_increment: increment,
            }
        })
        .collect();
    Ok(reports)
}

/// Directional derivative of the informed trader's criterion in `η`, with `ν`
/// held at its realized values.
pub fn gateaux_informed(
    ens: &dyn ControlEnsemble,
    directions: &[Direction],
    params: &ModelParams,
    cfg: &GateauxConfig,
) -> Result<Vec<GateauxReport>> {
    gateaux(Player::Informed, ens, directions, params, cfg)
}

/// Directional derivative of the broker's criterion in `ν`, with `η` held at
/// its realized values.
pub fn gateaux_broker(
    ens: &dyn ControlEnsemble,
    directions: &[Direction],
    params: &ModelParams,
    cfg: &GateauxConfig,
) -> Result<Vec<GateauxReport>> {
    gateaux(Player::Broker, ens, directions, params, cfg)
}
