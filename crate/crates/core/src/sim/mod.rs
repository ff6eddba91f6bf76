//! Monte Carlo simulation of the equilibrium under the feedback strategies
//! `(ν, η, Z) = ℓ_t + P_t (Q^B, Q^I, Y)`.
//!
//! Signal and uninformed flow advance by their exact Ornstein-Uhlenbeck
//! transitions; inventories, impact and cash by explicit Euler.

mod performance;
mod quantile;
mod rng;

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use performance::{
    broker_integral, evaluate_performance, informed_integral, price_martingale, Performance,
    PerformanceForm,
};
pub use quantile::{quantile_bands, quantile_sorted};
pub use rng::path_rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::offset::OffsetGrid;
use crate::riccati::RiccatiGrid;

/// Names of the per-node processes, in CSV column order.
pub const PROCESS_NAMES: [&str; 13] = [
    "alpha", "xi", "S", "Y", "qB", "qI", "nu", "eta", "Z", "XB", "XI", "mtmB", "mtmI",
];

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub q_b: Vec<f64>,
    pub q_i: Vec<f64>,
    pub x_b: Vec<f64>,
    pub x_i: Vec<f64>,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub z: Vec<f64>,
    pub mtm_b: Vec<f64>,
    pub mtm_i: Vec<f64>,
    /// `σ^S ΔW_k` on each interval.
    pub price_noise: Vec<f64>,
}

impl PathBundle {
    pub fn process(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "alpha" => &self.alpha,
            "xi" => &self.xi,
            "S" => &self.s,
            "Y" => &self.y,
            "qB" => &self.q_b,
            "qI" => &self.q_i,
            "nu" => &self.nu,
            "eta" => &self.eta,
            "Z" => &self.z,
            "XB" => &self.x_b,
            "XI" => &self.x_i,
            "mtmB" => &self.mtm_b,
            "mtmI" => &self.mtm_i,
            _ => return None,
        })
    }

    /// Rows `t,alpha,xi,S,Y,qB,qI,nu,eta,Z,XB,XI,mtmB,mtmI`, one per node.
    /// `path_id` adds a leading `path` column when set.
    pub fn write_csv_rows(&self, out: &mut String, path_id: Option<u64>) {
        for k in 0..self.grid.len() {
            if let Some(id) = path_id {
                let _ = write!(out, "{id},");
            }
            let _ = write!(out, "{}", self.grid.node(k));
            for name in PROCESS_NAMES {
                let _ = write!(out, ",{}", self.process(name).unwrap()[k]);
            }
            out.push('\n');
        }
    }

    pub fn csv_header(with_path: bool) -> String {
        let mut h = String::from(if with_path { "path,t" } else { "t" });
        for name in PROCESS_NAMES {
            h.push(',');
            h.push_str(name);
        }
        h
    }
}

/// Everything needed to simulate paths: parameters plus the feedback
/// coefficients on a common grid.
#[derive(Debug, Clone)]
pub struct SimContext<'a> {
    pub params: &'a ModelParams,
    pub riccati: &'a RiccatiGrid,
    pub offset: &'a OffsetGrid,
    pub seed: u64,
    pub antithetic: bool,
}

impl<'a> SimContext<'a> {
    pub fn new(
        params: &'a ModelParams,
        riccati: &'a RiccatiGrid,
        offset: &'a OffsetGrid,
        seed: u64,
    ) -> Result<Self> {
        riccati.grid().ensure_same(offset.grid())?;
        Ok(Self {
            params,
            riccati,
            offset,
            seed,
            antithetic: false,
        })
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        self.riccati.grid()
    }
}

fn ou_step(kappa: f64, sigma: f64, dt: f64) -> (f64, f64) {
    if kappa == 0.0 {
        return (1.0, sigma * dt.sqrt());
    }
    let decay = (-kappa * dt).exp();
    let sd = sigma * ((1.0 - (-2.0 * kappa * dt).exp()) / (2.0 * kappa)).sqrt();
    (decay, sd)
}

/// Exogenous randomness of one path: signal and flow at the nodes and the
/// price-noise increments `σ^S ΔW_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drivers {
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub price_noise: Vec<f64>,
}

impl Drivers {
    /// The same randomness seen on a grid `factor` times coarser. Exact OU
    /// transitions make the subsampled signal and flow exact samples there.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.price_noise.len();
        if factor == 0 || n % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "{n} steps cannot be coarsened by {factor}"
            )));
        }
        Ok(Self {
            alpha: self.alpha.iter().step_by(factor).copied().collect(),
            xi: self.xi.iter().step_by(factor).copied().collect(),
            price_noise: self
                .price_noise
                .chunks(factor)
                .map(|c| c.iter().sum())
                .collect(),
        })
    }
}

/// Draw the drivers of path `path`.
///
/// With antithetic sampling, paths `2j` and `2j + 1` share stream `j` with
/// opposite normal draws.
pub fn draw_drivers(ctx: &SimContext<'_>, path: u64) -> Drivers {
    let p = ctx.params;
    let grid = ctx.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let (mut rng, sign) = if ctx.antithetic {
        (
            path_rng(ctx.seed, path / 2),
            if path % 2 == 0 { 1.0 } else { -1.0 },
        )
    } else {
        (path_rng(ctx.seed, path), 1.0)
    };
    let (da, sda) = ou_step(p.kappa_alpha, p.sigma_alpha, dt);
    let (dx, sdx) = ou_step(p.kappa_xi, p.sigma_xi, dt);
    let sds = p.sigma_s * dt.sqrt();

    let mut d = Drivers {
        alpha: Vec::with_capacity(n + 1),
        xi: Vec::with_capacity(n + 1),
        price_noise: Vec::with_capacity(n),
    };
    let (mut alpha, mut xi) = (p.alpha0, p.xi0);
    d.alpha.push(alpha);
    d.xi.push(xi);
    for _ in 0..n {
        let z_alpha: f64 = rng.sample(StandardNormal);
        let z_xi: f64 = rng.sample(StandardNormal);
        let z_s: f64 = rng.sample(StandardNormal);
        alpha = da * alpha + sign * sda * z_alpha;
        xi = dx * xi + sign * sdx * z_xi;
        d.alpha.push(alpha);
        d.xi.push(xi);
        d.price_noise.push(sign * sds * z_s);
    }
    d
}

/// Run the feedback strategies against given drivers.
pub fn run_feedback(ctx: &SimContext<'_>, drivers: &Drivers, path: u64) -> Result<PathBundle> {
    let p = ctx.params;
    let grid = *ctx.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    if drivers.price_noise.len() != n || drivers.alpha.len() != n + 1 || drivers.xi.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "drivers have {} steps, grid has {n}",
            drivers.price_noise.len()
        )));
    }

    let with_len = |len| Vec::with_capacity(len);
    let mut pb = PathBundle {
        grid,
        alpha: drivers.alpha.clone(),
        xi: drivers.xi.clone(),
        s: with_len(n + 1),
        y: with_len(n + 1),
        q_b: with_len(n + 1),
        q_i: with_len(n + 1),
        x_b: with_len(n + 1),
        x_i: with_len(n + 1),
        nu: with_len(n + 1),
        eta: with_len(n + 1),
        z: with_len(n + 1),
        mtm_b: with_len(n + 1),
        mtm_i: with_len(n + 1),
        price_noise: drivers.price_noise.clone(),
    };

    let (mut q_b, mut q_i, mut y) = (p.q_b0, p.q_i0, p.y0);
    let (mut x_b, mut x_i) = (0.0, 0.0);
    let mut signal_integral = 0.0;
    let mut price_mart = 0.0;
    let mut s = p.s0 + p.y0;

    for k in 0..=n {
        let (alpha, xi) = (drivers.alpha[k], drivers.xi[k]);
        let state = Vector3::new(q_b, q_i, y);
        let ctrl = ctx.offset.ell(k, alpha, xi) + ctx.riccati.p(k) * state;
        let (nu, eta, z) = (ctrl[0], ctrl[1], ctrl[2]);

        pb.s.push(s);
        pb.y.push(y);
        pb.q_b.push(q_b);
        pb.q_i.push(q_i);
        pb.x_b.push(x_b);
        pb.x_i.push(x_i);
        pb.nu.push(nu);
        pb.eta.push(eta);
        pb.z.push(z);
        pb.mtm_b.push(x_b + q_b * s);
        pb.mtm_i.push(x_i + q_i * s);

        let finite = [nu, eta, z, q_b, q_i, y, x_b, x_i, s, alpha, xi]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                path,
                t: grid.node(k),
            });
        }
        if k == n {
            break;
        }

        x_b += dt * (-(s + p.a * nu) * nu + (s + p.b * eta) * eta + (s + p.c * xi) * xi);
        x_i -= dt * (s + p.b * eta) * eta;
        q_b += dt * (nu - eta - xi);
        q_i += dt * eta;
        y += dt * (p.impact_h * nu - p.decay_p * y);

        signal_integral += dt * alpha;
        price_mart += drivers.price_noise[k];
        s = p.s0 + signal_integral + y + price_mart;
    }
    Ok(pb)
}

/// Simulate path `path` of the ensemble.
pub fn simulate_path(ctx: &SimContext<'_>, path: u64) -> Result<PathBundle> {
    run_feedback(ctx, &draw_drivers(ctx, path), path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub n_paths: usize,
    pub antithetic: bool,
    /// Node stride of the quantile bands; `None` picks about 200 band nodes.
    pub band_stride: Option<usize>,
    pub log_processes: Vec<String>,
    /// Number of leading paths returned in full.
    pub n_sample_paths: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            antithetic: false,
            band_stride: None,
            log_processes: ["qB", "qI", "mtmB", "mtmI"].map(String::from).to_vec(),
            n_sample_paths: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

impl Estimate {
    /// Sample mean and its standard error, summed in input order.
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                standard_error: f64::NAN,
            };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            standard_error: se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessBands {
    pub process: String,
    pub t: Vec<f64>,
    pub q05: Vec<f64>,
    pub median: Vec<f64>,
    pub q95: Vec<f64>,
}

impl ProcessBands {
    /// Index of the band node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.t.iter().enumerate() {
            if (ti - t).abs() < (self.t[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    pub fn width_at(&self, t: f64) -> f64 {
        let i = self.nearest(t);
        self.q95[i] - self.q05[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalViolation {
    /// `max |ν_T + (2φ − 𝔥)/(2a) Q^B_T| / (1 + |Q^B_T|)`.
    pub nu: f64,
    /// `max |η_T + ψ/b Q^I_T| / (1 + |Q^I_T|)`.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub n_paths: usize,
    pub n_valid: usize,
    pub n_non_finite: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub n_steps: usize,
    pub horizon: f64,
    pub j_i_terminal: Estimate,
    pub j_i_integral: Estimate,
    pub j_b_terminal: Estimate,
    pub j_b_integral: Estimate,
    /// Terminal minus integral form, per path.
    pub gap_i: Estimate,
    pub gap_b: Estimate,
    /// Same gap with the price martingale subtracted (control variate).
    pub gap_i_adjusted: Estimate,
    pub gap_b_adjusted: Estimate,
    pub terminal_violation: TerminalViolation,
    pub bands: Vec<ProcessBands>,
}

impl MonteCarloReport {
    pub fn bands_for(&self, process: &str) -> Option<&ProcessBands> {
        self.bands.iter().find(|b| b.process == process)
    }

    /// Bands as CSV: `process,t,q05,median,q95`.
    pub fn bands_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("process,t,q05,median,q95\n");
        for b in &self.bands {
            for i in 0..b.t.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    b.process, b.t[i], b.q05[i], b.median[i], b.q95[i]
                );
            }
        }
        out
    }
}

pub struct SimulationOutput {
    pub report: MonteCarloReport,
    pub samples: Vec<PathBundle>,
}

struct PathSummary {
    terminal: Performance,
    integral: Performance,
    martingale: Performance,
    viol_nu: f64,
    viol_eta: f64,
    logged: Vec<Vec<f64>>,
}

pub fn band_nodes(grid: &TimeGrid, stride: Option<usize>) -> Vec<usize> {
    let n = grid.n_steps();
    let stride = stride.unwrap_or((n / 200).max(1)).max(1);
    let mut nodes: Vec<usize> = (0..=n).step_by(stride).collect();
    if *nodes.last().unwrap() != n {
        nodes.push(n);
    }
    nodes
}

/// Simulate `opts.n_paths` paths and aggregate.
///
/// Paths are generated in parallel and reduced in path order, so the report
/// does not depend on the number of threads.
pub fn simulate_equilibrium(ctx: &SimContext<'_>, opts: &SimOptions) -> Result<SimulationOutput> {
    if opts.n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be at least 1".into()));
    }
    for name in &opts.log_processes {
        if !PROCESS_NAMES.contains(&name.as_str()) {
            return Err(Error::InvalidInput(format!("unknown process `{name}`")));
        }
    }
    let ctx = ctx.clone().with_antithetic(opts.antithetic);
    let p = ctx.params;
    let grid = *ctx.grid();
    let n = grid.n_steps();
    let nodes = band_nodes(&grid, opts.band_stride);
    let nu_gain = (2.0 * p.phi - p.impact_h) / (2.0 * p.a);
    let eta_gain = p.psi / p.b;

    let summaries: Vec<Option<PathSummary>> = (0..opts.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let pb = simulate_path(&ctx, i).ok()?;
            let logged = opts
                .log_processes
                .iter()
                .map(|name| {
                    let v = pb.process(name).unwrap();
                    nodes.iter().map(|&k| v[k]).collect()
                })
                .collect();
            Some(PathSummary {
                terminal: evaluate_performance(&pb, p, PerformanceForm::Terminal),
                integral: evaluate_performance(&pb, p, PerformanceForm::Integral),
                martingale: price_martingale(&pb),
                viol_nu: (pb.nu[n] + nu_gain * pb.q_b[n]).abs() / (1.0 + pb.q_b[n].abs()),
                viol_eta: (pb.eta[n] + eta_gain * pb.q_i[n]).abs() / (1.0 + pb.q_i[n].abs()),
                logged,
            })
        })
        .collect();

    let valid: Vec<&PathSummary> = summaries.iter().flatten().collect();
    let n_valid = valid.len();
    let col = |f: &dyn Fn(&PathSummary) -> f64| valid.iter().map(|s| f(s)).collect::<Vec<_>>();
    let est = |f: &dyn Fn(&PathSummary) -> f64| Estimate::from_samples(&col(f));

    let t_nodes: Vec<f64> = nodes.iter().map(|&k| grid.node(k)).collect();
    let mut bands = Vec::new();
    if n_valid >= 2 {
        for (j, name) in opts.log_processes.iter().enumerate() {
            let ens: Vec<Vec<f64>> = valid.iter().map(|s| s.logged[j].clone()).collect();
            let q = quantile_bands(&ens, &[0.05, 0.5, 0.95])?;
            let mut it = q.into_iter();
            bands.push(ProcessBands {
                process: name.clone(),
                t: t_nodes.clone(),
                q05: it.next().unwrap(),
                median: it.next().unwrap(),
                q95: it.next().unwrap(),
            });
        }
    }

    let report = MonteCarloReport {
        n_paths: opts.n_paths,
        n_valid,
        n_non_finite: opts.n_paths - n_valid,
        seed: ctx.seed,
        antithetic: opts.antithetic,
        n_steps: n,
        horizon: grid.horizon(),
        j_i_terminal: est(&|s| s.terminal.j_i),
        j_i_integral: est(&|s| s.integral.j_i),
        j_b_terminal: est(&|s| s.terminal.j_b),
        j_b_integral: est(&|s| s.integral.j_b),
        gap_i: est(&|s| s.terminal.j_i - s.integral.j_i),
        gap_b: est(&|s| s.terminal.j_b - s.integral.j_b),
        gap_i_adjusted: est(&|s| s.terminal.j_i - s.integral.j_i - s.martingale.j_i),
        gap_b_adjusted: est(&|s| s.terminal.j_b - s.integral.j_b - s.martingale.j_b),
        terminal_violation: TerminalViolation {
            nu: valid.iter().map(|s| s.viol_nu).fold(0.0, f64::max),
            eta: valid.iter().map(|s| s.viol_eta).fold(0.0, f64::max),
        },
        bands,
    };

    let samples = (0..opts.n_sample_paths.min(opts.n_paths) as u64)
        .filter_map(|i| simulate_path(&ctx, i).ok())
        .collect();
    Ok(SimulationOutput { report, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_matrices;
    use crate::offset::solve_offset_odes;
    use crate::riccati::solve_riccati;

    fn pipeline(p: &ModelParams, n: usize) -> (RiccatiGrid, OffsetGrid) {
        let mat = assemble_matrices(p).unwrap();
        let grid = TimeGrid::new(p.horizon, n).unwrap();
        let rg = solve_riccati(p, &grid).unwrap();
        let off = solve_offset_odes(&rg, p, &mat, &grid).unwrap();
        (rg, off)
    }

    #[test]
    fn zero_data_gives_zero_paths() {
        let p = ModelParams {
            s0: 0.0,
            ..ModelParams::default().without_noise()
        };
        let (rg, off) = pipeline(&p, 200);
        let ctx = SimContext::new(&p, &rg, &off, 1).unwrap();
        let pb = simulate_path(&ctx, 0).unwrap();
        for name in PROCESS_NAMES {
            assert!(
                pb.process(name).unwrap().iter().all(|&v| v == 0.0),
                "{name}"
            );
        }
        let perf = evaluate_performance(&pb, &p, PerformanceForm::Terminal);
        assert_eq!((perf.j_i, perf.j_b), (0.0, 0.0));
    }

    #[test]
    fn ou_moments() {
        let (d, sd) = ou_step(5.0, 1.0, 0.01);
        assert!((d - (-0.05f64).exp()).abs() < 1e-15);
        assert!((sd * sd - (1.0 - (-0.1f64).exp()) / 10.0).abs() < 1e-15);
        assert_eq!(ou_step(0.0, 2.0, 0.25), (1.0, 1.0));
    }

    #[test]
    fn coarsened_drivers() {
        let p = ModelParams::default();
        let (rg, off) = pipeline(&p, 40);
        let ctx = SimContext::new(&p, &rg, &off, 2).unwrap();
        let d = draw_drivers(&ctx, 0);
        let c = d.coarsen(4).unwrap();
        assert_eq!(c.alpha.len(), 11);
        assert_eq!(c.alpha[3], d.alpha[12]);
        let total: f64 = d.price_noise.iter().sum();
        assert!((c.price_noise.iter().sum::<f64>() - total).abs() < 1e-12);
        assert!(d.coarsen(3).is_err());
    }

    #[test]
    fn terminal_feedback_holds_pathwise() {
        let p = ModelParams::default();
        let (rg, off) = pipeline(&p, 500);
        let ctx = SimContext::new(&p, &rg, &off, 3).unwrap();
        let out = simulate_equilibrium(
            &ctx,
            &SimOptions {
                n_paths: 64,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.report.terminal_violation.nu <= 1e-6);
        assert!(out.report.terminal_violation.eta <= 1e-6);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let p = ModelParams::default();
        let (rg, off) = pipeline(&p, 200);
        let ctx = SimContext::new(&p, &rg, &off, 99).unwrap();
        let opts = SimOptions {
            n_paths: 50,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_equilibrium(&ctx, &opts).unwrap().report)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn antithetic_inventory_band_is_symmetric() {
        let p = ModelParams::default();
        let (rg, off) = pipeline(&p, 400);
        let ctx = SimContext::new(&p, &rg, &off, 5).unwrap();
        let out = simulate_equilibrium(
            &ctx,
            &SimOptions {
                n_paths: 400,
                antithetic: true,
                ..Default::default()
            },
        )
        .unwrap();
        let b = out.report.bands_for("qI").unwrap();
        let last = b.t.len() - 1;
        let scale = b.q95[last] - b.q05[last];
        assert!((b.q95[last] + b.q05[last]).abs() <= 1e-9 * scale);
        assert!(b.median[last].abs() <= 1e-9 * scale);
    }

    #[test]
    fn feedback_ignores_third_row_without_decay() {
        let p = ModelParams::default();
        let (rg, off) = pipeline(&p, 300);
        let mat = assemble_matrices(&p).unwrap();
        let mut ps = rg.matrices().to_vec();
        for m in ps.iter_mut() {
            m[(2, 0)] += 3.0;
            m[(2, 1)] -= 2.0;
        }
        let bent =
            RiccatiGrid::from_nodes(*rg.grid(), ps, crate::RiccatiMethod::Direct, &mat).unwrap();
        let a = simulate_path(&SimContext::new(&p, &rg, &off, 8).unwrap(), 2).unwrap();
        let b = simulate_path(&SimContext::new(&p, &bent, &off, 8).unwrap(), 2).unwrap();
        assert_eq!(a.nu, b.nu);
        assert_eq!(a.eta, b.eta);
        assert_ne!(a.z, b.z);
    }

    #[test]
    fn cash_transfer_between_informed_and_broker() {
        // Only η trades: broker receives exactly what the informed trader pays.
        let p = ModelParams {
            impact_h: 0.0,
            sigma_xi: 0.0,
            ..Default::default()
        };
        let (rg, off) = pipeline(&p, 300);
        let ctx = SimContext::new(&p, &rg, &off, 4).unwrap();
        let pb = simulate_path(&ctx, 0).unwrap();
        let dt = pb.grid.dt();
        // Broker also pays a ν² on lit trades; remove that leg.
        let mut lit = 0.0;
        for k in 0..pb.grid.n_steps() {
            lit += dt * (pb.s[k] + p.a * pb.nu[k]) * pb.nu[k];
        }
        let n = pb.grid.n_steps();
        assert!((pb.x_b[n] + lit + pb.x_i[n]).abs() <= 1e-9 * pb.x_i[n].abs().max(1.0));
    }

    #[test]
    fn representation_gap_shrinks_with_steps() {
        let p = ModelParams {
            q_i0: 1.0,
            q_b0: -1.0,
            alpha0: 0.5,
            ..Default::default()
        };
        let gap = |n| {
            let (rg, off) = pipeline(&p, n);
            let ctx = SimContext::new(&p, &rg, &off, 21).unwrap();
            let r = simulate_equilibrium(
                &ctx,
                &SimOptions {
                    n_paths: 200,
                    log_processes: vec![],
                    ..Default::default()
                },
            )
            .unwrap()
            .report;
            r.gap_i_adjusted.mean.abs() + r.gap_b_adjusted.mean.abs()
        };
        let (g1, g2) = (gap(250), gap(500));
        assert!(g2 < 0.7 * g1, "{g1} {g2}");
    }
}
