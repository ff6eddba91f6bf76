//! Terminal-value matrix Riccati equation
//!
//! ```text
//! P' = Â + B̂ P − P A − P B P,    P_T = G
//! ```
//!
//! solved either directly or through the linear system for `(R, 𝒯)` with
//! `P = 𝒯 R⁻¹`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{assemble_matrices, spectral_norm, ModelParams, SystemMatrices};

/// Entries above this magnitude are treated as finite-time escape.
pub const BLOW_UP_CAP: f64 = 1e12;
/// Smallest acceptable reciprocal condition number of `R`.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Fewest RK4 substeps taken per grid interval.
const MIN_SUBSTEPS: usize = 8;
/// Target value of `h·λ` per substep, `λ` a bound on the local Jacobian.
const STEP_STIFFNESS: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiccatiMethod {
    Direct,
    Linearized,
}

impl RiccatiMethod {
    /// Linearized in the regime `𝔭 = r^B = 0`, direct otherwise.
    pub fn default_for(p: &ModelParams) -> Self {
        if p.decay_p == 0.0 && p.r_b == 0.0 {
            Self::Linearized
        } else {
            Self::Direct
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Linearized => "linearized",
        }
    }
}

/// `P_t` on every node of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiGrid {
    grid: TimeGrid,
    p: Vec<Matrix3<f64>>,
    dp: Vec<Matrix3<f64>>,
    /// Solver values at interval midpoints, when available.
    p_mid: Option<Vec<Matrix3<f64>>>,
    method: RiccatiMethod,
    max_residual: f64,
    substeps: usize,
}

#[inline]
pub(crate) fn riccati_rhs(m: &SystemMatrices, p: &Matrix3<f64>) -> Matrix3<f64> {
    m.a_hat + m.b_hat * p - p * m.a - p * m.b * p
}

impl RiccatiGrid {
    /// Wrap node values of `P`; derivatives and the residual are recomputed
    /// from `mat`.
    pub fn from_nodes(
        grid: TimeGrid,
        p: Vec<Matrix3<f64>>,
        method: RiccatiMethod,
        mat: &SystemMatrices,
    ) -> Result<Self> {
        if p.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} matrices for {} nodes",
                p.len(),
                grid.len()
            )));
        }
        let dp = p.iter().map(|pk| riccati_rhs(mat, pk)).collect();
        let mut rg = Self {
            grid,
            p,
            dp,
            p_mid: None,
            method,
            max_residual: 0.0,
            substeps: 1,
        };
        rg.max_residual = riccati_residual(&rg, mat);
        Ok(rg)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn method(&self) -> RiccatiMethod {
        self.method
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// RK4 substeps taken per grid interval.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn p(&self, k: usize) -> &Matrix3<f64> {
        &self.p[k]
    }

    pub fn matrices(&self) -> &[Matrix3<f64>] {
        &self.p
    }

    /// `P_t` at fraction `theta ∈ [0, 1]` of interval `k`.
    ///
    /// Cubic Hermite through the node values and derivatives, plus a quartic
    /// bubble matching the solver's own midpoint value when it was recorded.
    pub fn interpolate(&self, k: usize, theta: f64) -> Matrix3<f64> {
        if theta == 0.0 {
            return self.p[k];
        }
        if theta == 1.0 {
            return self.p[k + 1];
        }
        let cubic = self.hermite(k, theta);
        match &self.p_mid {
            Some(mid) => {
                let bubble = theta * theta * (1.0 - theta) * (1.0 - theta);
                cubic + (mid[k] - self.hermite(k, 0.5)) * (16.0 * bubble)
            }
            None => cubic,
        }
    }

    fn hermite(&self, k: usize, theta: f64) -> Matrix3<f64> {
        let h = self.grid.dt();
        let (s, s2, s3) = (theta, theta * theta, theta * theta * theta);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        self.p[k] * h00 + self.dp[k] * (h10 * h) + self.p[k + 1] * h01 + self.dp[k + 1] * (h11 * h)
    }

    pub fn g_b(&self, k: usize) -> f64 {
        self.p[k][(0, 0)]
    }
    pub fn g_i(&self, k: usize) -> f64 {
        self.p[k][(0, 1)]
    }
    pub fn g_y(&self, k: usize) -> f64 {
        self.p[k][(0, 2)]
    }
    pub fn h_b(&self, k: usize) -> f64 {
        self.p[k][(1, 0)]
    }
    pub fn h_i(&self, k: usize) -> f64 {
        self.p[k][(1, 1)]
    }
    pub fn h_y(&self, k: usize) -> f64 {
        self.p[k][(1, 2)]
    }
    pub fn f_b(&self, k: usize) -> f64 {
        self.p[k][(2, 0)]
    }
    pub fn f_i(&self, k: usize) -> f64 {
        self.p[k][(2, 1)]
    }
    pub fn f_y(&self, k: usize) -> f64 {
        self.p[k][(2, 2)]
    }

    pub const CSV_HEADER: &'static str = "t,gB,gI,gY,hB,hI,hY,fB,fI,fY";

    /// CSV body (header plus one row per node). `preamble` lines are written
    /// first, each prefixed with `# `.
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# method: {}", self.method.as_str());
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        for (k, p) in self.p.iter().enumerate() {
            let _ = write!(out, "{}", self.grid.node(k));
            for i in 0..3 {
                for j in 0..3 {
                    let _ = write!(out, ",{}", p[(i, j)]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse CSV written by [`RiccatiGrid::to_csv`].
    pub fn from_csv(text: &str, mat: &SystemMatrices) -> Result<Self> {
        let mut method = RiccatiMethod::Direct;
        let mut times = Vec::new();
        let mut mats = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                match c.trim().strip_prefix("method:").map(str::trim) {
                    Some("linearized") => method = RiccatiMethod::Linearized,
                    Some("direct") => method = RiccatiMethod::Direct,
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != Self::CSV_HEADER {
                    return Err(Error::InvalidInput(format!(
                        "expected header `{}`, found `{line}`",
                        Self::CSV_HEADER
                    )));
                }
                header_seen = true;
                continue;
            }
            let vals = parse_row(line, 10, lineno + 1)?;
            times.push(vals[0]);
            mats.push(Matrix3::from_row_slice(&vals[1..]));
        }
        let grid = grid_from_times(&times)?;
        Self::from_nodes(grid, mats, method, mat)
    }
}

pub(crate) fn parse_row(line: &str, width: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("line {lineno}: {e}")))?;
    if vals.len() != width {
        return Err(Error::InvalidInput(format!(
            "line {lineno}: expected {width} columns, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

pub(crate) fn grid_from_times(times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("need at least two rows".into()));
    }
    let grid = TimeGrid::new(times[times.len() - 1], times.len() - 1)?;
    for (k, &t) in times.iter().enumerate() {
        if (t - grid.node(k)).abs() > 1e-9 * grid.horizon().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "row {k}: time {t} is not on a uniform grid"
            )));
        }
    }
    Ok(grid)
}

/// Even, so that every interval midpoint is a substep boundary.
fn substeps_for(dt: f64, lambda: f64) -> usize {
    let m = MIN_SUBSTEPS.max((dt * lambda / STEP_STIFFNESS).ceil() as usize);
    m + m % 2
}

fn check_cap(p: &Matrix3<f64>, t: f64) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_CAP) {
        return Err(Error::BlowUp { t });
    }
    Ok(())
}

/// Backward RK4 on the Riccati equation itself.
///
/// Each grid interval is split into `max(8, ⌈Δt·λ/0.25⌉)` substeps with
/// `λ = |A| + |B̂| + 2|B||G|`, which keeps the steep layer next to `T`
/// resolved when `|G|` is large.
pub fn solve_riccati_direct(mat: &SystemMatrices, grid: &TimeGrid) -> Result<RiccatiGrid> {
    let lambda = spectral_norm(&mat.a)
        + spectral_norm(&mat.b_hat)
        + 2.0 * spectral_norm(&mat.b) * spectral_norm(&mat.g);
    solve_riccati_direct_substeps(mat, grid, substeps_for(grid.dt(), lambda))
}

/// [`solve_riccati_direct`] with a fixed substep count (1 = plain RK4).
pub fn solve_riccati_direct_substeps(
    mat: &SystemMatrices,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<RiccatiGrid> {
    let substeps = substeps.max(1);
    let n = grid.n_steps();
    let h = -grid.dt() / substeps as f64;
    let mut p = vec![Matrix3::zeros(); n + 1];
    let mut mid = vec![Matrix3::zeros(); n];
    p[n] = mat.g;
    let mut cur = mat.g;
    for k in (0..n).rev() {
        for s in 0..substeps {
            if substeps % 2 == 0 && s == substeps / 2 {
                mid[k] = cur;
            }
            let k1 = riccati_rhs(mat, &cur);
            let k2 = riccati_rhs(mat, &(cur + k1 * (0.5 * h)));
            let k3 = riccati_rhs(mat, &(cur + k2 * (0.5 * h)));
            let k4 = riccati_rhs(mat, &(cur + k3 * h));
            cur += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            let t = grid.node(k + 1) + h * (s + 1) as f64;
            check_cap(&cur, t)?;
        }
        p[k] = cur;
    }
    let mut rg = RiccatiGrid::from_nodes(*grid, p, RiccatiMethod::Direct, mat)?;
    rg.substeps = substeps;
    if substeps % 2 == 0 {
        rg.p_mid = Some(mid);
    }
    Ok(rg)
}

/// `R_t` and `𝒯_t` on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPair {
    pub r: Vec<Matrix3<f64>>,
    pub t_mat: Vec<Matrix3<f64>>,
    pub min_condition_r: f64,
}

/// Reciprocal 1-norm condition number.
fn rcond(m: &Matrix3<f64>) -> f64 {
    let norm1 = |x: &Matrix3<f64>| {
        (0..3)
            .map(|j| x.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => 1.0 / (norm1(m) * norm1(&inv)),
        _ => 0.0,
    }
}

/// `P = 𝒯 R⁻¹`, via `Rᵀ Pᵀ = 𝒯ᵀ`.
fn solve_p(r: &Matrix3<f64>, tm: &Matrix3<f64>, t: f64) -> Result<Matrix3<f64>> {
    let rc = rcond(r);
    if !(rc >= RCOND_FLOOR) {
        return Err(Error::SingularR { t, rcond: rc });
    }
    let pt = r
        .transpose()
        .lu()
        .solve(&tm.transpose())
        .ok_or(Error::SingularR { t, rcond: rc })?;
    let p = pt.transpose();
    check_cap(&p, t)?;
    Ok(p)
}

/// Backward RK4 on `d/dt (R; 𝒯) = [[A, B], [Â, B̂]] (R; 𝒯)` from `(I; G)`,
/// then `P = 𝒯 R⁻¹` at each node.
pub fn solve_riccati_linearized(
    mat: &SystemMatrices,
    grid: &TimeGrid,
) -> Result<(RiccatiGrid, LinearizationPair)> {
    let lambda = spectral_norm(&mat.a)
        + spectral_norm(&mat.b)
        + spectral_norm(&mat.a_hat)
        + spectral_norm(&mat.b_hat);
    let substeps = substeps_for(grid.dt(), lambda);
    let n = grid.n_steps();
    let h = -grid.dt() / substeps as f64;
    let rhs = |r: &Matrix3<f64>, tm: &Matrix3<f64>| {
        (mat.a * r + mat.b * tm, mat.a_hat * r + mat.b_hat * tm)
    };

    let mut rs = vec![Matrix3::zeros(); n + 1];
    let mut ts = vec![Matrix3::zeros(); n + 1];
    let mut ps = vec![Matrix3::zeros(); n + 1];
    let mut mids = vec![Matrix3::zeros(); n];
    rs[n] = Matrix3::identity();
    ts[n] = mat.g;
    ps[n] = mat.g;
    let mut min_rc = rcond(&rs[n]);
    let (mut r, mut tm) = (rs[n], ts[n]);
    for k in (0..n).rev() {
        for s in 0..substeps {
            if s == substeps / 2 {
                let t = grid.node(k) + 0.5 * grid.dt();
                mids[k] = solve_p(&r, &tm, t)?;
            }
            let (r1, t1) = rhs(&r, &tm);
            let (r2, t2) = rhs(&(r + r1 * (0.5 * h)), &(tm + t1 * (0.5 * h)));
            let (r3, t3) = rhs(&(r + r2 * (0.5 * h)), &(tm + t2 * (0.5 * h)));
            let (r4, t4) = rhs(&(r + r3 * h), &(tm + t3 * h));
            r += (r1 + (r2 + r3) * 2.0 + r4) * (h / 6.0);
            tm += (t1 + (t2 + t3) * 2.0 + t4) * (h / 6.0);
        }
        let t = grid.node(k);
        let rc = rcond(&r);
        if !(rc >= RCOND_FLOOR) {
            return Err(Error::SingularR { t, rcond: rc });
        }
        min_rc = min_rc.min(rc);
        let p = solve_p(&r, &tm, t)?;
        rs[k] = r;
        ts[k] = tm;
        ps[k] = p;
    }
    let mut rg = RiccatiGrid::from_nodes(*grid, ps, RiccatiMethod::Linearized, mat)?;
    rg.substeps = substeps;
    rg.p_mid = Some(mids);
    Ok((
        rg,
        LinearizationPair {
            r: rs,
            t_mat: ts,
            min_condition_r: min_rc,
        },
    ))
}

/// Solve with the default method for these parameters, falling back to the
/// direct solver when the linearization becomes singular.
pub fn solve_riccati(params: &ModelParams, grid: &TimeGrid) -> Result<RiccatiGrid> {
    let mat = assemble_matrices(params)?;
    match RiccatiMethod::default_for(params) {
        RiccatiMethod::Direct => solve_riccati_direct(&mat, grid),
        RiccatiMethod::Linearized => match solve_riccati_linearized(&mat, grid) {
            Ok((rg, _)) => Ok(rg),
            // R decays over long horizons relative to the cost scale.
            Err(Error::SingularR { .. }) => solve_riccati_direct(&mat, grid),
            Err(e) => Err(e),
        },
    }
}

/// Per-node residual `|P' − (Â + B̂P − PA − PBP)|_max`, with `P'` from centered
/// differences at interior nodes and one-sided differences at the endpoints.
pub fn residual_profile(rg: &RiccatiGrid, mat: &SystemMatrices) -> Vec<f64> {
    let n = rg.grid.n_steps();
    let dt = rg.grid.dt();
    (0..=n)
        .map(|k| {
            let deriv = if k == 0 {
                (rg.p[1] - rg.p[0]) / dt
            } else if k == n {
                (rg.p[n] - rg.p[n - 1]) / dt
            } else {
                (rg.p[k + 1] - rg.p[k - 1]) / (2.0 * dt)
            };
            (deriv - riccati_rhs(mat, &rg.p[k])).amax()
        })
        .collect()
}

/// Largest interior-node residual of a stored solution.
pub fn riccati_residual(rg: &RiccatiGrid, mat: &SystemMatrices) -> f64 {
    let prof = residual_profile(rg, mat);
    let n = prof.len() - 1;
    if n < 2 {
        return 0.0;
    }
    prof[1..n].iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub cdg_matrix: [[f64; 3]; 3],
    pub cdg_positive_definite: bool,
    #[serde(rename = "L_sym_negative_semidefinite")]
    pub l_sym_negative_semidefinite: bool,
    /// Eigenvalues of `L + Lᵀ` in ascending order.
    pub l_sym_eigenvalues: Vec<f64>,
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Sufficient conditions for a global solution of the Riccati equation with
/// `C = diag(0, 0, 1)`, `D = diag(−1, −1, 0)`.
pub fn verify_freiling_conditions(mat: &SystemMatrices) -> ConditionReport {
    let c = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.0, 0.0, 1.0));
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, -1.0, 0.0));
    let cdg = c + d * mat.g + mat.g.transpose() * d.transpose();

    let m1 = cdg[(0, 0)];
    let m2 = cdg.fixed_view::<2, 2>(0, 0).determinant();
    let m3 = cdg.determinant();
    let cdg_positive_definite = m1 > 0.0 && m2 > 0.0 && m3 > 0.0;

    let top_left = c * mat.a + d * mat.a_hat;
    let top_right = c * mat.b + mat.a.transpose() * d + d * mat.b_hat;
    let bottom_right = mat.b.transpose() * d;
    let mut l = Matrix6::zeros();
    l.fixed_view_mut::<3, 3>(0, 0).copy_from(&top_left);
    l.fixed_view_mut::<3, 3>(0, 3).copy_from(&top_right);
    l.fixed_view_mut::<3, 3>(3, 3).copy_from(&bottom_right);
    let sym = l + l.transpose();
    let mut eig: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    let tol = 1e-10 * sym.amax().max(1.0);
    let nsd = eig.iter().all(|&e| e <= tol);

    ConditionReport {
        cdg_matrix: rows(&cdg),
        cdg_positive_definite,
        l_sym_negative_semidefinite: nsd,
        l_sym_eigenvalues: eig,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (ModelParams, SystemMatrices) {
        let p = ModelParams::default();
        let m = assemble_matrices(&p).unwrap();
        (p, m)
    }

    /// Plain RK4 without substeps, written independently of the solver.
    fn brute_force_p0(m: &SystemMatrices, n: usize, horizon: f64) -> Matrix3<f64> {
        let f = |p: &Matrix3<f64>| m.a_hat + m.b_hat * p - p * m.a - p * m.b * p;
        let h = -horizon / n as f64;
        let mut p = m.g;
        for _ in 0..n {
            let k1 = f(&p);
            let k2 = f(&(p + k1 * (h / 2.0)));
            let k3 = f(&(p + k2 * (h / 2.0)));
            let k4 = f(&(p + k3 * h));
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        p
    }

    #[test]
    fn zero_terminal_and_zero_source_give_zero() {
        let base = ModelParams::default();
        let p = ModelParams {
            phi: base.impact_h / 2.0,
            psi: 0.0,
            ..base
        };
        let mut m = assemble_matrices(&p).unwrap();
        // Â₃₁ = −1 still drives P, so also zero it for the trivial case.
        m.a_hat = Matrix3::zeros();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let rg = solve_riccati_direct(&m, &grid).unwrap();
        assert!(rg.matrices().iter().all(|p| *p == Matrix3::zeros()));
        assert_eq!(rg.max_residual(), 0.0);
        let (lin, pair) = solve_riccati_linearized(&m, &grid).unwrap();
        assert!(pair.t_mat.iter().all(|t| *t == Matrix3::zeros()));
        assert!(lin.matrices().iter().all(|p| *p == Matrix3::zeros()));
    }

    #[test]
    fn terminal_is_exact_copy() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let d = solve_riccati_direct(&m, &grid).unwrap();
        let (l, pair) = solve_riccati_linearized(&m, &grid).unwrap();
        assert_eq!(*d.p(500), m.g);
        assert_eq!(*l.p(500), m.g);
        assert_eq!(pair.r[500], Matrix3::identity());
        assert_eq!(pair.t_mat[500], m.g);
    }

    #[test]
    fn third_column_vanishes_without_decay() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let rg = solve_riccati_direct(&m, &grid).unwrap();
        for p in rg.matrices() {
            assert!(p.column(2).norm() <= 1e-10);
        }
    }

    #[test]
    fn methods_agree_on_reference() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let d = solve_riccati_direct(&m, &grid).unwrap();
        let (l, pair) = solve_riccati_linearized(&m, &grid).unwrap();
        let gap = d
            .matrices()
            .iter()
            .zip(l.matrices())
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "gap {gap}");
        assert!(pair.min_condition_r > 0.0);
    }

    #[test]
    fn matches_brute_force_at_zero() {
        let (_, m) = reference();
        let oracle = brute_force_p0(&m, 1_000_000, 1.0);
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let rg = solve_riccati_direct(&m, &grid).unwrap();
        assert!((rg.p(0) - oracle).amax() <= 1e-6);
    }

    #[test]
    fn fourth_order_convergence() {
        let (_, m) = reference();
        let oracle = brute_force_p0(&m, 1_000_000, 1.0);
        let err = |n| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let rg = solve_riccati_direct_substeps(&m, &grid, 1).unwrap();
            (rg.p(0) - oracle).amax()
        };
        let (e1, e2) = (err(2_000), err(4_000));
        assert!(e1 / e2 >= 8.0, "{e1} {e2}");
    }

    #[test]
    fn residual_scales_quadratically_away_from_layer() {
        // Mild terminal penalties: no boundary layer.
        let p = ModelParams {
            a: 1.0,
            b: 1.0,
            phi: 1.0,
            psi: 1.0,
            impact_h: 0.5,
            ..Default::default()
        };
        let m = assemble_matrices(&p).unwrap();
        let res = |n| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            solve_riccati_direct(&m, &grid).unwrap().max_residual()
        };
        let (r1, r2) = (res(500), res(1000));
        assert!(r2 <= 1e-5, "{r2}");
        let ratio = r1 / r2;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn corrupted_grid_has_large_residual() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let rg = solve_riccati_direct(&m, &grid).unwrap();
        let mut ps = rg.matrices().to_vec();
        ps[5000][(0, 0)] += 1.0;
        let bad = RiccatiGrid::from_nodes(grid, ps, RiccatiMethod::Direct, &m).unwrap();
        assert!(bad.max_residual() > 1e2);
    }

    #[test]
    fn blow_up_detected() {
        // G₁₁ = +φ̃/a > 0 with strong impact escapes immediately.
        let p = ModelParams {
            impact_h: 10.0,
            ..Default::default()
        };
        let m = assemble_matrices(&p).unwrap();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        assert!(matches!(
            solve_riccati_direct(&m, &grid),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let (rg, _) = solve_riccati_linearized(&m, &grid).unwrap();
        let text = rg.to_csv(&["config: {}".into()]);
        let back = RiccatiGrid::from_csv(&text, &m).unwrap();
        assert_eq!(back.matrices(), rg.matrices());
        assert_eq!(back.method(), RiccatiMethod::Linearized);
    }

    #[test]
    fn interpolation_hits_nodes_and_is_smooth() {
        let (_, m) = reference();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let rg = solve_riccati_direct(&m, &grid).unwrap();
        assert_eq!(rg.interpolate(10, 0.0), *rg.p(10));
        assert_eq!(rg.interpolate(10, 1.0), *rg.p(11));
        let fine = solve_riccati_direct(&m, &TimeGrid::new(1.0, 2000).unwrap()).unwrap();
        assert!((rg.interpolate(100, 0.5) - fine.p(201)).amax() < 1e-8);
    }

    #[test]
    fn condition_matrix_on_reference() {
        let (p, m) = reference();
        let r = verify_freiling_conditions(&m);
        let want = [2.0 * p.varphi() / p.a, 2.0 * p.psi / p.b, 1.0];
        for i in 0..3 {
            assert!((r.cdg_matrix[i][i] - want[i]).abs() < 1e-9);
        }
        assert!(r.cdg_positive_definite);
        // Zero top-left block plus a nonzero coupling block makes L + Lᵀ
        // indefinite whenever the impact is positive.
        assert!(!r.l_sym_negative_semidefinite);
        assert!(r.l_sym_eigenvalues.iter().any(|&e| e > 0.0));
    }

    #[test]
    fn condition_flags_without_impact() {
        let p = ModelParams {
            impact_h: 0.0,
            ..Default::default()
        };
        let r = verify_freiling_conditions(&assemble_matrices(&p).unwrap());
        assert!(r.cdg_positive_definite);
        assert!(r.l_sym_negative_semidefinite);
    }

    #[test]
    fn zero_penalty_breaks_positivity() {
        let base = ModelParams::default();
        for p in [
            ModelParams {
                psi: 0.0,
                ..base.clone()
            },
            ModelParams {
                phi: base.impact_h / 2.0,
                ..base.clone()
            },
        ] {
            let r = verify_freiling_conditions(&assemble_matrices(&p).unwrap());
            assert!(!r.cdg_positive_definite);
        }
    }

    #[test]
    fn conditions_with_decay_do_not_fail() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = ModelParams {
                decay_p: rng.random_range(0.01..10.0),
                impact_h: rng.random_range(0.0..2.0),
                r_b: rng.random_range(0.0..1.0),
                ..Default::default()
            };
            let r = verify_freiling_conditions(&assemble_matrices(&p).unwrap());
            assert_eq!(r.l_sym_eigenvalues.len(), 6);
            assert!(r.l_sym_eigenvalues.iter().all(|e| e.is_finite()));
        }
    }
}
