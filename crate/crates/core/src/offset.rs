//! Affine offset `ℓ_t` of the decoupling field `(ν, η, Z) = ℓ_t + P_t X_t`.
//!
//! With OU signal and flow, `ℓ_t = K¹_t α_t + K²_t ξ_t` where the columns
//! `K¹ = (g1, h1, f1)` and `K² = (g2, h2, f2)` solve
//!
//! ```text
//! K¹' = Λ_t K¹ + κ^α K¹ + c_α,      c_α   = (−1/(2a), −1/(2b), 0)
//! K²' = Λ_t K² + κ^ξ K² + c_ξ(t),   c_ξ(t) = −𝔥/(2a) e₁ + P_t e₁
//! K¹_T = K²_T = 0
//! ```
//!
//! with `Λ_t = B̂ − P_t B`. The same offset is also available as a
//! conditional-expectation integral against the fundamental solution
//! `ζ' = −ζ Λ`, `ζ_0 = I`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelParams, SystemMatrices};
use crate::riccati::{grid_from_times, parse_row, RiccatiGrid};

/// Source terms and mean-reversion rates driving the offset equations.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSources {
    /// Loading of `α` in the backward driver.
    pub alpha: Vector3<f64>,
    /// Constant part of the loading of `ξ`; `P_t e₁` is added on top.
    pub xi: Vector3<f64>,
    pub kappa_alpha: f64,
    pub kappa_xi: f64,
}

impl OffsetSources {
    pub fn new(params: &ModelParams, mat: &SystemMatrices) -> Self {
        Self {
            alpha: mat.alpha_loading(),
            xi: mat.xi_loading(),
            kappa_alpha: params.kappa_alpha,
            kappa_xi: params.kappa_xi,
        }
    }

    fn columns(&self, p: &Matrix3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (self.alpha, self.xi + p.column(0))
    }
}

/// Offset coefficients on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetGrid {
    grid: TimeGrid,
    /// Column 0 is `(g1, h1, f1)`, column 1 is `(g2, h2, f2)`.
    k: Vec<Matrix3x2<f64>>,
}

impl OffsetGrid {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn coefficients(&self, k: usize) -> &Matrix3x2<f64> {
        &self.k[k]
    }

    pub fn g1(&self, k: usize) -> f64 {
        self.k[k][(0, 0)]
    }
    pub fn g2(&self, k: usize) -> f64 {
        self.k[k][(0, 1)]
    }
    pub fn h1(&self, k: usize) -> f64 {
        self.k[k][(1, 0)]
    }
    pub fn h2(&self, k: usize) -> f64 {
        self.k[k][(1, 1)]
    }
    pub fn f1(&self, k: usize) -> f64 {
        self.k[k][(2, 0)]
    }
    pub fn f2(&self, k: usize) -> f64 {
        self.k[k][(2, 1)]
    }

    /// `ℓ` at node `k` given the current signal and flow.
    pub fn ell(&self, k: usize, alpha: f64, xi: f64) -> Vector3<f64> {
        self.k[k].column(0) * alpha + self.k[k].column(1) * xi
    }

    pub const CSV_HEADER: &'static str = "t,g1,g2,h1,h2,f1,f2";

    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        for (k, c) in self.k.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.grid.node(k),
                c[(0, 0)],
                c[(0, 1)],
                c[(1, 0)],
                c[(1, 1)],
                c[(2, 0)],
                c[(2, 1)]
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut k = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
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
            let v = parse_row(line, 7, lineno + 1)?;
            times.push(v[0]);
            k.push(Matrix3x2::new(v[1], v[2], v[3], v[4], v[5], v[6]));
        }
        let grid = grid_from_times(&times)?;
        Ok(Self { grid, k })
    }
}

/// Solve the offset equations on `grid` with the Riccati solution `rg`.
pub fn solve_offset_odes(
    rg: &RiccatiGrid,
    params: &ModelParams,
    mat: &SystemMatrices,
    grid: &TimeGrid,
) -> Result<OffsetGrid> {
    solve_offset_with(rg, mat, &OffsetSources::new(params, mat), grid)
}

/// [`solve_offset_odes`] with explicit source terms.
pub fn solve_offset_with(
    rg: &RiccatiGrid,
    mat: &SystemMatrices,
    src: &OffsetSources,
    grid: &TimeGrid,
) -> Result<OffsetGrid> {
    rg.grid().ensure_same(grid)?;
    for (field, v) in [("kappa_alpha", src.kappa_alpha), ("kappa_xi", src.kappa_xi)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteParameter { field });
        }
    }
    let n = grid.n_steps();
    let m = rg.substeps().max(1);
    let h = -grid.dt() / m as f64;
    let rhs = |p: &Matrix3<f64>, k: &Matrix3x2<f64>| {
        let lambda = mat.b_hat - p * mat.b;
        let (ca, cx) = src.columns(p);
        let mut out = lambda * k;
        out.set_column(0, &(out.column(0) + k.column(0) * src.kappa_alpha + ca));
        out.set_column(1, &(out.column(1) + k.column(1) * src.kappa_xi + cx));
        out
    };

    let mut ks = vec![Matrix3x2::zeros(); n + 1];
    let mut cur = Matrix3x2::zeros();
    for k in (0..n).rev() {
        for s in 0..m {
            // substep runs from θ0 down to θ0 − 1/m on interval k
            let th0 = 1.0 - s as f64 / m as f64;
            let th1 = 1.0 - (s + 1) as f64 / m as f64;
            let thm = 0.5 * (th0 + th1);
            let (p0, pm, p1) = (
                rg.interpolate(k, th0),
                rg.interpolate(k, thm),
                rg.interpolate(k, th1),
            );
            let k1 = rhs(&p0, &cur);
            let k2 = rhs(&pm, &(cur + k1 * (0.5 * h)));
            let k3 = rhs(&pm, &(cur + k2 * (0.5 * h)));
            let k4 = rhs(&p1, &(cur + k3 * h));
            cur += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        ks[k] = cur;
    }
    Ok(OffsetGrid { grid: *grid, k: ks })
}

/// Fundamental solution `ζ` of `ζ' = −ζ Λ_t` together with `Λ_t` and the
/// affine coefficients of `a_t = b̂_t − P_t b_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSolution {
    pub grid: TimeGrid,
    pub zeta: Vec<Matrix3<f64>>,
    pub lambda: Vec<Matrix3<f64>>,
    /// `(c_α, c_ξ(t))` per node.
    pub a_aff: Vec<(Vector3<f64>, Vector3<f64>)>,
    zeta_mid: Vec<Matrix3<f64>>,
    a_aff_mid: Vec<(Vector3<f64>, Vector3<f64>)>,
}

pub fn build_fundamental_solution(rg: &RiccatiGrid, mat: &SystemMatrices) -> FundamentalSolution {
    let grid = *rg.grid();
    let n = grid.n_steps();
    let m = rg.substeps().max(1);
    let h = grid.dt() / m as f64;
    let lam = |p: &Matrix3<f64>| mat.b_hat - p * mat.b;
    let rhs = |z: &Matrix3<f64>, l: &Matrix3<f64>| -(z * l);

    let aff = |p: &Matrix3<f64>| (mat.alpha_loading(), mat.xi_loading() + p.column(0));

    let lambda: Vec<_> = rg.matrices().iter().map(lam).collect();
    let a_aff = rg.matrices().iter().map(aff).collect();
    let a_aff_mid = (0..n).map(|k| aff(&rg.interpolate(k, 0.5))).collect();

    let mut zeta = vec![Matrix3::identity(); n + 1];
    let mut zeta_mid = vec![Matrix3::identity(); n];
    let mut cur = Matrix3::identity();
    for k in 0..n {
        for s in 0..m {
            if m % 2 == 0 && s == m / 2 {
                zeta_mid[k] = cur;
            }
            let th0 = s as f64 / m as f64;
            let th1 = (s + 1) as f64 / m as f64;
            let l0 = lam(&rg.interpolate(k, th0));
            let lm = lam(&rg.interpolate(k, 0.5 * (th0 + th1)));
            let l1 = lam(&rg.interpolate(k, th1));
            let k1 = rhs(&cur, &l0);
            let k2 = rhs(&(cur + k1 * (0.5 * h)), &lm);
            let k3 = rhs(&(cur + k2 * (0.5 * h)), &lm);
            let k4 = rhs(&(cur + k3 * h), &l1);
            cur += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        zeta[k + 1] = cur;
    }
    let mut fs = FundamentalSolution {
        grid,
        zeta,
        lambda,
        a_aff,
        zeta_mid,
        a_aff_mid,
    };
    if m % 2 == 1 {
        fs.zeta_mid = (0..n).map(|k| fs.zeta_interp(k, 0.5)).collect();
    }
    fs
}

impl FundamentalSolution {
    /// `ζ` at fraction `theta` of interval `k` (cubic Hermite, using
    /// `ζ' = −ζ Λ` at the nodes).
    fn zeta_interp(&self, k: usize, theta: f64) -> Matrix3<f64> {
        let h = self.grid.dt();
        let d0 = -(self.zeta[k] * self.lambda[k]);
        let d1 = -(self.zeta[k + 1] * self.lambda[k + 1]);
        let (s, s2, s3) = (theta, theta * theta, theta * theta * theta);
        self.zeta[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * ((s3 - 2.0 * s2 + s) * h)
            + self.zeta[k + 1] * (-2.0 * s3 + 3.0 * s2)
            + d1 * ((s3 - s2) * h)
    }
}

/// `ℓ_t = −∫_t^T ζ_t⁻¹ ζ_u (c_α e^{−κ^α(u−t)} α_t + c_ξ(u) e^{−κ^ξ(u−t)} ξ_t) du`
/// by composite Simpson on the grid nodes (3/8 rule on the last three
/// intervals when their count is odd).
pub fn ell_quadrature(
    fs: &FundamentalSolution,
    t: f64,
    alpha_t: f64,
    xi_t: f64,
    params: &ModelParams,
) -> Result<Vector3<f64>> {
    let k0 = fs.grid.index_of(t)?;
    let n = fs.grid.n_steps();
    if k0 == n {
        return Ok(Vector3::zeros());
    }
    let t0 = fs.grid.node(k0);
    let lu = fs.zeta[k0].lu();
    let integrand = |zeta_u: &Matrix3<f64>, u: f64, ca: &Vector3<f64>, cx: &Vector3<f64>| {
        let v = ca * ((-params.kappa_alpha * (u - t0)).exp() * alpha_t)
            + cx * ((-params.kappa_xi * (u - t0)).exp() * xi_t);
        let w = zeta_u * v;
        lu.solve(&w).unwrap_or_else(|| Vector3::repeat(f64::NAN))
    };
    let node_val = |j: usize| {
        let (ca, cx) = &fs.a_aff[j];
        integrand(&fs.zeta[j], fs.grid.node(j), ca, cx)
    };
    let h = fs.grid.dt();
    let m = n - k0;
    let sum = match m {
        1 => {
            // single interval: Simpson through the interval midpoint
            let (ca, cx) = &fs.a_aff_mid[k0];
            let mid = integrand(&fs.zeta_mid[k0], t0 + 0.5 * h, ca, cx);
            (node_val(k0) + mid * 4.0 + node_val(n)) * (h / 6.0)
        }
        _ => {
            let simpson_end = if m % 2 == 0 { n } else { n - 3 };
            let mut acc = Vector3::zeros();
            let mut j = k0;
            while j < simpson_end {
                acc += (node_val(j) + node_val(j + 1) * 4.0 + node_val(j + 2)) * (h / 3.0);
                j += 2;
            }
            if m % 2 == 1 {
                let j = n - 3;
                acc +=
                    (node_val(j) + node_val(j + 1) * 3.0 + node_val(j + 2) * 3.0 + node_val(j + 3))
                        * (3.0 * h / 8.0);
            }
            acc
        }
    };
    Ok(-sum)
}
