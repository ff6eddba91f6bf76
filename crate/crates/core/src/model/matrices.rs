use nalgebra::{Matrix3, Vector3};

use super::params::ModelParams;
use crate::error::{Error, Result};

/// Coefficients of the linear FBSDE
///
/// ```text
/// dX  = (A X + B Yv + b_t) dt,                  X  = (qB, qI, Y)
/// dYv = (Â X + B̂ Yv + b̂_t) dt + σ dM,          Yv = (ν, η, Z)
/// Yv_T = G X_T
/// ```
///
/// with `b_t = (−ξ_t, 0, 0)` and
/// `b̂_t = (−(α_t + 𝔥 ξ_t)/(2a), −α_t/(2b), 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub a_hat: Matrix3<f64>,
    pub b_hat: Matrix3<f64>,
    pub g: Matrix3<f64>,
    cost_a: f64,
    cost_b: f64,
    impact_h: f64,
}

impl SystemMatrices {
    /// Forward driver `b_t = −ξ e1`.
    pub fn forward_driver(&self, xi: f64) -> Vector3<f64> {
        Vector3::new(-xi, 0.0, 0.0)
    }

    /// Backward driver `b̂_t`.
    pub fn backward_driver(&self, alpha: f64, xi: f64) -> Vector3<f64> {
        Vector3::new(
            -(alpha + self.impact_h * xi) / (2.0 * self.cost_a),
            -alpha / (2.0 * self.cost_b),
            0.0,
        )
    }

    /// Coefficient of `α` in `b̂_t`.
    pub fn alpha_loading(&self) -> Vector3<f64> {
        Vector3::new(-1.0 / (2.0 * self.cost_a), -1.0 / (2.0 * self.cost_b), 0.0)
    }

    /// Coefficient of `ξ` in `b̂_t`.
    pub fn xi_loading(&self) -> Vector3<f64> {
        Vector3::new(-self.impact_h / (2.0 * self.cost_a), 0.0, 0.0)
    }
}

/// Build `A, B, Â, B̂, G` from the model parameters.
pub fn assemble_matrices(p: &ModelParams) -> Result<SystemMatrices> {
    p.ensure_finite()?;
    for (field, v) in [("a", p.a), ("b", p.b)] {
        if v <= 0.0 {
            return Err(Error::InvalidParameter {
                field,
                reason: format!("`{field}` must be > 0, got {v}"),
            });
        }
    }
    let (a, b, h, pp) = (p.a, p.b, p.impact_h, p.decay_p);

    #[rustfmt::skip]
    let a_mat = Matrix3::new(
        0.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
        0.0, 0.0, -pp,
    );
    #[rustfmt::skip]
    let b_mat = Matrix3::new(
        1.0, -1.0, 0.0,
        0.0,  1.0, 0.0,
        h,    0.0, 0.0,
    );
    #[rustfmt::skip]
    let a_hat = Matrix3::new(
        (2.0 * p.r_b + pp * h) / (2.0 * a), 0.0,       pp / (2.0 * a),
        0.0,                                p.r_i / b, pp / (2.0 * b),
        -1.0,                               0.0,       0.0,
    );
    #[rustfmt::skip]
    let b_hat = Matrix3::new(
        0.0,            -h / (2.0 * a), -pp * pp * h / (2.0 * a),
        -h / (2.0 * b), 0.0,            0.0,
        0.0,            0.0,            pp,
    );
    let g = Matrix3::from_diagonal(&Vector3::new(-p.varphi() / a, -p.psi / b, 0.0));

    Ok(SystemMatrices {
        a: a_mat,
        b: b_mat,
        a_hat,
        b_hat,
        g,
        cost_a: a,
        cost_b: b,
        impact_h: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_entries() {
        let m = assemble_matrices(&ModelParams::default()).unwrap();
        assert_eq!(m.b[(2, 0)], 1e-3);
        assert!((m.b_hat[(0, 1)] - (-1e-3 / 2.4e-3)).abs() < 1e-15);
        assert!((m.b_hat[(1, 0)] + 0.5).abs() < 1e-15);
        assert!((m.g[(0, 0)] - (-(1.0 - 5e-4) / 1.2e-3)).abs() < 1e-12);
        assert_eq!(m.g[(1, 1)], -1000.0);
        assert_eq!(m.g[(2, 2)], 0.0);
        assert_eq!(m.a, Matrix3::zeros());
        assert_eq!(m.a_hat[(2, 0)], -1.0);
    }

    #[test]
    fn decay_entries() {
        let p = ModelParams {
            decay_p: 2.0,
            impact_h: 0.5,
            a: 1.0,
            b: 2.0,
            r_b: 0.3,
            r_i: 0.4,
            ..Default::default()
        };
        let m = assemble_matrices(&p).unwrap();
        assert_eq!(m.a[(2, 2)], -2.0);
        assert!((m.a_hat[(0, 0)] - (0.6 + 1.0) / 2.0).abs() < 1e-15);
        assert!((m.a_hat[(0, 2)] - 1.0).abs() < 1e-15);
        assert!((m.a_hat[(1, 1)] - 0.2).abs() < 1e-15);
        assert!((m.a_hat[(1, 2)] - 0.5).abs() < 1e-15);
        assert!((m.b_hat[(0, 2)] + 4.0 * 0.5 / 2.0).abs() < 1e-15);
        assert_eq!(m.b_hat[(2, 2)], 2.0);
    }

    #[test]
    fn drivers() {
        let m = assemble_matrices(&ModelParams::default()).unwrap();
        let (al, xi) = (0.7, -3.0);
        let direct = m.backward_driver(al, xi);
        let split = m.alpha_loading() * al + m.xi_loading() * xi;
        assert!((direct - split).norm() < 1e-12);
        assert_eq!(m.forward_driver(2.0), Vector3::new(-2.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_finite() {
        let p = ModelParams {
            phi: f64::INFINITY,
            ..Default::default()
        };
        assert!(matches!(
            assemble_matrices(&p),
            Err(Error::NonFiniteParameter { field: "phi" })
        ));
    }
}
