use nalgebra::Matrix3;
use serde::Serialize;

use super::matrices::assemble_matrices;
use super::params::ModelParams;
use crate::error::Result;

/// Operator 2-norm (largest singular value) of a 3×3 matrix.
///
/// The largest eigenvalue of `MᵀM` is taken from the closed-form roots of its
/// characteristic cubic and then polished by one Newton step.
pub fn spectral_norm(m: &Matrix3<f64>) -> f64 {
    let s = m.transpose() * m;
    let scale = s.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let s = s / scale;
    largest_symmetric_eigenvalue(&s).max(0.0).sqrt() * scale.sqrt()
}

fn largest_symmetric_eigenvalue(s: &Matrix3<f64>) -> f64 {
    let off = s[(0, 1)].powi(2) + s[(0, 2)].powi(2) + s[(1, 2)].powi(2);
    let tr = s.trace();
    if off == 0.0 {
        return s[(0, 0)].max(s[(1, 1)]).max(s[(2, 2)]);
    }
    let q = tr / 3.0;
    let p2 =
        (s[(0, 0)] - q).powi(2) + (s[(1, 1)] - q).powi(2) + (s[(2, 2)] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let shifted = (s - Matrix3::identity() * q) / p;
    let r = (shifted.determinant() / 2.0).clamp(-1.0, 1.0);
    let angle = r.acos() / 3.0;
    let lambda = q + 2.0 * p * angle.cos();

    // det(λI − S) = λ³ − tr λ² + c1 λ − det
    let c1 = s[(0, 0)] * s[(1, 1)] + s[(0, 0)] * s[(2, 2)] + s[(1, 1)] * s[(2, 2)] - off;
    let det = s.determinant();
    let f = ((lambda - tr) * lambda + c1) * lambda - det;
    let df = (3.0 * lambda - 2.0 * tr) * lambda + c1;
    if df.abs() > 1e-6 * lambda.abs().max(1e-300) {
        let step = f / df;
        if step.abs() < 1e-8 * lambda.abs() {
            return lambda - step;
        }
    }
    lambda
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(rename = "norm_A")]
    pub norm_a: f64,
    #[serde(rename = "norm_B")]
    pub norm_b: f64,
    #[serde(rename = "norm_A_hat")]
    pub norm_a_hat: f64,
    #[serde(rename = "norm_B_hat")]
    pub norm_b_hat: f64,
    #[serde(rename = "norm_G")]
    pub norm_g: f64,
    pub horizon: f64,
    pub lhs_max: f64,
    pub satisfied: bool,
    /// Largest horizon meeting the bound; only defined when `|G| = 0`.
    /// Infinite when every other norm vanishes too.
    pub t_star: Option<f64>,
}

/// Small-horizon sufficient condition for a unique solution of the FBSDE:
/// `max{12|G|² + T²(2|A|² + 30|Â|²), T²(2|B|² + 30|B̂|²)} < 1`.
pub fn existence_bound(p: &ModelParams) -> Result<BoundReport> {
    let m = assemble_matrices(p)?;
    Ok(bound_from_norms(
        [
            spectral_norm(&m.a),
            spectral_norm(&m.b),
            spectral_norm(&m.a_hat),
            spectral_norm(&m.b_hat),
            spectral_norm(&m.g),
        ],
        p.horizon,
    ))
}

/// Bound from precomputed norms `[|A|, |B|, |Â|, |B̂|, |G|]`.
pub(crate) fn bound_from_norms(norms: [f64; 5], horizon: f64) -> BoundReport {
    let [norm_a, norm_b, norm_a_hat, norm_b_hat, norm_g] = norms;
    let t2 = horizon * horizon;
    let forward = 2.0 * norm_a.powi(2) + 30.0 * norm_a_hat.powi(2);
    let backward = 2.0 * norm_b.powi(2) + 30.0 * norm_b_hat.powi(2);
    let lhs_max = (12.0 * norm_g.powi(2) + t2 * forward).max(t2 * backward);
    let t_star = (norm_g == 0.0).then(|| {
        let k = forward.max(backward);
        if k == 0.0 {
            f64::INFINITY
        } else {
            1.0 / k.sqrt()
        }
    });
    BoundReport {
        norm_a,
        norm_b,
        norm_a_hat,
        norm_b_hat,
        norm_g,
        horizon,
        lhs_max,
        satisfied: lhs_max < 1.0,
        t_star,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force max of |Mx| over a sphere grid, polished by a shrinking
    /// pattern search around the best grid point.
    fn sphere_oracle(m: &Matrix3<f64>) -> f64 {
        let gain = |th: f64, ph: f64| {
            let x = nalgebra::Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            (m * x).norm()
        };
        let (nt, np) = (400, 800);
        let mut best = (0.0, 0.0, 0.0);
        for i in 0..=nt {
            let th = std::f64::consts::PI * i as f64 / nt as f64;
            for j in 0..np {
                let ph = 2.0 * std::f64::consts::PI * j as f64 / np as f64;
                let v = gain(th, ph);
                if v > best.0 {
                    best = (v, th, ph);
                }
            }
        }
        let (mut v, mut th, mut ph) = best;
        let mut h = 0.02;
        while h > 1e-12 {
            let mut moved = false;
            for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                let w = gain(th + dt, ph + dp);
                if w > v {
                    (v, th, ph) = (w, th + dt, ph + dp);
                    moved = true;
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        v
    }

    fn closed_form_b(h: f64) -> f64 {
        (3.0 + h * h + (5.0 - 2.0 * h * h + h.powi(4)).sqrt()).sqrt() / 2f64.sqrt()
    }

    fn closed_form_b_hat(a: f64, b: f64, h: f64, p: f64) -> f64 {
        let base = 4.0 * a * a * p * p + h * h * (1.0 + p.powi(4));
        let disc = (base * base - 16.0 * a * a * h * h * p * p).max(0.0).sqrt();
        let lo = (base - disc).max(0.0).sqrt() / (2.0 * 2f64.sqrt() * a);
        let hi = (base + disc).sqrt() / (2.0 * 2f64.sqrt() * a);
        (h / (2.0 * b)).max(lo).max(hi)
    }

    #[test]
    fn identity_and_zero() {
        assert_eq!(spectral_norm(&Matrix3::identity()), 1.0);
        assert_eq!(spectral_norm(&Matrix3::zeros()), 0.0);
    }

    #[test]
    fn reference_norms() {
        let r = existence_bound(&ModelParams::default()).unwrap();
        assert_eq!(r.norm_a, 0.0);
        assert!((r.norm_b - 1.618).abs() < 1e-3, "{}", r.norm_b);
        assert!((r.norm_a_hat - 1.0).abs() < 1e-12);
        assert!((r.norm_b_hat - 0.5).abs() < 1e-12);
        assert!((r.norm_g - 1000.0).abs() < 1e-9);
        assert!(!r.satisfied);
        assert!(r.lhs_max > 12e6 - 1.0);
        assert_eq!(r.t_star, None);
    }

    #[test]
    fn t_star_with_vanishing_terminal_matrix() {
        let base = ModelParams::default();
        let p = ModelParams {
            phi: base.impact_h / 2.0,
            psi: 0.0,
            ..base
        };
        let r = existence_bound(&p).unwrap();
        assert_eq!(r.norm_g, 0.0);
        let t = r.t_star.unwrap();
        assert!((t - 1.0 / 30f64.sqrt()).abs() < 1e-12, "{t}");
        assert!((t - 0.1826).abs() < 1e-4);
    }

    #[test]
    fn all_zero_system_is_always_satisfied() {
        for t in [1e-3, 1.0, 1e6] {
            let r = bound_from_norms([0.0; 5], t);
            assert!(r.satisfied);
            assert_eq!(r.t_star, Some(f64::INFINITY));
        }
    }

    #[test]
    fn random_matrices_match_sphere_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let o = sphere_oracle(&m);
            let s = spectral_norm(&m);
            assert!((o - s).abs() < 1e-6, "{o} vs {s}");
        }
    }

    #[test]
    fn against_svd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let sv = m.singular_values().max();
            assert!((spectral_norm(&m) - sv).abs() <= 1e-10 * sv);
        }
    }

    proptest! {
        #[test]
        fn decay_norm_is_exact(p in 0.0f64..50.0) {
            let params = ModelParams { decay_p: p, a: 10.0, ..Default::default() };
            let m = assemble_matrices(&params).unwrap();
            prop_assert_eq!(spectral_norm(&m.a), p);
        }

        #[test]
        fn b_norm_closed_form(h in 0.0f64..10.0) {
            let params = ModelParams { impact_h: h, ..Default::default() };
            let m = assemble_matrices(&params).unwrap();
            prop_assert!((spectral_norm(&m.b) - closed_form_b(h)).abs() < 1e-9);
        }

        #[test]
        fn b_hat_norm_closed_form(
            a in 1e-3f64..2.0,
            b in 1e-3f64..2.0,
            h in 0.0f64..5.0,
            p in 0.0f64..5.0,
        ) {
            let params = ModelParams { a, b, impact_h: h, decay_p: p, ..Default::default() };
            let m = assemble_matrices(&params).unwrap();
            let want = closed_form_b_hat(a, b, h, p);
            let got = spectral_norm(&m.b_hat);
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", got, want);
        }

        #[test]
        fn assembly_is_pure(h in 0.0f64..3.0, p in 0.0f64..3.0, phi in 0.0f64..5.0) {
            let params = ModelParams { impact_h: h, decay_p: p, phi, ..Default::default() };
            let m1 = assemble_matrices(&params).unwrap();
            let m2 = assemble_matrices(&params).unwrap();
            prop_assert_eq!(&m1, &m2);
            prop_assert_eq!(m1.g[(2, 2)], 0.0);
            prop_assert_eq!(m1.g, Matrix3::from_diagonal(&m1.g.diagonal()));
        }
    }
}
