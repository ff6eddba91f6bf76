use serde::{Deserialize, Serialize};

use super::PathBundle;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceForm {
    /// Cash plus marked inventory minus penalties at `T`.
    Terminal,
    /// Time-integral representation obtained from the product rule.
    Integral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Performance {
    pub j_i: f64,
    pub j_b: f64,
}

pub(crate) fn trapezoid(dt: f64, f: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut last = 0.0;
    let mut sum = 0.0;
    for v in f {
        if first.is_none() {
            first = Some(v);
        }
        sum += v;
        last = v;
    }
    match first {
        None => 0.0,
        Some(f0) => dt * (sum - 0.5 * (f0 + last)),
    }
}

/// Informed trader's criterion in integral form for given node paths.
pub fn informed_integral(
    p: &ModelParams,
    dt: f64,
    s_init: f64,
    alpha: &[f64],
    nu: &[f64],
    eta: &[f64],
    y: &[f64],
    q_i: &[f64],
) -> f64 {
    let q0 = q_i[0];
    let run = trapezoid(
        dt,
        (0..q_i.len()).map(|k| {
            -p.b * eta[k] * eta[k]
                + q_i[k]
                    * (alpha[k] + p.impact_h * nu[k]
                        - p.decay_p * y[k]
                        - 2.0 * p.psi * eta[k]
                        - p.r_i * q_i[k])
        }),
    );
    s_init * q0 - p.psi * q0 * q0 + run
}

/// Broker's criterion in integral form for given node paths.
#[allow(clippy::too_many_arguments)]
pub fn broker_integral(
    p: &ModelParams,
    dt: f64,
    s_init: f64,
    alpha: &[f64],
    xi: &[f64],
    nu: &[f64],
    eta: &[f64],
    y: &[f64],
    q_b: &[f64],
) -> f64 {
    let q0 = q_b[0];
    let run = trapezoid(
        dt,
        (0..q_b.len()).map(|k| {
            -p.a * nu[k] * nu[k]
                + p.b * eta[k] * eta[k]
                + p.c * xi[k] * xi[k]
                + q_b[k]
                    * (alpha[k] + p.impact_h * nu[k]
                        - p.decay_p * y[k]
                        - 2.0 * p.phi * (nu[k] - eta[k] - xi[k])
                        - p.r_b * q_b[k])
        }),
    );
    s_init * q0 - p.phi * q0 * q0 + run
}

/// Both players' criteria along one path, in the requested form.
pub fn evaluate_performance(
    pb: &PathBundle,
    p: &ModelParams,
    form: PerformanceForm,
) -> Performance {
    let dt = pb.grid.dt();
    let n = pb.grid.n_steps();
    match form {
        PerformanceForm::Terminal => {
            let run_i = trapezoid(dt, pb.q_i.iter().map(|q| q * q));
            let run_b = trapezoid(dt, pb.q_b.iter().map(|q| q * q));
            let s_t = pb.s[n];
            Performance {
                j_i: pb.x_i[n] + pb.q_i[n] * s_t - p.psi * pb.q_i[n].powi(2) - p.r_i * run_i,
                j_b: pb.x_b[n] + pb.q_b[n] * s_t - p.phi * pb.q_b[n].powi(2) - p.r_b * run_b,
            }
        }
        PerformanceForm::Integral => {
            let s0 = pb.s[0];
            Performance {
                j_i: informed_integral(p, dt, s0, &pb.alpha, &pb.nu, &pb.eta, &pb.y, &pb.q_i),
                j_b: broker_integral(
                    p, dt, s0, &pb.alpha, &pb.xi, &pb.nu, &pb.eta, &pb.y, &pb.q_b,
                ),
            }
        }
    }
}

/// `Σ Q_{k+1} σ^S ΔW_k` for both players: the discrete martingale by which the
/// terminal form exceeds the integral form. Mean zero, since `Q_{k+1}` is
/// known at `t_k`.
pub fn price_martingale(pb: &PathBundle) -> Performance {
    let mut m = Performance { j_i: 0.0, j_b: 0.0 };
    for (k, dm) in pb.price_noise.iter().enumerate() {
        m.j_i += pb.q_i[k + 1] * dm;
        m.j_b += pb.q_b[k + 1] * dm;
    }
    m
}
