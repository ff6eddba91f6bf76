use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market, impact, penalty, signal and flow parameters plus initial conditions.
///
/// Field names in serialized form follow the usual notation of the model
/// (`rB`, `horizon_T`, `qB0`, ...). The defaults reproduce the reference
/// experiment: `T = 1`, `a = 1.2e-3`, `b = 1e-3`, `φ = ψ = 1`, no running
/// penalties, `𝔥 = 1e-3`, `𝔭 = 0`, `S0 = 100`, `σ^S = 1`, OU signal
/// `(κ, σ) = (5, 1)` and OU uninformed flow `(κ, σ) = (15, 100)`, all started
/// at zero. The uninformed trader's cost `c` and the initial inventories are
/// not part of that experiment; they default to `c = b` and flat books.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Broker's instantaneous cost on lit-market trades.
    pub a: f64,
    /// Cost the informed trader pays the broker.
    pub b: f64,
    /// Cost the uninformed trader pays the broker.
    pub c: f64,
    /// Instantaneous impact 𝔥 of the broker's lit trades on the impact state.
    pub impact_h: f64,
    /// Resilience (decay) rate 𝔭 of the transient impact.
    pub decay_p: f64,
    /// Broker's terminal inventory penalty φ.
    pub phi: f64,
    /// Informed trader's terminal inventory penalty ψ.
    pub psi: f64,
    #[serde(rename = "rB")]
    pub r_b: f64,
    #[serde(rename = "rI")]
    pub r_i: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    #[serde(rename = "qB0")]
    pub q_b0: f64,
    #[serde(rename = "qI0")]
    pub q_i0: f64,
    /// Initial impact state.
    #[serde(rename = "Y0")]
    pub y0: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
    #[serde(rename = "sigma_S")]
    pub sigma_s: f64,
    pub kappa_alpha: f64,
    pub sigma_alpha: f64,
    pub alpha0: f64,
    pub kappa_xi: f64,
    pub sigma_xi: f64,
    pub xi0: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 1.2e-3,
            b: 1e-3,
            c: 1e-3,
            impact_h: 1e-3,
            decay_p: 0.0,
            phi: 1.0,
            psi: 1.0,
            r_b: 0.0,
            r_i: 0.0,
            horizon: 1.0,
            q_b0: 0.0,
            q_i0: 0.0,
            y0: 0.0,
            s0: 100.0,
            sigma_s: 1.0,
            kappa_alpha: 5.0,
            sigma_alpha: 1.0,
            alpha0: 0.0,
            kappa_xi: 15.0,
            sigma_xi: 100.0,
            xi0: 0.0,
        }
    }
}

/// Serialized names of every parameter, in declaration order.
pub const PARAMETER_NAMES: [&str; 21] = [
    "a",
    "b",
    "c",
    "impact_h",
    "decay_p",
    "phi",
    "psi",
    "rB",
    "rI",
    "horizon_T",
    "qB0",
    "qI0",
    "Y0",
    "S0",
    "sigma_S",
    "kappa_alpha",
    "sigma_alpha",
    "alpha0",
    "kappa_xi",
    "sigma_xi",
    "xi0",
];

impl ModelParams {
    /// `φ − 𝔥/2`, the effective terminal penalty of the broker.
    pub fn varphi(&self) -> f64 {
        self.phi - 0.5 * self.impact_h
    }

    /// Midprice at time zero. The impact state enters the midprice additively,
    /// so this is `S0 + Y0`.
    pub fn initial_midprice(&self) -> f64 {
        self.s0 + self.y0
    }

    pub fn initial_state(&self) -> Vector3<f64> {
        Vector3::new(self.q_b0, self.q_i0, self.y0)
    }

    /// Same parameters with all three Brownian drivers switched off.
    pub fn without_noise(&self) -> Self {
        Self {
            sigma_s: 0.0,
            sigma_alpha: 0.0,
            sigma_xi: 0.0,
            ..self.clone()
        }
    }

    pub fn is_noise_free(&self) -> bool {
        self.sigma_s == 0.0 && self.sigma_alpha == 0.0 && self.sigma_xi == 0.0
    }

    fn fields(&self) -> [(&'static str, f64); 21] {
        [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("impact_h", self.impact_h),
            ("decay_p", self.decay_p),
            ("phi", self.phi),
            ("psi", self.psi),
            ("rB", self.r_b),
            ("rI", self.r_i),
            ("horizon_T", self.horizon),
            ("qB0", self.q_b0),
            ("qI0", self.q_i0),
            ("Y0", self.y0),
            ("S0", self.s0),
            ("sigma_S", self.sigma_s),
            ("kappa_alpha", self.kappa_alpha),
            ("sigma_alpha", self.sigma_alpha),
            ("alpha0", self.alpha0),
            ("kappa_xi", self.kappa_xi),
            ("sigma_xi", self.sigma_xi),
            ("xi0", self.xi0),
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.fields()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }

    /// Set a parameter by its serialized name (used by one-dimensional sweeps).
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "a" => &mut self.a,
            "b" => &mut self.b,
            "c" => &mut self.c,
            "impact_h" => &mut self.impact_h,
            "decay_p" => &mut self.decay_p,
            "phi" => &mut self.phi,
            "psi" => &mut self.psi,
            "rB" => &mut self.r_b,
            "rI" => &mut self.r_i,
            "horizon_T" => &mut self.horizon,
            "qB0" => &mut self.q_b0,
            "qI0" => &mut self.q_i0,
            "Y0" => &mut self.y0,
            "S0" => &mut self.s0,
            "sigma_S" => &mut self.sigma_s,
            "kappa_alpha" => &mut self.kappa_alpha,
            "sigma_alpha" => &mut self.sigma_alpha,
            "alpha0" => &mut self.alpha0,
            "kappa_xi" => &mut self.kappa_xi,
            "sigma_xi" => &mut self.sigma_xi,
            "xi0" => &mut self.xi0,
            other => {
                return Err(Error::InvalidInput(format!("unknown parameter `{other}`")));
            }
        };
        *slot = value;
        Ok(())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        match self.fields().into_iter().find(|(_, v)| !v.is_finite()) {
            Some((field, _)) => Err(Error::NonFiniteParameter { field }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Violations make the model ill-posed; callers must stop.
    Hard,
    /// Violations only void the concavity guarantee.
    Concavity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub field: &'static str,
    pub kind: CheckKind,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ParamCheck>,
}

impl ValidationReport {
    pub fn hard_failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.checks
            .iter()
            .filter(|c| !c.passed && c.kind == CheckKind::Hard)
    }

    pub fn concavity_failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.checks
            .iter()
            .filter(|c| !c.passed && c.kind == CheckKind::Concavity)
    }

    /// No hard failures (concavity warnings allowed).
    pub fn is_usable(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ParamCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// First hard failure as an error, if any.
    pub fn into_result(self) -> Result<Self> {
        if let Some(c) = self.hard_failures().next() {
            return Err(Error::InvalidParameter {
                field: c.field,
                reason: c.message.clone(),
            });
        }
        Ok(self)
    }
}

/// Check the standing assumptions of the model.
///
/// Positivity and finiteness violations are `Hard`; `φ − 𝔥/2 ≥ 0` and
/// `a > 𝔭 𝔥 T` only guarantee strict concavity of the broker's criterion and
/// are reported as `Concavity` checks.
pub fn validate_params(p: &ModelParams) -> ValidationReport {
    let mut checks = Vec::new();
    let mut hard = |name: &str, field: &'static str, ok: bool, what: &str| {
        checks.push(ParamCheck {
            name: name.to_string(),
            field,
            kind: CheckKind::Hard,
            passed: ok,
            message: if ok {
                "ok".into()
            } else {
                format!("`{field}` {what}")
            },
        });
    };

    for (field, v) in p.fields() {
        hard(
            &format!("{field}_finite"),
            field,
            v.is_finite(),
            "must be finite",
        );
    }
    for (field, v) in [("a", p.a), ("b", p.b), ("c", p.c), ("horizon_T", p.horizon)] {
        hard(&format!("{field}_positive"), field, v > 0.0, "must be > 0");
    }
    for (field, v) in [
        ("impact_h", p.impact_h),
        ("decay_p", p.decay_p),
        ("phi", p.phi),
        ("psi", p.psi),
        ("rB", p.r_b),
        ("rI", p.r_i),
        ("sigma_S", p.sigma_s),
        ("kappa_alpha", p.kappa_alpha),
        ("sigma_alpha", p.sigma_alpha),
        ("kappa_xi", p.kappa_xi),
        ("sigma_xi", p.sigma_xi),
    ] {
        hard(
            &format!("{field}_nonnegative"),
            field,
            v >= 0.0,
            "must be >= 0",
        );
    }

    let varphi = p.varphi();
    checks.push(ParamCheck {
        name: "varphi_nonnegative".into(),
        field: "phi",
        kind: CheckKind::Concavity,
        passed: varphi >= 0.0,
        message: if varphi >= 0.0 {
            "ok".into()
        } else {
            format!("phi - impact_h/2 = {varphi} < 0: concavity not guaranteed")
        },
    });
    let pht = p.decay_p * p.impact_h * p.horizon;
    checks.push(ParamCheck {
        name: "cost_dominates_decay".into(),
        field: "a",
        kind: CheckKind::Concavity,
        passed: p.a > pht,
        message: if p.a > pht {
            "ok".into()
        } else {
            format!(
                "a = {} <= decay_p * impact_h * T = {pht}: concavity not guaranteed",
                p.a
            )
        },
    });

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameters_pass_everything() {
        let r = validate_params(&ModelParams::default());
        assert!(r.all_passed(), "{:?}", r.checks.iter().find(|c| !c.passed));
    }

    #[test]
    fn large_impact_breaks_varphi() {
        let p = ModelParams {
            impact_h: 2.0 * 1.0 + 1.0,
            ..Default::default()
        };
        let r = validate_params(&p);
        assert!(!r.check("varphi_nonnegative").unwrap().passed);
        assert!(r.is_usable());
        assert!(r.message_contains("concavity not guaranteed"));
    }

    #[test]
    fn cost_vs_decay() {
        let p = ModelParams {
            decay_p: 1.0,
            impact_h: 1.0,
            horizon: 1.0,
            a: 0.5,
            ..Default::default()
        };
        let r = validate_params(&p);
        assert!(!r.check("cost_dominates_decay").unwrap().passed);
        assert!(r.check("varphi_nonnegative").unwrap().passed);
        assert!(r.is_usable());
    }

    #[test]
    fn nonpositive_cost_is_hard_failure_naming_field() {
        let p = ModelParams {
            a: 0.0,
            ..Default::default()
        };
        let err = validate_params(&p).into_result().unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { field: "a", .. }));
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn nan_is_hard_failure() {
        let p = ModelParams {
            sigma_xi: f64::NAN,
            ..Default::default()
        };
        assert!(!validate_params(&p).is_usable());
    }

    #[test]
    fn set_and_get_by_name() {
        let mut p = ModelParams::default();
        for name in PARAMETER_NAMES {
            p.set(name, 0.25).unwrap();
            assert_eq!(p.get(name), Some(0.25), "{name}");
        }
        assert!(p.set("bogus", 1.0).is_err());
    }

    impl ValidationReport {
        fn message_contains(&self, s: &str) -> bool {
            self.checks.iter().any(|c| c.message.contains(s))
        }
    }
}
