//! Experiment configuration.
//!
//! The JSON document is flat: the model parameters sit next to the run
//! settings. Unknown keys are rejected and every key has a default, so `{}`
//! is a valid config describing the reference experiment.

use std::path::{Path, PathBuf};

use equilibrium_core::model::PARAMETER_NAMES;
use equilibrium_core::oracle::{GateauxConfig, PicardConfig};
use equilibrium_core::sim::{SimOptions, PROCESS_NAMES};
use equilibrium_core::ModelParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// One-dimensional parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Zero-noise parameter set checked against the Picard iteration by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardCheck {
    pub params: ModelParams,
    pub solver: PicardConfig,
    /// Sup-norm tolerance against the closed-form trajectory.
    pub tolerance: f64,
}

impl Default for PicardCheck {
    fn default() -> Self {
        Self {
            params: ModelParams {
                phi: 0.5e-3,
                psi: 0.0,
                horizon: 0.1,
                q_b0: 1.0,
                q_i0: -0.5,
                alpha0: 0.2,
                xi0: 5.0,
                ..ModelParams::default()
            }
            .without_noise(),
            solver: PicardConfig::default(),
            tolerance: 1e-5,
        }
    }
}

/// Settings of the Gâteaux checks run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateauxCheck {
    /// Steps of the fine grid; a companion grid with half as many steps is
    /// used to extrapolate the time step away. Must be even.
    pub n_steps: usize,
    pub epsilon_list: Vec<f64>,
    pub n_directions: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub perturbation: f64,
}

impl Default for GateauxCheck {
    fn default() -> Self {
        let g = GateauxConfig::default();
        Self {
            n_steps: 1000,
            epsilon_list: g.epsilon_list,
            n_directions: g.n_directions,
            n_paths: g.n_paths,
            seed: g.seed,
            perturbation: g.perturbation,
        }
    }
}

impl GateauxCheck {
    pub fn oracle_config(&self) -> GateauxConfig {
        GateauxConfig {
            epsilon_list: self.epsilon_list.clone(),
            n_directions: self.n_directions,
            n_paths: self.n_paths,
            seed: self.seed,
            perturbation: self.perturbation,
        }
    }
}

/// Everything except the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub band_stride: Option<usize>,
    pub log_processes: Vec<String>,
    pub n_sample_paths: usize,
    pub outputs: PathBuf,
    pub sweep: Option<Sweep>,
    pub picard: Option<PicardCheck>,
    pub gateaux: Option<GateauxCheck>,
}

impl Default for RunSettings {
    fn default() -> Self {
        let sim = SimOptions::default();
        Self {
            n_steps: 10_000,
            n_paths: sim.n_paths,
            seed: 42,
            antithetic: sim.antithetic,
            band_stride: sim.band_stride,
            log_processes: sim.log_processes,
            n_sample_paths: sim.n_sample_paths,
            outputs: PathBuf::from("out"),
            sweep: None,
            picard: None,
            gateaux: Some(GateauxCheck::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub run: RunSettings,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let Value::Object(map) = value else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        let (param_map, run_map): (Map<String, Value>, Map<String, Value>) = map
            .into_iter()
            .partition(|(k, _)| PARAMETER_NAMES.contains(&k.as_str()));
        let params: ModelParams = serde_json::from_value(Value::Object(param_map))
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        let run: RunSettings = serde_json::from_value(Value::Object(run_map))
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        let cfg = Self { params, run };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Flat JSON object with every key present.
    pub fn to_value(&self) -> Value {
        let mut map = match serde_json::to_value(&self.params) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("parameters serialize to an object"),
        };
        if let Ok(Value::Object(run)) = serde_json::to_value(&self.run) {
            map.extend(run);
        }
        Value::Object(map)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes")
    }

    /// Single-line form used in CSV preambles.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("config serializes")
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            n_paths: self.run.n_paths,
            antithetic: self.run.antithetic,
            band_stride: self.run.band_stride,
            log_processes: self.run.log_processes.clone(),
            n_sample_paths: self.run.n_sample_paths,
        }
    }

    /// Structural checks on the run settings. Model parameters are validated
    /// separately by the commands so that concavity warnings can be reported.
    fn check(&self) -> Result<(), CliError> {
        let r = &self.run;
        if r.n_steps == 0 {
            return Err(CliError::Config("`n_steps` must be at least 1".into()));
        }
        if r.n_paths == 0 {
            return Err(CliError::Config("`n_paths` must be at least 1".into()));
        }
        if r.band_stride == Some(0) {
            return Err(CliError::Config("`band_stride` must be at least 1".into()));
        }
        if r.n_sample_paths > r.n_paths {
            return Err(CliError::Config(
                "`n_sample_paths` must not exceed `n_paths`".into(),
            ));
        }
        for name in &r.log_processes {
            if !PROCESS_NAMES.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "`log_processes`: unknown process `{name}`"
                )));
            }
        }
        if let Some(s) = &r.sweep {
            if !PARAMETER_NAMES.contains(&s.parameter.as_str()) {
                return Err(CliError::Config(format!(
                    "`sweep.parameter`: unknown parameter `{}`",
                    s.parameter
                )));
            }
            if s.values.is_empty() {
                return Err(CliError::Config("`sweep.values` must not be empty".into()));
            }
        }
        if let Some(g) = &r.gateaux {
            if g.n_steps < 2 || g.n_steps % 2 != 0 {
                return Err(CliError::Config(
                    "`gateaux.n_steps` must be even and at least 2".into(),
                ));
            }
            if g.epsilon_list.len() < 2 {
                return Err(CliError::Config(
                    "`gateaux.epsilon_list` needs at least two values".into(),
                ));
            }
            if g.n_paths < 2 {
                return Err(CliError::Config(
                    "`gateaux.n_paths` must be at least 2".into(),
                ));
            }
        }
        if let Some(p) = &r.picard {
            if !p.params.is_noise_free() {
                return Err(CliError::Config(
                    "`picard.params` must switch off sigma_S, sigma_alpha and sigma_xi".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_reference_config() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.params.a, 1.2e-3);
        assert_eq!(cfg.run.n_steps, 10_000);
        assert_eq!(cfg.run.n_paths, 10_000);
    }

    #[test]
    fn round_trip_materializes_defaults() {
        let text = r#"{"impact_h": 10.0, "n_paths": 50, "sweep": {"parameter": "decay_p", "values": [0, 4]}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let value = cfg.to_value();
        let obj = value.as_object().unwrap();
        for name in PARAMETER_NAMES {
            assert!(obj.contains_key(name), "{name}");
        }
        for key in [
            "n_steps",
            "seed",
            "outputs",
            "log_processes",
            "picard",
            "gateaux",
        ] {
            assert!(obj.contains_key(key), "{key}");
        }
        let back = ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_value(), value);
        assert_eq!(back.params.impact_h, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"alpha": 1}"#,
            r#"{"gateaux": {"n_step": 10}}"#,
            r#"{"picard": {"params": {"hh": 1}}}"#,
            r#"{"sweep": {"parameter": "a", "values": [1], "extra": 0}}"#,
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn settings_are_checked() {
        for (text, needle) in [
            (r#"{"n_steps": 0}"#, "n_steps"),
            (r#"{"log_processes": ["q"]}"#, "log_processes"),
            (
                r#"{"sweep": {"parameter": "nope", "values": [1]}}"#,
                "sweep.parameter",
            ),
            (r#"{"gateaux": {"n_steps": 7}}"#, "gateaux.n_steps"),
            (r#"{"picard": {"params": {"sigma_S": 1}}}"#, "picard.params"),
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{err}");
        }
    }
}
