use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Time of node `k`; the last node is exactly `T`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * (k as f64 / self.n_steps as f64)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }

    /// Index of the node at time `t`, or `NotOnGrid`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let k = x.round();
        if !(0.0..=self.n_steps as f64).contains(&k) || (x - k).abs() > 1e-9 * self.n_steps as f64 {
            return Err(Error::NotOnGrid { t });
        }
        Ok(k as usize)
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            n_steps: self.n_steps * factor,
        }
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(T = {}, n = {}) vs (T = {}, n = {})",
                self.horizon, self.n_steps, other.horizon, other.n_steps
            )));
        }
        Ok(())
    }
}
