use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Physical parameters of the driven collective-spin model.
///
/// All rates share one time unit. The detuning and the total spin are
/// derived at construction and never set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRecord", into = "ParamsRecord")]
pub struct ModelParams {
    omega0: f64,
    omega_d: f64,
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    n_spins: usize,
}

/// Serialized form of [`ModelParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsRecord {
    pub omega0: f64,
    pub omega_d: f64,
    pub epsilon: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub n_spins: usize,
}

impl ModelParams {
    pub fn new(
        omega0: f64,
        omega_d: f64,
        epsilon: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        n_spins: usize,
    ) -> Result<Self> {
        let errors = Self::violations(omega0, omega_d, epsilon, gamma_plus, gamma_minus, n_spins);
        if let Some((field, reason)) = errors.into_iter().next() {
            return Err(Error::InvalidParameter { field, reason });
        }
        Ok(Self {
            omega0,
            omega_d,
            detuning: omega0 - omega_d,
            epsilon,
            gamma_plus,
            gamma_minus,
            n_spins,
        })
    }

    /// Constructs parameters from a drive frequency and a detuning, with
    /// `omega0 = omega_d + detuning`.
    pub fn with_detuning(
        omega_d: f64,
        detuning: f64,
        epsilon: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        n_spins: usize,
    ) -> Result<Self> {
        Self::new(omega_d + detuning, omega_d, epsilon, gamma_plus, gamma_minus, n_spins)
    }

    /// Every violated constraint, as `(field, reason)` pairs.
    pub fn violations(
        omega0: f64,
        omega_d: f64,
        epsilon: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        n_spins: usize,
    ) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (field, v) in [("omega0", omega0), ("omega_d", omega_d)] {
            if !v.is_finite() {
                out.push((field, format!("must be finite, got {v}")));
            }
        }
        for (field, v) in [
            ("epsilon", epsilon),
            ("gamma_plus", gamma_plus),
            ("gamma_minus", gamma_minus),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push((field, format!("must be finite and non-negative, got {v}")));
            }
        }
        if n_spins == 0 {
            out.push(("n_spins", "must be at least 1".to_string()));
        }
        out
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn omega_d(&self) -> f64 {
        self.omega_d
    }
    pub fn detuning(&self) -> f64 {
        self.detuning
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn gamma_plus(&self) -> f64 {
        self.gamma_plus
    }
    pub fn gamma_minus(&self) -> f64 {
        self.gamma_minus
    }
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }
    /// S = N/2.
    pub fn total_spin(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }
    /// Hilbert-space dimension of the maximal Dicke manifold, N + 1.
    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    /// True when the undriven dynamics hosts a self-sustained oscillator,
    /// i.e. `gamma_plus < gamma_minus`.
    pub fn has_sso_background(&self) -> bool {
        self.gamma_plus < self.gamma_minus
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.omega0, self.omega_d, epsilon, self.gamma_plus, self.gamma_minus, self.n_spins)
    }

    pub fn with_n_spins(&self, n_spins: usize) -> Result<Self> {
        Self::new(self.omega0, self.omega_d, self.epsilon, self.gamma_plus, self.gamma_minus, n_spins)
    }

    /// Keeps the drive frequency and moves `omega0` to realize the detuning.
    pub fn with_detuning_value(&self, detuning: f64) -> Result<Self> {
        Self::with_detuning(
            self.omega_d,
            detuning,
            self.epsilon,
            self.gamma_plus,
            self.gamma_minus,
            self.n_spins,
        )
    }
}

impl TryFrom<ParamsRecord> for ModelParams {
    type Error = Error;
    fn try_from(r: ParamsRecord) -> Result<Self> {
        ModelParams::new(r.omega0, r.omega_d, r.epsilon, r.gamma_plus, r.gamma_minus, r.n_spins)
    }
}

impl From<ModelParams> for ParamsRecord {
    fn from(p: ModelParams) -> Self {
        ParamsRecord {
            omega0: p.omega0,
            omega_d: p.omega_d,
            epsilon: p.epsilon,
            gamma_plus: p.gamma_plus,
            gamma_minus: p.gamma_minus,
            n_spins: p.n_spins,
        }
    }
}
