use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KineticBounds;

/// Which PALM blocks are updated in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSelection {
    pub m: bool,
    pub a: bool,
    pub b: bool,
    pub alpha: bool,
}

impl BlockSelection {
    pub const ALL: Self = Self {
        m: true,
        a: true,
        b: true,
        alpha: true,
    };
    /// Kinetic initialization: factors and proportions frozen.
    pub const KINETICS_ONLY: Self = Self {
        m: false,
        a: false,
        b: true,
        alpha: true,
    };
    /// Ground-truth pass: factors and rates frozen.
    pub const PROPORTIONS_AND_COEFFS: Self = Self {
        m: false,
        a: true,
        b: true,
        alpha: false,
    };

    pub fn any(&self) -> bool {
        self.m || self.a || self.b || self.alpha
    }
}

impl Default for BlockSelection {
    fn default() -> Self {
        Self::ALL
    }
}

/// Regularization weights, step control and stopping rule for PALM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Spatial smoothness weight on the proportion maps.
    pub eta: f64,
    /// Weight of the pull towards the initial factor TACs.
    pub beta: f64,
    /// Group-sparsity weight on the coefficient matrices.
    pub lambda: f64,
    /// Step scale; each block moves by `gamma / L`.
    pub gamma: f64,
    /// Stop when the relative objective change falls below this.
    pub epsilon: f64,
    /// Upper bound on outer iterations, warm-up included.
    pub max_iters: usize,
    /// Leading iterations with the factor TACs held fixed.
    pub warmup_fixed_m_iters: usize,
    pub bounds: KineticBounds,
    pub blocks: BlockSelection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            beta: 0.1,
            lambda: 0.5,
            gamma: 0.9,
            epsilon: 5e-3,
            max_iters: 500,
            warmup_fixed_m_iters: 50,
            bounds: KineticBounds::default(),
            blocks: BlockSelection::ALL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("beta", self.beta),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        self.bounds.validate()
    }

    /// Same configuration restricted to some blocks and a new threshold.
    pub fn restricted(&self, blocks: BlockSelection, epsilon: f64) -> Self {
        Self {
            blocks,
            epsilon,
            warmup_fixed_m_iters: 0,
            ..self.clone()
        }
    }
}
