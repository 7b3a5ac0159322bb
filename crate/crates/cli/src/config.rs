use cssa::fusion::{MultifocusConfig, NirVlConfig};
use cssa::solver::{Regularizer, SolverOptions, Structure};

/// Settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub structure: Structure,
    pub lambda: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub solver: SolverOptions,
    pub lowpass_reg: f64,
    /// Absolute zero threshold for the diagnostics; `None` means `1e-8 * max|X|`.
    pub zero_tol: Option<f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            structure: Structure::L1L21,
            lambda: 0.01,
            gamma1: 0.001,
            gamma2: 0.01,
            solver: SolverOptions::default(),
            lowpass_reg: 5.0,
            zero_tol: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// The multifocus defaults: `l21` with `lambda = 0.01`.
    pub fn multifocus() -> Self {
        Self {
            structure: Structure::L21,
            ..Self::default()
        }
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.structure {
            Structure::L1L21 => Regularizer::l1_l21(self.gamma1, self.gamma2),
            s => Regularizer::weighted(s, self.lambda),
        }
    }

    pub fn nir_vl(&self) -> NirVlConfig {
        NirVlConfig {
            regularizer: self.regularizer(),
            solver: self.solver,
            lowpass_reg: self.lowpass_reg,
        }
    }

    pub fn multifocus_config(&self) -> MultifocusConfig {
        MultifocusConfig {
            structure: self.structure,
            lambda: self.lambda,
            solver: self.solver,
            lowpass_reg: self.lowpass_reg,
        }
    }
}
