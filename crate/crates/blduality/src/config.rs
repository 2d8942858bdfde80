//! Run configuration: seed, restart count and named tolerances.

use std::collections::BTreeMap;

use blduality_core::gaussian::GaussianOptions;
use blduality_core::simplex::OptimizerOptions;

use crate::error::CliError;

/// Every tolerance a subcommand may read, with its default.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("gaussian_eps", 1e-9),
    ("gaussian_max_iter", 1e5),
    ("gaussian_tol", 1e-6),
    ("gaussian_value_floor", -1e8),
    ("grid_threshold", 3.0),
    ("hc_sign", 1e-9),
    ("max_iter", 1e4),
    ("optimizer_tol", 1e-10),
    ("st_coupling", 1e-9),
    ("st_dpi", 1e-12),
    ("st_grad_rel", 1e-5),
    ("st_grid", 1e-4),
    ("st_kl", 1e-15),
    ("st_renyi", 1e-6),
    ("st_shearer", 1e-12),
    ("st_soundness", 1e-12),
    ("st_tightness", 1e-3),
    ("st_wyner", 1e-6),
    ("verify_rel", 1e-12),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub restarts: usize,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: OptimizerOptions::default().restarts,
            tolerances: DEFAULT_TOLERANCES.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl RunConfig {
    /// Applies `KEY=VALUE` overrides; unknown keys are usage errors.
    pub fn with_overrides(mut self, overrides: &[String]) -> Result<Self, CliError> {
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--tol expects KEY=VALUE, got `{item}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("tolerance `{key}` needs a number, got `{value}`")))?;
            match self.tolerances.get_mut(key.trim()) {
                Some(slot) => *slot = value,
                None => return Err(CliError::Usage(format!("unknown tolerance `{key}`"))),
            }
        }
        Ok(self)
    }

    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }

    pub fn optimizer(&self) -> OptimizerOptions {
        OptimizerOptions {
            restarts: self.restarts,
            seed: self.seed,
            max_iter: self.tol("max_iter") as usize,
            tol: self.tol("optimizer_tol"),
            grid_threshold: self.tol("grid_threshold") as usize,
        }
    }

    pub fn gaussian(&self) -> GaussianOptions {
        GaussianOptions {
            eps: self.tol("gaussian_eps"),
            tol: self.tol("gaussian_tol"),
            max_iter: self.tol("gaussian_max_iter") as usize,
            value_floor: self.tol("gaussian_value_floor"),
        }
    }
}
