//! `key=value` run configuration.

use std::fmt::Write as _;

use densrecon_core::pipeline::BinningSpec;
use densrecon_core::solver::InitMode;
use densrecon_core::{AugmentationConfig, ImputationConfig, ProxMode, SolverConfig};

use crate::{CliError, CliResult};

pub const VALID_KEYS: &[&str] = &[
    "n_iter",
    "n_mi",
    "n_tex",
    "n_est",
    "lambda",
    "gamma",
    "beta",
    "theta",
    "seed",
    "prox_mode",
    "bins",
    "tolerance",
    "init",
    "baseline_lambda",
    "baseline_iter",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub augmentation: AugmentationConfig,
    /// Sparsity weight of the quadratic-fidelity baseline; `None` uses `m̄̂ · lambda`.
    pub baseline_lambda: Option<f64>,
    pub baseline_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            augmentation: AugmentationConfig {
                n_iter: 6,
                n_mi: 10,
                imputation: ImputationConfig { n_tex: 15, seed: 0 },
                solver: SolverConfig::default(),
                bins: BinningSpec::default(),
                seed: 0,
            },
            baseline_lambda: None,
            baseline_iter: 200,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{raw}' for config key '{key}'")))
}

impl RunConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut config = RunConfig::default();
        for (number, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key=value, got '{line}'", number + 1)))?;
            config.set(key.trim(), raw.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> CliResult<()> {
        let a = &mut self.augmentation;
        match key {
            "n_iter" => a.n_iter = value(key, raw)?,
            "n_mi" => a.n_mi = value(key, raw)?,
            "n_tex" => a.imputation.n_tex = value(key, raw)?,
            "n_est" => a.solver.n_est = value(key, raw)?,
            "lambda" => a.solver.lambda = value(key, raw)?,
            "gamma" => a.solver.gamma = value(key, raw)?,
            "beta" => a.solver.beta = value(key, raw)?,
            "theta" => a.solver.theta = value(key, raw)?,
            "seed" => {
                a.seed = value(key, raw)?;
                a.imputation.seed = a.seed;
            }
            "prox_mode" => a.solver.prox_mode = value::<ProxMode>(key, raw)?,
            "bins" => a.bins = value::<BinningSpec>(key, raw)?,
            "tolerance" => {
                a.solver.tolerance = if raw == "none" { None } else { Some(value(key, raw)?) };
            }
            "init" => a.solver.init = value::<InitMode>(key, raw)?,
            "baseline_lambda" => {
                self.baseline_lambda = if raw == "auto" { None } else { Some(value(key, raw)?) };
            }
            "baseline_iter" => self.baseline_iter = value(key, raw)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown config key '{key}'; valid keys: {}",
                    VALID_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.augmentation.validate()?;
        if let Some(l) = self.baseline_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(CliError::Usage(format!("baseline_lambda must be non-negative, got {l}")));
            }
        }
        Ok(())
    }

    /// Every key with its current value, one `key=value` per line, in [`VALID_KEYS`] order.
    pub fn to_text(&self) -> String {
        let a = &self.augmentation;
        let s = &a.solver;
        let mut out = String::new();
        for key in VALID_KEYS {
            let v = match *key {
                "n_iter" => a.n_iter.to_string(),
                "n_mi" => a.n_mi.to_string(),
                "n_tex" => a.imputation.n_tex.to_string(),
                "n_est" => s.n_est.to_string(),
                "lambda" => format!("{:?}", s.lambda),
                "gamma" => format!("{:?}", s.gamma),
                "beta" => format!("{:?}", s.beta),
                "theta" => format!("{:?}", s.theta),
                "seed" => a.seed.to_string(),
                "prox_mode" => s.prox_mode.to_string(),
                "bins" => a.bins.to_string(),
                "tolerance" => s.tolerance.map_or("none".into(), |t| format!("{t:?}")),
                "init" => s.init.to_string(),
                "baseline_lambda" => self.baseline_lambda.map_or("auto".into(), |l| format!("{l:?}")),
                "baseline_iter" => self.baseline_iter.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key}={v}");
        }
        out
    }
}
