//! Benchmark harness: data-generating processes for the four models,
//! comparison estimators, replication loops, and report files.

mod baselines;
mod checks;
mod dgp;
mod replicate;
mod report;

pub use baselines::{run_method, run_with_nuisance, Method};
pub use checks::{check_problem, CheckProblem};
pub use dgp::{equilibrium_residual, generate, GamesVariant, SimData, SimTruth};
pub use replicate::{run_replications, ReplicationReport, RunRecord};
pub use report::Summary;

use crate::apps::Model;
use crate::error::{Error, Result};
use serde::Serialize;

/// Everything that parameterizes one simulated experiment.
#[derive(Debug, Clone, Serialize)]
pub struct DgpConfig {
    pub model_id: String,
    pub n: usize,
    /// Target dimension.
    pub p: usize,
    /// Control dimension (defaults to p where the generator ties them).
    pub d_u: usize,
    /// Sparsity of the target parameter.
    pub k: usize,
    /// Sparsity of the outcome-side nuisance (k_alpha / k_g / k_u / k_2).
    pub k_alpha: usize,
    /// Sparsity of the treatment-side nuisance (k_beta / k_1).
    pub k_beta: usize,
    pub sigma_eps: f64,
    pub sigma_eta: f64,
    pub sigma_x: f64,
    pub sigma_u: f64,
    /// Nonzero value of the target coefficients.
    pub theta_value: f64,
    /// Strategic-interaction coefficients (games model only).
    pub delta1: f64,
    pub delta2: f64,
    pub games_variant: GamesVariant,
    pub seed: u64,
    pub n_replications: usize,
}

impl DgpConfig {
    pub fn model(&self) -> Result<Model> {
        Model::parse(&self.model_id)
    }

    /// Benchmark-exact parameterization.
    pub fn paper(model: Model) -> DgpConfig {
        match model {
            Model::PartiallyLinear => DgpConfig {
                model_id: "plr".into(),
                n: 5000,
                p: 200,
                d_u: 200,
                k: 2,
                k_alpha: 20,
                k_beta: 20,
                sigma_eps: 1.0,
                sigma_eta: 1.0,
                sigma_x: 1.0,
                sigma_u: 1.0,
                theta_value: 1.0,
                delta1: 0.0,
                delta2: 0.0,
                games_variant: GamesVariant::Decoupled,
                seed: 0,
                n_replications: 100,
            },
            Model::LogisticTe => DgpConfig {
                model_id: "logit-te".into(),
                n: 5000,
                p: 2000,
                d_u: 2000,
                k: 2,
                k_alpha: 5,
                k_beta: 5,
                sigma_eps: 1.0,
                sigma_eta: 3.0,
                sigma_x: 1.0,
                sigma_u: 0.5,
                theta_value: 1.0,
                delta1: 0.0,
                delta2: 0.0,
                games_variant: GamesVariant::Decoupled,
                seed: 0,
                n_replications: 100,
            },
            Model::MissingData => DgpConfig {
                model_id: "missing".into(),
                n: 5000,
                p: 20,
                d_u: 20,
                k: 1,
                k_alpha: 1, // k_u
                k_beta: 1,
                sigma_eps: 1.0,
                sigma_eta: 0.1,
                sigma_x: 3.0,
                sigma_u: 3.0,
                theta_value: 2.0,
                delta1: 0.0,
                delta2: 0.0,
                games_variant: GamesVariant::Decoupled,
                seed: 0,
                n_replications: 1000,
            },
            Model::Games => DgpConfig {
                model_id: "games".into(),
                n: 10_000,
                p: 1000,
                d_u: 999,
                k: 1,      // k_1: sparsity of player 1's covariate effects
                k_alpha: 3, // k_2: sparsity of player 2's covariate effects
                k_beta: 1,
                sigma_eps: 1.0,
                sigma_eta: 1.0,
                sigma_x: 1.0,
                sigma_u: 1.0,
                theta_value: 1.0,
                delta1: -2.0,
                delta2: -3.0,
                games_variant: GamesVariant::Equilibrium,
                seed: 0,
                n_replications: 100,
            },
        }
    }

    /// Reduced sizes that keep every comparison qualitatively intact while
    /// running in minutes.
    pub fn desk(model: Model) -> DgpConfig {
        let mut cfg = DgpConfig::paper(model);
        match model {
            Model::PartiallyLinear => {
                cfg.n = 2000;
                cfg.p = 100;
                cfg.d_u = 100;
                cfg.k_alpha = 5;
                cfg.k_beta = 5;
                cfg.n_replications = 50;
            }
            Model::LogisticTe => {
                cfg.n = 2000;
                cfg.p = 50;
                cfg.d_u = 50;
                cfg.n_replications = 50;
            }
            Model::MissingData => {
                cfg.n = 2000;
                cfg.n_replications = 100;
            }
            Model::Games => {
                cfg.n = 4000;
                cfg.p = 200;
                cfg.d_u = 199;
                cfg.n_replications = 50;
            }
        }
        cfg
    }

    /// Applies a `key=value` override; used by sweeps and CLI flags.
    pub fn set_field(&mut self, key: &str, value: f64) -> Result<()> {
        let as_usize = |v: f64| -> Result<usize> {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!("'{key}' needs a nonnegative integer, got {v}")));
            }
            Ok(v as usize)
        };
        match key {
            "n" => self.n = as_usize(value)?,
            "p" => {
                self.p = as_usize(value)?;
                // keep the generator's dimension ties intact
                match self.model()? {
                    Model::PartiallyLinear | Model::LogisticTe => self.d_u = self.p.max(1),
                    Model::Games => self.d_u = self.p.saturating_sub(1).max(1),
                    // the control dimension is a free parameter here
                    Model::MissingData => {}
                }
            }
            "d_u" => self.d_u = as_usize(value)?,
            "k" => self.k = as_usize(value)?,
            "k_alpha" => self.k_alpha = as_usize(value)?,
            "k_beta" => self.k_beta = as_usize(value)?,
            "sigma_eps" => self.sigma_eps = value,
            "sigma_eta" => self.sigma_eta = value,
            "sigma_x" => self.sigma_x = value,
            "sigma_u" => self.sigma_u = value,
            "theta_value" => self.theta_value = value,
            "delta1" => self.delta1 = value,
            "delta2" => self.delta2 = value,
            "seed" => self.seed = value as u64,
            "reps" | "n_replications" => self.n_replications = as_usize(value)?,
            other => {
                return Err(Error::Config(format!("unknown generator field '{other}'")));
            }
        }
        Ok(())
    }
}
