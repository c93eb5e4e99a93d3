//! Orthogonality diagnostics: ready-made perturbation problems per model.
//!
//! Each problem fixes one Monte Carlo sample at the truth, a set of true
//! nuisance columns, and bounded perturbation targets. Sliding the nuisance
//! along `g0 + r (g_dir - g0)` and measuring the gradient norm at the true
//! parameter exposes how the loss reacts to first-stage error: orthogonal
//! losses show a log-log slope near 2, naive ones near 1. Common random
//! numbers across radii keep the slope estimate stable.

use super::dgp::generate;
use super::{DgpConfig, GamesVariant};
use crate::apps::Model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::first_stage::{NuisanceFit, NuisanceRole};
use crate::moment::{orthogonality_check, CompositeLoss, SlopeReport};
use ndarray::Array1;
use std::collections::BTreeMap;

/// A fixed sample with true nuisance columns and perturbation targets.
pub struct CheckProblem {
    pub model: Model,
    /// False for the deliberately naive (uncorrected or unweighted) loss.
    pub corrected: bool,
    pub theta0: Array1<f64>,
    data: Dataset,
    truth: BTreeMap<NuisanceRole, Array1<f64>>,
    target: BTreeMap<NuisanceRole, Array1<f64>>,
}

impl CheckProblem {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Nuisance columns at perturbation radius `r`.
    pub fn nuisance_at(&self, r: f64) -> Result<NuisanceFit> {
        let mut cols = BTreeMap::new();
        for (&role, g0) in &self.truth {
            let gd = &self.target[&role];
            cols.insert(role, g0 + &((gd - g0) * r));
        }
        NuisanceFit::from_truth(self.data.n_rows(), cols)
    }

    pub fn loss_at(&self, r: f64) -> Result<CompositeLoss> {
        let fit = self.nuisance_at(r)?;
        self.model.loss(&self.data, &fit, self.corrected)
    }

    /// Gradient-vs-radius slope report over `r_grid`.
    pub fn run(&self, r_grid: &[f64]) -> Result<SlopeReport> {
        orthogonality_check(&self.theta0, r_grid, |r| self.loss_at(r))
    }
}

fn tanh_of(col: &Array1<f64>) -> Array1<f64> {
    col.mapv(f64::tanh)
}

/// Builds the perturbation problem for a model. `naive` selects the
/// non-orthogonal variant: the uncorrected moment for missing data and
/// games, the unweighted (unit link-slope) loss for the logistic treatment
/// effect. The partially linear loss has no naive variant.
pub fn check_problem(model: Model, naive: bool, n_mc: usize, seed: u64) -> Result<CheckProblem> {
    if naive && matches!(model, Model::PartiallyLinear) {
        return Err(Error::Config(
            "the partially linear loss is orthogonal by construction; no naive variant".into(),
        ));
    }
    let mut cfg = match model {
        Model::PartiallyLinear => {
            let mut c = DgpConfig::desk(model);
            c.p = 6;
            c.d_u = 6;
            c.k_alpha = 2;
            c.k_beta = 2;
            c
        }
        Model::LogisticTe => {
            let mut c = DgpConfig::desk(model);
            c.p = 6;
            c.d_u = 6;
            c.k_alpha = 2;
            // a tame treatment spread keeps the index away from the logistic
            // tails, so the 1/V weights stay bounded and the gradient's
            // Monte Carlo noise small
            c.sigma_eta = 0.5;
            c
        }
        Model::MissingData => {
            let mut c = DgpConfig::desk(model);
            c.p = 4;
            c.d_u = 4;
            // calmer covariate scales keep the Monte Carlo noise floor of
            // the gradient well below the second-order signal
            c.sigma_x = 1.5;
            c.sigma_u = 1.5;
            c
        }
        Model::Games => {
            let mut c = DgpConfig::desk(model);
            c.p = 5;
            c.d_u = 4;
            c.k_alpha = 2;
            c.games_variant = GamesVariant::Decoupled;
            c
        }
    };
    cfg.n = n_mc;
    cfg.seed = seed;
    let sim = generate(&cfg, 0)?;
    let data = sim.data;
    let mut truth = sim.truth.nuisance;
    let mut target = BTreeMap::new();

    match model {
        Model::PartiallyLinear => {
            let u1 = data.column("u_1")?;
            let h0 = &truth[&NuisanceRole::CondTreatment];
            let q0 = &truth[&NuisanceRole::CondOutcome];
            target.insert(
                NuisanceRole::CondTreatment,
                h0 + &(tanh_of(u1) * 1.0 + 0.5),
            );
            target.insert(
                NuisanceRole::CondOutcome,
                q0 + &(tanh_of(u1) * 1.0 - 0.4),
            );
        }
        Model::LogisticTe => {
            let u1 = data.column("u_1")?;
            let u2 = data.column("u_2")?;
            if naive {
                // unweighted loss: pin the link-slope weight at one
                truth.insert(NuisanceRole::LinkSlope, Array1::ones(data.n_rows()));
            }
            let pi0 = &truth[&NuisanceRole::CondTreatment];
            let q0 = &truth[&NuisanceRole::CondOutcome];
            let v0 = &truth[&NuisanceRole::LinkSlope];
            target.insert(
                NuisanceRole::CondTreatment,
                pi0 + &(tanh_of(u1) * 2.0 + 0.8),
            );
            target.insert(
                NuisanceRole::CondOutcome,
                q0 + &(tanh_of(u1) * 2.0 - 0.8),
            );
            let v_target = if naive {
                v0.clone()
            } else {
                v0 * &(tanh_of(u2) * 0.8 + 1.0)
            };

            target.insert(NuisanceRole::LinkSlope, v_target);
        }
        Model::MissingData => {
            let x1 = data.column("x_1")?;
            let u1 = data.column("u_1")?;
            let p0 = &truth[&NuisanceRole::Propensity];
            let bump = Array1::from_iter(
                x1.iter().zip(u1.iter()).map(|(a, b)| 0.4 * ((a + b) * 0.5).tanh() + 0.08),
            );
            target.insert(
                NuisanceRole::Propensity,
                (p0 + &bump).mapv(|v| v.clamp(0.02, 0.98)),
            );
            let h0 = &truth[&NuisanceRole::CorrectionH];
            let h_bump = Array1::from_iter(
                x1.iter().zip(u1.iter()).map(|(a, b)| 6.0 * ((a + b) * 0.5).tanh() + 2.0),
            );
            target.insert(NuisanceRole::CorrectionH, h0 * 2.0 + &h_bump);
        }
        Model::Games => {
            let x1 = data.column("x_1")?;
            let g0 = &truth[&NuisanceRole::OpponentBelief];
            target.insert(
                NuisanceRole::OpponentBelief,
                (g0 + &(tanh_of(x1) * 0.4 + 0.2)).mapv(|v| v.clamp(0.02, 0.98)),
            );
            let h0 = &truth[&NuisanceRole::CorrectionH];
            target.insert(
                NuisanceRole::CorrectionH,
                h0 + &(tanh_of(x1) * 0.7 + 0.35),
            );
        }
    }

    Ok(CheckProblem {
        model,
        corrected: !naive,
        theta0: sim.truth.theta0,
        data,
        truth,
        target,
    })
}
