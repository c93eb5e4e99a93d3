//! The four concrete models: column schemas, index loadings, and loss
//! assembly from fitted (or injected) nuisance columns.
//!
//! Column conventions are prefix-based: scalar roles are single columns
//! (`y`, `tau`, `d`, `v`), vector blocks are `u_1..u_k` and `x_1..x_p`.
//! Every model maps a [`Dataset`] plus a [`NuisanceFit`] to a
//! [`CompositeLoss`] over the target dimension `p`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::first_stage::{NuisanceFit, NuisanceRole};
use crate::moment::{CompositeLoss, IndexFn, OrthogonalCorrection, SingleIndexMoment};
use ndarray::Array2;
use std::sync::Arc;

/// Lower clip for link-slope weights used as divisors.
pub const V_FLOOR: f64 = 1e-3;

/// Numerically stable logistic function.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function.
pub fn logistic_prime(t: f64) -> f64 {
    let l = logistic(t);
    l * (1.0 - l)
}

/// log(1 + e^t) without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        (1.0 + t.exp()).ln()
    }
}

/// A monotone link with first and second derivative hooks.
#[derive(Clone, Copy)]
pub struct LinkFunction {
    pub g: fn(f64) -> f64,
    pub dg: fn(f64) -> f64,
    pub d2g: fn(f64) -> f64,
    /// Antiderivative of `g`, fixing the loss integrand up to a constant.
    pub g_int: fn(f64) -> f64,
}

/// The logistic link; its antiderivative is the softplus.
pub fn logistic_link() -> LinkFunction {
    LinkFunction {
        g: logistic,
        dg: logistic_prime,
        d2g: |t| {
            let l = logistic(t);
            l * (1.0 - l) * (1.0 - 2.0 * l)
        },
        g_int: softplus,
    }
}

/// Which model a dataset and pipeline refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    PartiallyLinear,
    LogisticTe,
    MissingData,
    Games,
}

impl Model {
    pub fn id(&self) -> &'static str {
        match self {
            Model::PartiallyLinear => "plr",
            Model::LogisticTe => "logit-te",
            Model::MissingData => "missing",
            Model::Games => "games",
        }
    }

    pub fn parse(s: &str) -> Result<Model> {
        match s {
            "plr" => Ok(Model::PartiallyLinear),
            "logit-te" => Ok(Model::LogisticTe),
            "missing" => Ok(Model::MissingData),
            "games" => Ok(Model::Games),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected plr, logit-te, missing, games)"
            ))),
        }
    }

    pub fn all() -> [Model; 4] {
        [Model::PartiallyLinear, Model::LogisticTe, Model::MissingData, Model::Games]
    }

    /// All four shipped moments are increasing in the single index, so the
    /// integrated losses are convex.
    pub fn monotone(&self) -> bool {
        true
    }

    pub fn schema(&self) -> ApplicationSchema {
        match self {
            Model::PartiallyLinear => ApplicationSchema {
                id: "plr",
                scalars: &["y", "tau"],
                blocks: &["u"],
            },
            Model::LogisticTe => ApplicationSchema {
                id: "logit-te",
                scalars: &["y", "tau"],
                blocks: &["u"],
            },
            Model::MissingData => ApplicationSchema {
                id: "missing",
                scalars: &["y", "d"],
                blocks: &["x", "u"],
            },
            Model::Games => ApplicationSchema {
                id: "games",
                scalars: &["y", "v"],
                blocks: &["x"],
            },
        }
    }

    /// Nuisance roles the loss assembly reads.
    pub fn required_roles(&self, corrected: bool) -> Vec<NuisanceRole> {
        match self {
            Model::PartiallyLinear => vec![NuisanceRole::CondTreatment, NuisanceRole::CondOutcome],
            Model::LogisticTe => vec![
                NuisanceRole::CondTreatment,
                NuisanceRole::CondOutcome,
                NuisanceRole::LinkSlope,
            ],
            Model::MissingData => {
                let mut roles = vec![NuisanceRole::Propensity];
                if corrected {
                    roles.push(NuisanceRole::CorrectionH);
                }
                roles
            }
            Model::Games => {
                let mut roles = vec![NuisanceRole::OpponentBelief];
                if corrected {
                    roles.push(NuisanceRole::CorrectionH);
                }
                roles
            }
        }
    }

    /// Dimension of the target parameter implied by the dataset columns.
    pub fn target_dim(&self, data: &Dataset) -> Result<usize> {
        match self {
            // x = (1, u_1..u_{p-1}) and x = tau * u respectively: p tracks
            // the width of the control block.
            Model::PartiallyLinear | Model::LogisticTe => {
                let w = data.block_width("u");
                if w == 0 {
                    return Err(Error::Data("expected columns u_1..u_k".into()));
                }
                Ok(w)
            }
            Model::MissingData => {
                let w = data.block_width("x");
                if w == 0 {
                    return Err(Error::Data("expected columns x_1..x_p".into()));
                }
                Ok(w)
            }
            Model::Games => {
                let w = data.block_width("x");
                if w == 0 {
                    return Err(Error::Data("expected columns x_1..x_{p-1}".into()));
                }
                Ok(w + 1)
            }
        }
    }

    /// Index loadings `Lambda(z_i, g(z_i))` as an n-by-p matrix.
    pub fn loadings(&self, data: &Dataset, nuisance: &NuisanceFit) -> Result<Array2<f64>> {
        let n = data.n_rows();
        match self {
            Model::PartiallyLinear => {
                // Lambda = (tau - h(u)) x with x = (1, u_1..u_{p-1}).
                let p = self.target_dim(data)?;
                let tau = data.column("tau")?;
                let h = nuisance.column(NuisanceRole::CondTreatment)?;
                let u = data.block("u", p - 1)?;
                let mut out = Array2::zeros((n, p));
                for i in 0..n {
                    let w = tau[i] - h[i];
                    out[[i, 0]] = w;
                    for j in 1..p {
                        out[[i, j]] = w * u[[i, j - 1]];
                    }
                }
                Ok(out)
            }
            Model::LogisticTe => {
                // Lambda = x - h(u) = (tau - pi(u)) u.
                let p = self.target_dim(data)?;
                let tau = data.column("tau")?;
                let pi = nuisance.column(NuisanceRole::CondTreatment)?;
                let u = data.block("u", p)?;
                let mut out = Array2::zeros((n, p));
                for i in 0..n {
                    let w = tau[i] - pi[i];
                    for j in 0..p {
                        out[[i, j]] = w * u[[i, j]];
                    }
                }
                Ok(out)
            }
            Model::MissingData => {
                let p = self.target_dim(data)?;
                data.block("x", p)
            }
            Model::Games => {
                // Lambda = (x_i; g(z_i)): the last coordinate is the
                // opponent-belief nuisance.
                let p = self.target_dim(data)?;
                let x = data.block("x", p - 1)?;
                let g = nuisance.column(NuisanceRole::OpponentBelief)?;
                let mut out = Array2::zeros((n, p));
                for i in 0..n {
                    for j in 0..p - 1 {
                        out[[i, j]] = x[[i, j]];
                    }
                    out[[i, p - 1]] = g[i];
                }
                Ok(out)
            }
        }
    }

    /// Assembles the model's sample loss. `corrected` toggles the additive
    /// bias-correction term for the missing-data and games moments; the
    /// partially linear and logistic treatment-effect losses are orthogonal
    /// by construction and ignore the flag.
    pub fn loss(
        &self,
        data: &Dataset,
        nuisance: &NuisanceFit,
        corrected: bool,
    ) -> Result<CompositeLoss> {
        nuisance.check_rows(data.n_rows())?;
        for role in self.required_roles(corrected) {
            if !nuisance.has(role) {
                return Err(Error::MissingNuisance {
                    row: 0,
                    what: format!("role '{}' absent from nuisance fit", role.tag()),
                });
            }
        }
        let loadings = self.loadings(data, nuisance)?;
        match self {
            Model::PartiallyLinear => {
                let y = Arc::new(data.column("y")?.to_vec());
                let q = Arc::new(nuisance.column(NuisanceRole::CondOutcome)?.to_vec());
                let moment = squared_moment(y, q);
                CompositeLoss::uncorrected(moment, loadings)
            }
            Model::LogisticTe => {
                let y = Arc::new(data.column("y")?.to_vec());
                let q = Arc::new(nuisance.column(NuisanceRole::CondOutcome)?.to_vec());
                let v = Arc::new(
                    nuisance
                        .column(NuisanceRole::LinkSlope)?
                        .mapv(|x| x.max(V_FLOOR))
                        .to_vec(),
                );
                let moment = weighted_link_moment(logistic_link(), y, q, v);
                CompositeLoss::uncorrected(moment, loadings)
            }
            Model::MissingData => {
                let y = Arc::new(data.column("y")?.to_vec());
                let d = Arc::new(data.column("d")?.to_vec());
                let p = Arc::new(nuisance.column(NuisanceRole::Propensity)?.to_vec());
                let moment = missing_data_moment(y, d.clone(), p.clone());
                if corrected {
                    let h = Arc::new(nuisance.column(NuisanceRole::CorrectionH)?.to_vec());
                    let corr = OrthogonalCorrection::conditional_expectation(
                        Arc::new(move |i| h[i]),
                        Arc::new(move |i| d[i] - p[i]),
                    );
                    CompositeLoss::orthogonalized(moment, loadings, &corr)
                } else {
                    CompositeLoss::uncorrected(moment, loadings)
                }
            }
            Model::Games => {
                let y = Arc::new(data.column("y")?.to_vec());
                let v = Arc::new(data.column("v")?.to_vec());
                let g = Arc::new(nuisance.column(NuisanceRole::OpponentBelief)?.to_vec());
                let moment = binary_choice_moment(y);
                if corrected {
                    let h = Arc::new(nuisance.column(NuisanceRole::CorrectionH)?.to_vec());
                    let corr = OrthogonalCorrection::conditional_expectation(
                        Arc::new(move |i| h[i]),
                        Arc::new(move |i| v[i] - g[i]),
                    );
                    CompositeLoss::orthogonalized(moment, loadings, &corr)
                } else {
                    CompositeLoss::uncorrected(moment, loadings)
                }
            }
        }
    }
}

/// Declares which columns a model expects in a dataset.
#[derive(Debug, Clone)]
pub struct ApplicationSchema {
    pub id: &'static str,
    pub scalars: &'static [&'static str],
    pub blocks: &'static [&'static str],
}

impl ApplicationSchema {
    /// Validates column presence; the error lists every missing column.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let mut missing = Vec::new();
        for col in self.scalars {
            if !data.has_column(col) {
                missing.push(col.to_string());
            }
        }
        for block in self.blocks {
            if data.block_width(block) == 0 {
                missing.push(format!("{block}_1.."));
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "dataset does not match schema '{}': missing columns [{}]; present: [{}]",
                self.id,
                missing.join(", "),
                data.column_names().join(", ")
            )))
        }
    }
}

/// m = t - (y - q): the squared-loss moment of the partially linear model,
/// with integrand K = (y - q - t)^2 / 2.
pub fn squared_moment(y: Arc<Vec<f64>>, q: Arc<Vec<f64>>) -> SingleIndexMoment {
    let (ym, qm) = (y.clone(), q.clone());
    SingleIndexMoment {
        m: Arc::new(move |i, t| t - (ym[i] - qm[i])),
        dm_dt: Arc::new(|_, _| 1.0),
        k: Arc::new(move |i, t| {
            let r = y[i] - q[i] - t;
            0.5 * r * r
        }),
        monotone_in_t: true,
    }
}

/// m = (G(t + q) - y) / V: the weighted nonlinear treatment-effect moment.
/// With the logistic link the integrand is the 1/V-weighted logistic
/// negative log-likelihood at the offset index.
pub fn weighted_link_moment(
    link: LinkFunction,
    y: Arc<Vec<f64>>,
    q: Arc<Vec<f64>>,
    v: Arc<Vec<f64>>,
) -> SingleIndexMoment {
    let (ym, qm, vm) = (y.clone(), q.clone(), v.clone());
    let (qd, vd) = (q.clone(), v.clone());
    SingleIndexMoment {
        m: Arc::new(move |i, t| ((link.g)(t + qm[i]) - ym[i]) / vm[i]),
        dm_dt: Arc::new(move |i, t| (link.dg)(t + qd[i]) / vd[i]),
        k: Arc::new(move |i, t| {
            let idx = t + q[i];
            ((link.g_int)(idx) - y[i] * idx) / v[i]
        }),
        monotone_in_t: true,
    }
}

/// m = d (t - y) / p: the inverse-propensity-weighted squared-loss moment
/// for outcomes observed only when d = 1.
pub fn missing_data_moment(
    y: Arc<Vec<f64>>,
    d: Arc<Vec<f64>>,
    p: Arc<Vec<f64>>,
) -> SingleIndexMoment {
    let (yu, yi) = (y.clone(), y);
    generalized_missing_data_moment(
        Arc::new(move |i, t| t - yu[i]),
        Arc::new(|_, _| 1.0),
        Arc::new(move |i, t| {
            let r = t - yi[i];
            0.5 * r * r
        }),
        d,
        p,
    )
}

/// General missing-data moment m = d u(y, t) / p for a user-supplied
/// monotone residual `u` with derivative and antiderivative hooks. The hooks
/// receive the observation index so they can read the stored outcome.
pub fn generalized_missing_data_moment(
    u: IndexFn,
    du_dt: IndexFn,
    u_int: IndexFn,
    d: Arc<Vec<f64>>,
    p: Arc<Vec<f64>>,
) -> SingleIndexMoment {
    let (dm, pm) = (d.clone(), p.clone());
    let (dd, pd) = (d.clone(), p.clone());
    SingleIndexMoment {
        m: Arc::new(move |i, t| dm[i] * u(i, t) / pm[i]),
        dm_dt: Arc::new(move |i, t| dd[i] * du_dt(i, t) / pd[i]),
        k: Arc::new(move |i, t| d[i] * u_int(i, t) / p[i]),
        monotone_in_t: true,
    }
}

/// m = L(t) - y: the logistic binary-choice moment with log-loss integrand.
pub fn binary_choice_moment(y: Arc<Vec<f64>>) -> SingleIndexMoment {
    let ym = y.clone();
    SingleIndexMoment {
        m: Arc::new(move |i, t| logistic(t) - ym[i]),
        dm_dt: Arc::new(|_, t| logistic_prime(t)),
        k: Arc::new(move |i, t| softplus(t) - y[i] * t),
        monotone_in_t: true,
    }
}
