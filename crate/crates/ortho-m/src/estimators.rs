//! Two-stage penalized estimators and their penalty plans.
//!
//! `algorithm1` fits nuisances on an auxiliary fold and solves the plug-in
//! penalized loss globally on the estimation fold (convex case).
//! `algorithm2` splits into three folds, takes a preliminary step inside an
//! l1 ball around zero, and re-solves inside a shrinking ball around the
//! preliminary estimate. `cross_fit_estimate` swaps two folds so every
//! observation contributes to both stages.

use crate::apps::Model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::first_stage::{
    build_nuisance, build_nuisance_on_fold, FirstStageConfig, FoldPlan, NuisanceFit,
};
use crate::moment::CompositeLoss;
use crate::solver::{prox_grad_minimize, SearchSet, SolverConfig, SolverDiagnostics};
use ndarray::Array1;
use serde::Serialize;

/// Coefficients below this magnitude count as zero when reporting support.
pub const SUPPORT_EPS: f64 = 1e-10;

/// Inputs from which the penalty plan derives its constants. Everything has
/// a default so the plan can be built from `(n, p)` alone.
#[derive(Debug, Clone)]
pub struct PlanInputs {
    /// Confidence parameter of the finite-sample bounds.
    pub delta: f64,
    /// Smoothness bound on the moment and loadings.
    pub u_bound: f64,
    /// Curvature guess entering the shrinking-ball radius.
    pub gamma_guess: f64,
    /// Sparsity guess; defaults to ceil(sqrt(n) / ln p).
    pub k_guess: Option<usize>,
    /// First-stage rate; when absent it is estimated from the fold
    /// disagreement of the fitted nuisances (0 for injected truth).
    pub g_n: Option<f64>,
    /// Radius of the preliminary search ball; defaults to k_guess * U.
    pub r0: Option<f64>,
}

impl Default for PlanInputs {
    fn default() -> Self {
        PlanInputs {
            delta: 0.05,
            u_bound: 1.0,
            gamma_guess: 1.0,
            k_guess: None,
            g_n: None,
            r0: None,
        }
    }
}

/// All penalty-rule constants, derived once per estimation run.
#[derive(Debug, Clone, Serialize)]
pub struct PenaltyPlan {
    pub n: usize,
    pub p: usize,
    pub k_guess: usize,
    pub delta: f64,
    pub u_bound: f64,
    pub gamma_guess: f64,
    pub g_n: f64,
    /// Sampling width of the empirical gradient: U^2 sqrt(ln(2p/delta) / 2n).
    pub epsilon: f64,
    /// Second-order nuisance influence constant, 4 U^3.
    pub b: f64,
    /// Curvature Lipschitz constant in the nuisance, 3 U^3.
    pub l: f64,
    /// Hessian concentration width:
    /// 4 U^5 k sqrt(2 ln p / n) + U^3 sqrt(4 ln(2p/delta) / n).
    pub tau: f64,
    pub r0: f64,
    /// Shrinking-ball radius (8k/gamma)(epsilon + B g^2 + (tau + L g) R0).
    pub r1: f64,
    pub lambda_main: f64,
    pub lambda_pre: f64,
    pub lambda_fin: f64,
}

/// Derives every constant of the penalty rules, setting each penalty to
/// exactly twice its lower bound.
pub fn make_penalty_plan(n: usize, p: usize, inputs: &PlanInputs) -> Result<PenaltyPlan> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("n and p must be positive".into()));
    }
    if !(0.0 < inputs.delta && inputs.delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0,1), got {}",
            inputs.delta
        )));
    }
    let nf = n as f64;
    let pf = p as f64;
    let u = inputs.u_bound;
    let g = inputs.g_n.unwrap_or(0.0);
    let k_guess = inputs
        .k_guess
        .unwrap_or_else(|| (nf.sqrt() / pf.max(2.0).ln()).ceil() as usize)
        .max(1);
    let gamma = inputs.gamma_guess;

    let epsilon = u * u * ((2.0 * pf / inputs.delta).ln() / (2.0 * nf)).sqrt();
    let b = 4.0 * u.powi(3);
    let l = 3.0 * u.powi(3);
    let tau = 4.0 * u.powi(5) * k_guess as f64 * (2.0 * pf.max(2.0).ln() / nf).sqrt()
        + u.powi(3) * (4.0 * (2.0 * pf / inputs.delta).ln() / nf).sqrt();
    let r0 = inputs.r0.unwrap_or(k_guess as f64 * u);

    let base = epsilon + b * g * g;
    let lambda_main = 2.0 * base;
    let lambda_pre = 2.0 * (base + (tau + l * g) * r0);
    let r1 = 8.0 * k_guess as f64 / gamma * (base + (tau + l * g) * r0);
    let lambda_fin = 2.0 * (base + (tau + l * g) * r1);

    Ok(PenaltyPlan {
        n,
        p,
        k_guess,
        delta: inputs.delta,
        u_bound: u,
        gamma_guess: gamma,
        g_n: g,
        epsilon,
        b,
        l,
        tau,
        r0,
        r1,
        lambda_main,
        lambda_pre,
        lambda_fin,
    })
}

/// How the main penalty level is chosen.
#[derive(Debug, Clone, Copy)]
pub enum LambdaRule {
    /// Twice the finite-sample lower bound from the penalty plan.
    Theorem,
    /// The benchmark-caption level: sqrt(ln p / n), except the games model
    /// which uses sqrt(ln p / 4n).
    Caption,
    Manual(f64),
}

impl LambdaRule {
    /// Resolves the penalty for a loss over `n_loss` rows in dimension `p`.
    pub fn resolve(&self, model: Model, n_loss: usize, p: usize, plan: &PenaltyPlan) -> f64 {
        match *self {
            LambdaRule::Theorem => plan.lambda_main,
            LambdaRule::Caption => {
                let scale = if matches!(model, Model::Games) { 4.0 } else { 1.0 };
                ((p.max(2) as f64).ln() / (scale * n_loss as f64)).sqrt()
            }
            LambdaRule::Manual(v) => v,
        }
    }
}

/// Settings for one estimation run.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub lambda: LambdaRule,
    pub plan: PlanInputs,
    pub first_stage: FirstStageConfig,
    pub solver: SolverConfig,
    /// Seed for the fold shuffle.
    pub seed: u64,
    /// Replication index; keeps fold shuffles on distinct streams across
    /// replications of one experiment.
    pub replication: u64,
    /// Pick the direct baseline's penalty by 5-fold cross-validation.
    pub direct_cv: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda: LambdaRule::Caption,
            plan: PlanInputs::default(),
            first_stage: FirstStageConfig::default(),
            solver: SolverConfig::default(),
            seed: 0,
            replication: 0,
            direct_cv: false,
        }
    }
}

/// Truth-referenced error metrics.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorMetrics {
    pub l1_error: f64,
    pub l2_error: f64,
}

/// l1 mass of the estimation error on and off the true support.
#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub nu_on_support_l1: f64,
    pub nu_off_support_l1: f64,
}

/// A fitted target parameter with diagnostics and optional truth metrics.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub support: Vec<usize>,
    pub lambda_used: f64,
    pub diagnostics: SolverDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preliminary: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ErrorMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeReport>,
}

impl EstimationResult {
    pub fn new(theta_hat: Array1<f64>, lambda_used: f64, diagnostics: SolverDiagnostics) -> Self {
        let support = (0..theta_hat.len())
            .filter(|&j| theta_hat[j].abs() > SUPPORT_EPS)
            .collect();
        EstimationResult {
            theta_hat: theta_hat.to_vec(),
            support,
            lambda_used,
            diagnostics,
            preliminary: None,
            metrics: None,
            cone: None,
        }
    }

    pub fn theta(&self) -> Array1<f64> {
        Array1::from_vec(self.theta_hat.clone())
    }

    /// Fills l1/l2 errors and the support/off-support error split.
    pub fn with_truth(mut self, theta0: &Array1<f64>) -> Self {
        let nu: Vec<f64> = self
            .theta_hat
            .iter()
            .zip(theta0.iter())
            .map(|(a, b)| a - b)
            .collect();
        let l1 = nu.iter().map(|v| v.abs()).sum();
        let l2 = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut on = 0.0;
        let mut off = 0.0;
        for (j, v) in nu.iter().enumerate() {
            if theta0[j].abs() > SUPPORT_EPS {
                on += v.abs();
            } else {
                off += v.abs();
            }
        }
        self.metrics = Some(ErrorMetrics { l1_error: l1, l2_error: l2 });
        self.cone = Some(ConeReport { nu_on_support_l1: on, nu_off_support_l1: off });
        self
    }
}

/// Solves one penalized problem and wraps the outcome.
pub fn solve_penalized(
    loss: &CompositeLoss,
    lambda: f64,
    set: &SearchSet,
    init: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<EstimationResult> {
    let (theta, diag) = prox_grad_minimize(loss, lambda, set, init, cfg)?;
    Ok(EstimationResult::new(theta, lambda, diag))
}

fn plan_with_estimated_rate(
    n_loss: usize,
    p: usize,
    inputs: &PlanInputs,
    nuisance: &NuisanceFit,
) -> Result<PenaltyPlan> {
    let mut inputs = inputs.clone();
    if inputs.g_n.is_none() {
        inputs.g_n = Some(nuisance.max_disagreement().unwrap_or(0.0));
    }
    make_penalty_plan(n_loss, p, &inputs)
}

/// Plug-in regularized extremum estimation: nuisances from the auxiliary
/// fold, penalized convex solve over the full space on the estimation fold.
pub fn algorithm1(
    data: &Dataset,
    app: Model,
    folds: &FoldPlan,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    if !app.monotone() {
        return Err(Error::Config(
            "moment is not monotone in the single index; use algorithm2".into(),
        ));
    }
    if folds.n_folds() != 2 {
        return Err(Error::Config("algorithm1 expects a 2-fold plan".into()));
    }
    let nuisance = build_nuisance_on_fold(data, app, folds, 1, &cfg.first_stage)?;
    let est_rows = folds.fold_indices(0);
    let est_data = data.select_rows(&est_rows);
    let est_nuisance = nuisance.restrict_rows(&est_rows)?;
    let loss = app.loss(&est_data, &est_nuisance, true)?;
    let p = app.target_dim(data)?;
    let plan = plan_with_estimated_rate(est_rows.len(), p, &cfg.plan, &nuisance)?;
    let lambda = cfg.lambda.resolve(app, est_rows.len(), p, &plan);
    solve_penalized(&loss, lambda, &SearchSet::FullSpace, &Array1::zeros(p), &cfg.solver)
}

/// Cross-fitted variant: each observation's nuisance values come from the
/// model trained on the other fold, and a single solve runs on the pooled
/// loss.
pub fn cross_fit_estimate(
    data: &Dataset,
    app: Model,
    folds: &FoldPlan,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    if !app.monotone() {
        return Err(Error::Config(
            "moment is not monotone in the single index; use algorithm2".into(),
        ));
    }
    let nuisance = build_nuisance(data, app, folds, &cfg.first_stage)?;
    let loss = app.loss(data, &nuisance, true)?;
    let p = app.target_dim(data)?;
    let plan = plan_with_estimated_rate(data.n_rows(), p, &cfg.plan, &nuisance)?;
    let lambda = cfg.lambda.resolve(app, data.n_rows(), p, &plan);
    solve_penalized(&loss, lambda, &SearchSet::FullSpace, &Array1::zeros(p), &cfg.solver)
}

/// Preliminary-step estimation for losses without a global convexity
/// guarantee: fold 1 fits nuisances, fold 2 solves inside the ball
/// `||theta||_1 <= R0`, fold 3 re-solves inside `||theta - prelim||_1 <= R1`.
pub fn algorithm2(data: &Dataset, app: Model, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    let folds = FoldPlan::with_replication(data.n_rows(), 3, cfg.seed, cfg.replication)?;
    let nuisance = build_nuisance_on_fold(data, app, &folds, 0, &cfg.first_stage)?;
    let p = app.target_dim(data)?;

    let pre_rows = folds.fold_indices(1);
    let fin_rows = folds.fold_indices(2);
    let plan = plan_with_estimated_rate(pre_rows.len(), p, &cfg.plan, &nuisance)?;
    if plan.r1 <= 0.0 {
        return Err(Error::Config(format!(
            "derived shrinking-ball radius R1 = {} is not positive",
            plan.r1
        )));
    }

    let (lambda_pre, lambda_fin) = match cfg.lambda {
        LambdaRule::Theorem => (plan.lambda_pre, plan.lambda_fin),
        rule => {
            let l = rule.resolve(app, pre_rows.len(), p, &plan);
            (l, l)
        }
    };

    let pre_data = data.select_rows(&pre_rows);
    let pre_nuisance = nuisance.restrict_rows(&pre_rows)?;
    let pre_loss = app.loss(&pre_data, &pre_nuisance, true)?;
    let pre_set = SearchSet::l1_ball(Array1::zeros(p), plan.r0);
    let prelim = solve_penalized(
        &pre_loss,
        lambda_pre,
        &pre_set,
        &Array1::zeros(p),
        &cfg.solver,
    )?;

    let fin_data = data.select_rows(&fin_rows);
    let fin_nuisance = nuisance.restrict_rows(&fin_rows)?;
    let fin_loss = app.loss(&fin_data, &fin_nuisance, true)?;
    let prelim_theta = prelim.theta();
    let fin_set = SearchSet::l1_ball(prelim_theta.clone(), plan.r1);
    let mut result = solve_penalized(&fin_loss, lambda_fin, &fin_set, &prelim_theta, &cfg.solver)?;
    result.preliminary = Some(prelim.theta_hat);
    Ok(result)
}
