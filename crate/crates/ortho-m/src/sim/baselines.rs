//! Comparison estimators run by the replication harness.
//!
//! Two-stage methods (naive and orthogonal) run cross-fitted by default,
//! matching the benchmark pipelines; `OrthoSplit` is the sample-split
//! plug-in variant. Oracle methods replace fitted nuisances with the
//! generator's truth. `Direct` is the one-stage joint lasso a practitioner
//! would reach for first.

use super::dgp::SimData;
use crate::apps::Model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{
    algorithm1, make_penalty_plan, solve_penalized, EstimationResult, EstimatorConfig,
};
use crate::first_stage::{build_nuisance, lasso_linear, lasso_logistic, FoldPlan, NuisanceFit};
use crate::rng::{stream, Role};
use crate::solver::SearchSet;
use ndarray::{Array1, Array2, Axis};

/// The comparison estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// One-stage joint l1-penalized regression.
    Direct,
    /// Two-stage without the bias correction (inverse-propensity scoring
    /// for missing data, plain two-stage logit for games), cross-fitted.
    Naive,
    /// Two-stage orthogonal loss, cross-fitted.
    Ortho,
    /// Two-stage orthogonal loss with a single auxiliary/estimation split.
    OrthoSplit,
    /// Naive two-stage with the true nuisance injected.
    OracleNaive,
    /// Orthogonal loss with the true nuisance injected.
    OracleOrtho,
}

impl Method {
    /// Report label; familiar per-model names for the naive and oracle
    /// two-stage variants.
    pub fn label(&self, model: Model) -> &'static str {
        match (self, model) {
            (Method::Direct, _) => "direct",
            (Method::Naive, Model::MissingData) => "ips",
            (Method::Naive, Model::Games) => "2slg",
            (Method::Naive, _) => "naive",
            (Method::Ortho, Model::Games) => "2sortho-lg",
            (Method::Ortho, _) => "ortho",
            (Method::OrthoSplit, _) => "ortho-split",
            (Method::OracleNaive, Model::MissingData) => "oracle-ips",
            (Method::OracleNaive, Model::Games) => "oracle-lg",
            (Method::OracleNaive, _) => "oracle-naive",
            (Method::OracleOrtho, _) => "oracle-ortho",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "direct" => Ok(Method::Direct),
            "naive" | "ips" | "2slg" => Ok(Method::Naive),
            "ortho" | "2sortho-lg" => Ok(Method::Ortho),
            "ortho-split" => Ok(Method::OrthoSplit),
            "oracle-naive" | "oracle-ips" | "oracle-lg" => Ok(Method::OracleNaive),
            "oracle-ortho" => Ok(Method::OracleOrtho),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }

    /// The method set benchmarked for each model.
    pub fn defaults(model: Model) -> Vec<Method> {
        match model {
            Model::PartiallyLinear => vec![Method::Direct, Method::OrthoSplit, Method::Ortho],
            Model::LogisticTe => vec![Method::Direct, Method::Ortho],
            Model::MissingData => vec![
                Method::Direct,
                Method::Naive,
                Method::Ortho,
                Method::OracleNaive,
                Method::OracleOrtho,
            ],
            Model::Games => vec![Method::OracleNaive, Method::Naive, Method::Ortho],
        }
    }

    fn supported(&self, model: Model) -> bool {
        match self {
            Method::Naive | Method::OracleNaive => {
                matches!(model, Model::MissingData | Model::Games)
            }
            _ => true,
        }
    }
}

/// Runs one estimator on one simulated dataset, attaching truth metrics.
pub fn run_method(
    sim: &SimData,
    model: Model,
    method: Method,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    if !method.supported(model) {
        return Err(Error::Config(format!(
            "method '{}' is not defined for model '{}'",
            method.label(model),
            model.id()
        )));
    }
    let result = match method {
        Method::Direct => match model {
            Model::Games => two_stage(sim, model, cfg, false)?,
            _ => direct(sim, model, cfg)?,
        },
        Method::Naive => two_stage(sim, model, cfg, false)?,
        Method::Ortho => two_stage(sim, model, cfg, true)?,
        Method::OrthoSplit => {
            let folds = FoldPlan::with_replication(sim.data.n_rows(), 2, cfg.seed, cfg.replication)?;
            algorithm1(&sim.data, model, &folds, cfg)?
        }
        Method::OracleNaive => oracle(sim, model, cfg, false)?,
        Method::OracleOrtho => oracle(sim, model, cfg, true)?,
    };
    Ok(result.with_truth(&sim.truth.theta0))
}

/// Cross-fitted two-stage pipeline with or without the bias correction.
fn two_stage(sim: &SimData, model: Model, cfg: &EstimatorConfig, corrected: bool) -> Result<EstimationResult> {
    let data = &sim.data;
    let folds = FoldPlan::with_replication(data.n_rows(), 2, cfg.seed, cfg.replication)?;
    let nuisance = build_nuisance(data, model, &folds, &cfg.first_stage)?;
    run_with_nuisance(data, model, &nuisance, cfg, corrected)
}

/// Injects the generator's true nuisance columns and solves on the full
/// sample.
fn oracle(sim: &SimData, model: Model, cfg: &EstimatorConfig, corrected: bool) -> Result<EstimationResult> {
    let truth = NuisanceFit::from_truth(sim.data.n_rows(), sim.truth.nuisance.clone())?;
    run_with_nuisance(&sim.data, model, &truth, cfg, corrected)
}

/// Assembles the model's loss at the given nuisance columns and solves the
/// penalized problem on the full sample (used for oracle and injected-
/// nuisance runs).
pub fn run_with_nuisance(
    data: &Dataset,
    model: Model,
    nuisance: &NuisanceFit,
    cfg: &EstimatorConfig,
    corrected: bool,
) -> Result<EstimationResult> {
    let loss = model.loss(data, nuisance, corrected)?;
    let p = model.target_dim(data)?;
    let mut inputs = cfg.plan.clone();
    if inputs.g_n.is_none() {
        inputs.g_n = Some(nuisance.max_disagreement().unwrap_or(0.0));
    }
    let plan = make_penalty_plan(data.n_rows(), p, &inputs)?;
    let lambda = cfg.lambda.resolve(model, data.n_rows(), p, &plan);
    solve_penalized(&loss, lambda, &SearchSet::FullSpace, &Array1::zeros(p), &cfg.solver)
}

/// One-stage joint lasso. The penalized block structure and the coordinates
/// holding the target differ per model.
fn direct(sim: &SimData, model: Model, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    let data = &sim.data;
    let p = model.target_dim(data)?;
    match model {
        Model::PartiallyLinear => {
            // y on [tau * x | u] with x = (1, u_1..u_{p-1}).
            let n = data.n_rows();
            let du = data.block_width("u");
            let u = data.block("u", du)?;
            let tau = data.column("tau")?;
            let y = data.column("y")?.to_owned();
            let mut design = Array2::<f64>::zeros((n, p + du));
            for i in 0..n {
                design[[i, 0]] = tau[i];
                for j in 1..p {
                    design[[i, j]] = tau[i] * u[[i, j - 1]];
                }
                for j in 0..du {
                    design[[i, p + j]] = u[[i, j]];
                }
            }
            let (coef, lambda) = direct_linear_fit(&design, &y, model, cfg)?;
            wrap_direct(coef.slice(ndarray::s![0..p]).to_owned(), lambda)
        }
        Model::MissingData => {
            // y on [x | x (x) u] over the observed rows only.
            let rows: Vec<usize> = {
                let d = data.column("d")?;
                (0..data.n_rows()).filter(|&i| d[i] == 1.0).collect()
            };
            let obs = data.select_rows(&rows);
            let n = obs.n_rows();
            let du = obs.block_width("u");
            let x = obs.block("x", p)?;
            let u = obs.block("u", du)?;
            let y = obs.column("y")?.to_owned();
            let mut design = Array2::<f64>::zeros((n, p + p * du));
            for i in 0..n {
                for j in 0..p {
                    design[[i, j]] = x[[i, j]];
                }
                let mut c = p;
                for j in 0..p {
                    for k in 0..du {
                        design[[i, c]] = x[[i, j]] * u[[i, k]];
                        c += 1;
                    }
                }
            }
            let (coef, lambda) = direct_linear_fit(&design, &y, model, cfg)?;
            wrap_direct(coef.slice(ndarray::s![0..p]).to_owned(), lambda)
        }
        Model::LogisticTe => {
            // logistic lasso of y on [tau * u | u].
            let n = data.n_rows();
            let u = data.block("u", p)?;
            let tau = data.column("tau")?;
            let y = data.column("y")?.to_owned();
            let mut design = Array2::<f64>::zeros((n, 2 * p));
            for i in 0..n {
                for j in 0..p {
                    design[[i, j]] = tau[i] * u[[i, j]];
                    design[[i, p + j]] = u[[i, j]];
                }
            }
            let plan = make_penalty_plan(n, 2 * p, &cfg.plan)?;
            let lambda = cfg.lambda.resolve(model, n, 2 * p, &plan);
            let coef = lasso_logistic(&design, &y, lambda, &cfg.solver)?;
            let theta = coef.slice(ndarray::s![0..p]).to_owned();
            let diag = synth_diagnostics(&theta);
            Ok(EstimationResult::new(theta, lambda, diag))
        }
        Model::Games => unreachable!("games direct delegates to the two-stage logit"),
    }
}

/// Linear direct fit under the half-squared-loss convention; optionally
/// selects the penalty by 5-fold cross-validation.
fn direct_linear_fit(
    design: &Array2<f64>,
    y: &Array1<f64>,
    model: Model,
    cfg: &EstimatorConfig,
) -> Result<(Array1<f64>, f64)> {
    let n = design.nrows();
    let d = design.ncols();
    let plan = make_penalty_plan(n, d, &cfg.plan)?;
    let base = cfg.lambda.resolve(model, n, d, &plan);
    let lambda = if cfg.direct_cv {
        cross_validated_lambda(design, y, base, cfg)?
    } else {
        base
    };
    // lasso_linear minimizes (1/n) sum; doubling the penalty matches the
    // (1/2n) convention of the orthogonal losses.
    let coef = lasso_linear(design, y, 2.0 * lambda, &cfg.solver)?;
    Ok((coef, lambda))
}

fn cross_validated_lambda(
    design: &Array2<f64>,
    y: &Array1<f64>,
    base: f64,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let n = design.nrows();
    let folds = 5usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(cfg.seed, 0, Role::Folds);
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut best = (f64::INFINITY, base);
    for mult in grid {
        let lambda = base * mult;
        let mut total = 0.0;
        for f in 0..folds {
            let val_rows: Vec<usize> =
                order.iter().copied().skip(f).step_by(folds).collect();
            let train_rows: Vec<usize> = order
                .iter()
                .copied()
                .enumerate()
                .filter(|(pos, _)| pos % folds != f)
                .map(|(_, i)| i)
                .collect();
            let xt = design.select(Axis(0), &train_rows);
            let yt = Array1::from_iter(train_rows.iter().map(|&i| y[i]));
            let coef = lasso_linear(&xt, &yt, 2.0 * lambda, &cfg.solver)?;
            for &i in &val_rows {
                let pred = design.row(i).dot(&coef);
                total += (y[i] - pred) * (y[i] - pred);
            }
        }
        if total < best.0 {
            best = (total, lambda);
        }
    }
    Ok(best.1)
}

fn wrap_direct(theta: Array1<f64>, lambda: f64) -> Result<EstimationResult> {
    let diag = synth_diagnostics(&theta);
    Ok(EstimationResult::new(theta, lambda, diag))
}

/// Direct fits report coefficients only; fill the solver fields neutrally.
fn synth_diagnostics(theta: &Array1<f64>) -> crate::solver::SolverDiagnostics {
    crate::solver::SolverDiagnostics {
        iterations: 0,
        converged: true,
        final_step: 0.0,
        final_objective: f64::NAN,
        init_projected: false,
        init: vec![0.0; theta.len()],
        objective_trace: vec![],
    }
}
