//! Nuisance estimation on auxiliary folds.
//!
//! Linear and logistic l1-penalized first stages, fold bookkeeping with a
//! structural cross-fitting guarantee, preliminary target estimates, and the
//! per-model recipes that assemble every nuisance role an application's loss
//! reads (conditional expectations, link slopes, propensities, opponent
//! beliefs, correction terms).

use crate::apps::{logistic, logistic_prime, Model, V_FLOOR};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::moment::CompositeLoss;
use crate::rng::{stream, Role};
use crate::solver::{prox_grad_minimize, SearchSet, SmoothObjective, SolverConfig, SolverDiagnostics};
use ndarray::{Array1, Array2, Axis};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Deterministic assignment of observations to folds. Fold sizes differ by
/// at most one.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    n_folds: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    /// Shuffles `0..n` with the fold stream of `seed` and deals indices
    /// round-robin into `n_folds` folds (2 for cross-fitting, 3 for the
    /// preliminary-step estimator).
    pub fn new(n: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
        FoldPlan::with_replication(n, n_folds, seed, 0)
    }

    /// Fold plan on the `(seed, replication)` fold stream.
    pub fn with_replication(n: usize, n_folds: usize, seed: u64, replication: u64) -> Result<FoldPlan> {
        if !(n_folds == 2 || n_folds == 3) {
            return Err(Error::Config(format!("fold count must be 2 or 3, got {n_folds}")));
        }
        if n < n_folds {
            return Err(Error::Config(format!("cannot split {n} rows into {n_folds} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = stream(seed, replication, Role::Folds);
        for i in (1..n).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            order.swap(i, j);
        }
        let mut assignment = vec![0usize; n];
        for (pos, &obs) in order.iter().enumerate() {
            assignment[obs] = pos % n_folds;
        }
        Ok(FoldPlan { n_folds, assignment, seed })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn n_obs(&self) -> usize {
        self.assignment.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// What a fitted nuisance column means to the downstream loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NuisanceRole {
    /// Conditional expectation of the base treatment given controls.
    CondTreatment,
    /// Conditional expectation of the outcome-side index offset.
    CondOutcome,
    /// Derivative of the link at the estimated index (a loss weight).
    LinkSlope,
    /// Conditional probability that the outcome is observed.
    Propensity,
    /// Opponent's conditional entry probability.
    OpponentBelief,
    /// Multiplier h(z) of the residual in the bias-correction term.
    CorrectionH,
}

impl NuisanceRole {
    pub fn tag(&self) -> &'static str {
        match self {
            NuisanceRole::CondTreatment => "h",
            NuisanceRole::CondOutcome => "q",
            NuisanceRole::LinkSlope => "v",
            NuisanceRole::Propensity => "p",
            NuisanceRole::OpponentBelief => "g",
            NuisanceRole::CorrectionH => "corr_h",
        }
    }
}

/// How a nuisance fit was produced, which determines for which rows its
/// values are out-of-sample.
#[derive(Debug, Clone)]
pub enum Provenance {
    /// Values injected from known truth (oracle runs).
    Truth,
    /// Each observation predicted by the model trained on the other fold(s).
    CrossFit { plan: FoldPlan },
    /// One model trained on a single fold; that fold's own rows are
    /// in-sample and must not feed a second-stage loss.
    SingleFold { plan: FoldPlan, train_fold: usize },
    /// Row subset of another fit, restricted to validated out-of-sample rows.
    Subset,
}

/// Fold-wise per-observation evaluations of the estimated nuisance
/// functions, keyed by role.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    n: usize,
    columns: BTreeMap<NuisanceRole, Array1<f64>>,
    provenance: Provenance,
    /// Root-mean-square disagreement between fold models per role, over the
    /// full sample. Empty for truth-injected or single-fold fits.
    disagreement: BTreeMap<NuisanceRole, f64>,
}

impl NuisanceFit {
    pub fn from_truth(n: usize, columns: BTreeMap<NuisanceRole, Array1<f64>>) -> Result<Self> {
        for (role, col) in &columns {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "truth column '{}' has {} rows, expected {n}",
                    role.tag(),
                    col.len()
                )));
            }
        }
        Ok(NuisanceFit { n, columns, provenance: Provenance::Truth, disagreement: BTreeMap::new() })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn has(&self, role: NuisanceRole) -> bool {
        self.columns.contains_key(&role)
    }

    pub fn column(&self, role: NuisanceRole) -> Result<&Array1<f64>> {
        self.columns.get(&role).ok_or_else(|| Error::MissingNuisance {
            row: 0,
            what: format!("role '{}' absent from nuisance fit", role.tag()),
        })
    }

    pub fn roles(&self) -> Vec<NuisanceRole> {
        self.columns.keys().copied().collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Replaces one role's column (used to build deliberately perturbed or
    /// naive variants); provenance is preserved.
    pub fn with_column(mut self, role: NuisanceRole, col: Array1<f64>) -> Result<Self> {
        if col.len() != self.n {
            return Err(Error::Data(format!(
                "replacement column '{}' has {} rows, expected {}",
                role.tag(),
                col.len(),
                self.n
            )));
        }
        self.columns.insert(role, col);
        Ok(self)
    }

    pub fn check_rows(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::MissingNuisance {
                row: self.n.min(n),
                what: format!("nuisance fit covers {} rows, dataset has {n}", self.n),
            });
        }
        Ok(())
    }

    /// True when observation `i`'s nuisance values come from a model whose
    /// training sample excluded `i`.
    pub fn out_of_sample(&self, i: usize) -> bool {
        match &self.provenance {
            Provenance::Truth | Provenance::CrossFit { .. } | Provenance::Subset => true,
            Provenance::SingleFold { plan, train_fold } => plan.fold_of(i) != *train_fold,
        }
    }

    /// Restricts the fit to `rows`. Every selected row must be out-of-sample
    /// so the resulting columns can feed a second-stage loss.
    pub fn restrict_rows(&self, rows: &[usize]) -> Result<NuisanceFit> {
        if let Some(&bad) = rows.iter().find(|&&i| !self.out_of_sample(i)) {
            return Err(Error::Config(format!(
                "observation {bad} was in the nuisance training fold and cannot enter the loss"
            )));
        }
        let mut columns = BTreeMap::new();
        for (&role, col) in &self.columns {
            columns.insert(role, Array1::from_iter(rows.iter().map(|&i| col[i])));
        }
        Ok(NuisanceFit {
            n: rows.len(),
            columns,
            provenance: Provenance::Subset,
            disagreement: self.disagreement.clone(),
        })
    }

    /// Largest per-role fold disagreement, used as a data-driven stand-in
    /// for the first-stage rate when none is supplied.
    pub fn max_disagreement(&self) -> Option<f64> {
        self.disagreement.values().copied().fold(None, |acc, v| {
            Some(match acc {
                None => v,
                Some(a) => a.max(v),
            })
        })
    }
}

/// First-stage penalty rule.
#[derive(Debug, Clone, Copy)]
pub enum FsLambdaRule {
    /// `sqrt(ln(d) / n)` with the feature count `d` (the level used in the
    /// benchmark experiments).
    Caption,
    /// The finite-sample bound with explicit constants: linear regressions
    /// use `2 (B^2 + sigma) sqrt(ln(2 d / delta) / n)`, logistic ones
    /// `2 (B^2/4 + B/4) sqrt(ln(2 d / delta) / n)`.
    Theorem { delta: f64, b_bar: f64, sigma_bar: f64 },
    Manual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    Linear,
    Logistic,
}

/// The quoted lower bound on the first-stage penalty for a given family.
pub fn first_stage_lambda(
    n: usize,
    d: usize,
    delta: f64,
    b_bar: f64,
    sigma_bar: f64,
    family: GlmFamily,
) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1), got {delta}")));
    }
    let tail = ((2.0 * d as f64 / delta).ln() / n as f64).sqrt();
    let coeff = match family {
        GlmFamily::Linear => 2.0 * (b_bar * b_bar + sigma_bar),
        GlmFamily::Logistic => 2.0 * (b_bar * b_bar / 4.0 + b_bar / 4.0),
    };
    Ok(coeff * tail)
}

impl FsLambdaRule {
    pub fn resolve(&self, n: usize, d: usize, family: GlmFamily) -> Result<f64> {
        match *self {
            FsLambdaRule::Caption => Ok(((d.max(2) as f64).ln() / n as f64).sqrt()),
            FsLambdaRule::Theorem { delta, b_bar, sigma_bar } => {
                first_stage_lambda(n, d, delta, b_bar, sigma_bar, family)
            }
            FsLambdaRule::Manual(v) => {
                if v < 0.0 {
                    return Err(Error::InvalidArgument(format!("manual lambda must be >= 0, got {v}")));
                }
                Ok(v)
            }
        }
    }
}

/// Settings shared by all first-stage fits.
#[derive(Debug, Clone)]
pub struct FirstStageConfig {
    pub lambda: FsLambdaRule,
    pub solver: SolverConfig,
    /// Lower clip for fitted link slopes used as divisors.
    pub v_floor: f64,
    /// Clip range for fitted propensities.
    pub propensity_clip: (f64, f64),
}

impl Default for FirstStageConfig {
    fn default() -> Self {
        let mut solver = SolverConfig::default();
        solver.tol = 1e-9;
        FirstStageConfig {
            lambda: FsLambdaRule::Caption,
            solver,
            v_floor: V_FLOOR,
            propensity_clip: (0.01, 0.99),
        }
    }
}

struct LeastSquares<'a> {
    x: &'a Array2<f64>,
    y: &'a Array1<f64>,
}

impl SmoothObjective for LeastSquares<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }
    fn value(&self, alpha: &Array1<f64>) -> f64 {
        let r = self.x.dot(alpha) - self.y;
        r.dot(&r) / self.y.len() as f64
    }
    fn gradient(&self, alpha: &Array1<f64>) -> Array1<f64> {
        let r = self.x.dot(alpha) - self.y;
        self.x.t().dot(&r) * (2.0 / self.y.len() as f64)
    }
}

struct LogisticNll<'a> {
    x: &'a Array2<f64>,
    v: &'a Array1<f64>,
}

impl SmoothObjective for LogisticNll<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }
    fn value(&self, alpha: &Array1<f64>) -> f64 {
        let s = self.x.dot(alpha);
        let mut total = 0.0;
        for (si, vi) in s.iter().zip(self.v.iter()) {
            let softplus = if *si > 30.0 { *si } else { (1.0 + si.exp()).ln() };
            total += softplus - vi * si;
        }
        total / self.v.len() as f64
    }
    fn gradient(&self, alpha: &Array1<f64>) -> Array1<f64> {
        let s = self.x.dot(alpha);
        let r = Array1::from_iter(s.iter().zip(self.v.iter()).map(|(si, vi)| logistic(*si) - vi));
        self.x.t().dot(&r) / self.v.len() as f64
    }
}

/// Minimizer of `(1/n) sum (y_i - x_i' alpha)^2 + lambda ||alpha||_1`.
pub fn lasso_linear(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<Array1<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.nrows() != y.len() {
        return Err(Error::Data(format!("design has {} rows, response {}", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression inputs".into()));
    }
    let obj = LeastSquares { x, y };
    let init = Array1::zeros(x.ncols());
    let (alpha, _) = prox_grad_minimize(&obj, lambda, &SearchSet::FullSpace, &init, cfg)?;
    Ok(alpha)
}

/// Minimizer of the penalized logistic negative log-likelihood
/// `(1/n) sum [-v_i log L(x_i' a) - (1 - v_i) log(1 - L(x_i' a))] + lambda ||a||_1`.
pub fn lasso_logistic(
    x: &Array2<f64>,
    v: &Array1<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<Array1<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.nrows() != v.len() {
        return Err(Error::Data(format!("design has {} rows, response {}", x.nrows(), v.len())));
    }
    if v.iter().any(|&b| b != 0.0 && b != 1.0) {
        return Err(Error::Data("logistic response must be binary 0/1".into()));
    }
    if x.iter().any(|val| !val.is_finite()) {
        return Err(Error::Data("non-finite value in design matrix".into()));
    }
    let obj = LogisticNll { x, v };
    let init = Array1::zeros(x.ncols());
    let (alpha, _) = prox_grad_minimize(&obj, lambda, &SearchSet::FullSpace, &init, cfg)?;
    Ok(alpha)
}

/// Max KKT violation of a linear-lasso solution: `|grad_j| - lambda` on the
/// inactive set and `|grad_j + lambda sign(alpha_j)|` on the active set,
/// where grad is the gradient of `(1/n) sum (y - x'a)^2`.
pub fn lasso_kkt_gap(x: &Array2<f64>, y: &Array1<f64>, alpha: &Array1<f64>, lambda: f64) -> f64 {
    let r = x.dot(alpha) - y;
    let grad = x.t().dot(&r) * (2.0 / y.len() as f64);
    let mut gap: f64 = 0.0;
    for j in 0..alpha.len() {
        if alpha[j] == 0.0 {
            gap = gap.max(grad[j].abs() - lambda);
        } else {
            gap = gap.max((grad[j] + lambda * alpha[j].signum()).abs());
        }
    }
    gap.max(0.0)
}

/// A centered (and optionally weighted / standardized) linear lasso fit.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub alpha: Array1<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.alpha) + self.intercept
    }
}

/// Linear lasso with an unpenalized intercept (via centering), optional row
/// weights, and optional column standardization. The penalty applies on the
/// standardized scale when standardization is on.
pub fn lasso_linear_centered(
    x: &Array2<f64>,
    y: &Array1<f64>,
    weights: Option<&Array1<f64>>,
    standardize: bool,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<LinearFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Data("empty regression sample".into()));
    }
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Data("weight vector length mismatch".into()));
            }
            if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
                return Err(Error::Data("weights must be positive and finite".into()));
            }
            w.clone()
        }
        None => Array1::ones(n),
    };
    let wsum = w.sum();
    let d = x.ncols();

    let mut xbar = Array1::<f64>::zeros(d);
    for j in 0..d {
        xbar[j] = x.column(j).dot(&w) / wsum;
    }
    let ybar = y.dot(&w) / wsum;

    let sqrt_w = w.mapv(f64::sqrt);
    let mut xc = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            xc[[i, j]] = (x[[i, j]] - xbar[j]) * sqrt_w[i];
        }
    }
    let yc = Array1::from_iter((0..n).map(|i| (y[i] - ybar) * sqrt_w[i]));

    let mut scale = Array1::<f64>::ones(d);
    if standardize {
        for j in 0..d {
            let ss = xc.column(j).dot(&xc.column(j)) / n as f64;
            let sd = ss.sqrt();
            if sd > 1e-12 {
                scale[j] = sd;
                let mut col = xc.column_mut(j);
                col.mapv_inplace(|v| v / sd);
            }
        }
    }

    let mut alpha = lasso_linear(&xc, &yc, lambda, cfg)?;
    for j in 0..d {
        alpha[j] /= scale[j];
    }
    let intercept = ybar - xbar.dot(&alpha);
    Ok(LinearFit { alpha, intercept })
}

/// Runs the aggressive-penalty preliminary solve of an uncorrected,
/// monotone loss over the full space from the zero vector.
pub fn preliminary_theta(
    loss: &CompositeLoss,
    lambda_fs: f64,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolverDiagnostics)> {
    if loss.is_corrected() {
        return Err(Error::Config(
            "preliminary estimation expects the uncorrected loss".into(),
        ));
    }
    if !loss.monotone_in_t() {
        return Err(Error::Config(
            "preliminary estimation requires a moment that is monotone in the single index".into(),
        ));
    }
    let init = Array1::zeros(loss.dim() as usize);
    prox_grad_minimize(loss, lambda_fs, &SearchSet::FullSpace, &init, cfg)
}

/// Polynomial feature map for conditional-mean regressions on z = (x, u):
/// columns are [x, u, x (x) u, x (x) u^2, u^2], which contains the
/// functional class of the missing-data benchmark generator.
pub fn missing_data_features(x: &Array2<f64>, u: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let du = u.ncols();
    let dim = p + du + p * du + p * du + du;
    let mut out = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        let mut c = 0;
        for j in 0..p {
            out[[i, c]] = x[[i, j]];
            c += 1;
        }
        for k in 0..du {
            out[[i, c]] = u[[i, k]];
            c += 1;
        }
        for j in 0..p {
            for k in 0..du {
                out[[i, c]] = x[[i, j]] * u[[i, k]];
                c += 1;
            }
        }
        for j in 0..p {
            for k in 0..du {
                out[[i, c]] = x[[i, j]] * u[[i, k]] * u[[i, k]];
                c += 1;
            }
        }
        for k in 0..du {
            out[[i, c]] = u[[i, k]] * u[[i, k]];
            c += 1;
        }
    }
    out
}

/// Cross-fitted nuisance estimation: for each fold, every role is fitted on
/// the complement and evaluated on the fold, so no observation's value comes
/// from a model that saw it.
pub fn build_nuisance(
    data: &Dataset,
    app: Model,
    folds: &FoldPlan,
    cfg: &FirstStageConfig,
) -> Result<NuisanceFit> {
    check_fold_sizes(data, app, folds)?;
    let n = data.n_rows();
    let mut columns: BTreeMap<NuisanceRole, Array1<f64>> = BTreeMap::new();
    let mut per_fold: Vec<BTreeMap<NuisanceRole, Array1<f64>>> = Vec::new();
    for fold in 0..folds.n_folds() {
        let train = folds.complement_indices(fold);
        let preds = fit_fold(data, app, &train, cfg)?;
        for (&role, values) in &preds {
            let col = columns.entry(role).or_insert_with(|| Array1::zeros(n));
            for &i in &folds.fold_indices(fold) {
                col[i] = values[i];
            }
        }
        per_fold.push(preds);
    }
    let mut disagreement = BTreeMap::new();
    for role in columns.keys() {
        let mut worst: f64 = 0.0;
        for a in 0..per_fold.len() {
            for b in (a + 1)..per_fold.len() {
                let diff = &per_fold[a][role] - &per_fold[b][role];
                let rms = (diff.dot(&diff) / n as f64).sqrt();
                worst = worst.max(rms);
            }
        }
        disagreement.insert(*role, worst);
    }
    Ok(NuisanceFit {
        n,
        columns,
        provenance: Provenance::CrossFit { plan: folds.clone() },
        disagreement,
    })
}

/// Nuisance estimation on a single designated fold, evaluated everywhere.
/// Rows of the training fold are in-sample and flagged as such.
pub fn build_nuisance_on_fold(
    data: &Dataset,
    app: Model,
    folds: &FoldPlan,
    train_fold: usize,
    cfg: &FirstStageConfig,
) -> Result<NuisanceFit> {
    if train_fold >= folds.n_folds() {
        return Err(Error::Config(format!(
            "train fold {train_fold} out of range for {} folds",
            folds.n_folds()
        )));
    }
    check_fold_sizes(data, app, folds)?;
    let train = folds.fold_indices(train_fold);
    let columns = fit_fold(data, app, &train, cfg)?;
    // Rate proxy: refit on the two halves of the training fold and record
    // the per-role RMS disagreement of their predictions. Half-sized fits
    // overstate the full fit's error, which errs on the generous side when
    // the disagreement feeds a penalty rule.
    let (half_a, half_b): (Vec<usize>, Vec<usize>) = train
        .iter()
        .enumerate()
        .fold((Vec::new(), Vec::new()), |(mut a, mut b), (pos, &i)| {
            if pos % 2 == 0 {
                a.push(i);
            } else {
                b.push(i);
            }
            (a, b)
        });
    let mut disagreement = BTreeMap::new();
    if let (Ok(ca), Ok(cb)) = (fit_fold(data, app, &half_a, cfg), fit_fold(data, app, &half_b, cfg)) {
        for (role, col_a) in &ca {
            if let Some(col_b) = cb.get(role) {
                let diff = col_a - col_b;
                let rms = (diff.dot(&diff) / data.n_rows() as f64).sqrt();
                disagreement.insert(*role, rms);
            }
        }
    }
    Ok(NuisanceFit {
        n: data.n_rows(),
        columns,
        provenance: Provenance::SingleFold { plan: folds.clone(), train_fold },
        disagreement,
    })
}

fn check_fold_sizes(data: &Dataset, app: Model, folds: &FoldPlan) -> Result<()> {
    if folds.n_obs() != data.n_rows() {
        return Err(Error::Config(format!(
            "fold plan covers {} rows, dataset has {}",
            folds.n_obs(),
            data.n_rows()
        )));
    }
    // d nuisance functions need at least 10 d rows per fold to fit anything.
    let d = app.required_roles(true).len();
    let min_fold = (0..folds.n_folds()).map(|f| folds.fold_indices(f).len()).min().unwrap();
    if min_fold < 10 * d {
        return Err(Error::Config(format!(
            "fold of size {min_fold} is too small for {d} nuisance functions (need >= {})",
            10 * d
        )));
    }
    Ok(())
}

/// Fits every role of `app` on the rows `train` and returns full-sample
/// predictions per role.
fn fit_fold(
    data: &Dataset,
    app: Model,
    train: &[usize],
    cfg: &FirstStageConfig,
) -> Result<BTreeMap<NuisanceRole, Array1<f64>>> {
    match app {
        Model::PartiallyLinear => fit_fold_plr(data, train, cfg),
        Model::LogisticTe => fit_fold_logistic_te(data, train, cfg),
        Model::MissingData => fit_fold_missing(data, train, cfg),
        Model::Games => fit_fold_games(data, train, cfg),
    }
}

fn take_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

fn take_vec(v: &Array1<f64>, rows: &[usize]) -> Array1<f64> {
    Array1::from_iter(rows.iter().map(|&i| v[i]))
}

fn fit_fold_plr(
    data: &Dataset,
    train: &[usize],
    cfg: &FirstStageConfig,
) -> Result<BTreeMap<NuisanceRole, Array1<f64>>> {
    let du = data.block_width("u");
    let p = du; // x = (1, u_1..u_{p-1})
    let n = data.n_rows();
    let u = data.block("u", du)?;
    let tau = data.column("tau")?;
    let y = data.column("y")?;
    let u_tr = take_rows(&u, train);
    let lambda = cfg.lambda.resolve(train.len(), du, GlmFamily::Linear)?;

    // h(u) = E[tau | u] via linear lasso.
    let h_fit = lasso_linear_centered(&u_tr, &take_vec(tau, train), None, false, lambda, &cfg.solver)?;
    let h_full = h_fit.predict(&u);

    // q(u) = E[y | u] = h(u) x(u)'theta + f(u) is quadratic in u, so a
    // linear regression of y on u cannot represent it. Build it plug-in
    // style instead: preliminary (theta, f-coefficients) from the joint
    // direct lasso of y on [tau x | u], then q = h x'theta + u'alpha.
    let mut design = Array2::<f64>::zeros((train.len(), p + du));
    for (r, &i) in train.iter().enumerate() {
        design[[r, 0]] = tau[i];
        for j in 1..p {
            design[[r, j]] = tau[i] * u[[i, j - 1]];
        }
        for j in 0..du {
            design[[r, p + j]] = u[[i, j]];
        }
    }
    let lam_joint = cfg.lambda.resolve(train.len(), p + du, GlmFamily::Linear)?;
    let coef = lasso_linear(&design, &take_vec(y, train), 2.0 * lam_joint, &cfg.solver)?;
    let theta_pre = coef.slice(ndarray::s![0..p]).to_owned();
    let alpha_pre = coef.slice(ndarray::s![p..p + du]).to_owned();

    let mut q_full = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut x_theta = theta_pre[0];
        for j in 1..p {
            x_theta += theta_pre[j] * u[[i, j - 1]];
        }
        let mut u_alpha = 0.0;
        for j in 0..du {
            u_alpha += alpha_pre[j] * u[[i, j]];
        }
        q_full[i] = h_full[i] * x_theta + u_alpha;
    }

    let mut out = BTreeMap::new();
    out.insert(NuisanceRole::CondTreatment, h_full);
    out.insert(NuisanceRole::CondOutcome, q_full);
    Ok(out)
}

fn fit_fold_logistic_te(
    data: &Dataset,
    train: &[usize],
    cfg: &FirstStageConfig,
) -> Result<BTreeMap<NuisanceRole, Array1<f64>>> {
    let p = data.block_width("u");
    let n = data.n_rows();
    let u = data.block("u", p)?;
    let tau = data.column("tau")?;
    let y = data.column("y")?;

    // pi(u) = E[tau | u] via linear lasso.
    let u_tr = take_rows(&u, train);
    let lam_lin = cfg.lambda.resolve(train.len(), p, GlmFamily::Linear)?;
    let pi_fit = lasso_linear_centered(&u_tr, &take_vec(tau, train), None, false, lam_lin, &cfg.solver)?;
    let pi_full = pi_fit.predict(&u);

    // Preliminary (theta, alpha) from a logistic lasso of y on [tau*u | u].
    let mut design = Array2::<f64>::zeros((train.len(), 2 * p));
    for (r, &i) in train.iter().enumerate() {
        for j in 0..p {
            design[[r, j]] = tau[i] * u[[i, j]];
            design[[r, p + j]] = u[[i, j]];
        }
    }
    let lam_log = cfg.lambda.resolve(train.len(), 2 * p, GlmFamily::Logistic)?;
    let coef = lasso_logistic(&design, &take_vec(y, train), lam_log, &cfg.solver)?;
    let theta_pre = coef.slice(ndarray::s![0..p]).to_owned();
    let alpha_pre = coef.slice(ndarray::s![p..2 * p]).to_owned();

    // q(u) = pi(u) u'theta + u'alpha ; V(z) = L'(tau u'theta + u'alpha).
    let u_theta = u.dot(&theta_pre);
    let u_alpha = u.dot(&alpha_pre);
    let mut q_full = Array1::<f64>::zeros(n);
    let mut v_full = Array1::<f64>::zeros(n);
    for i in 0..n {
        q_full[i] = pi_full[i] * u_theta[i] + u_alpha[i];
        v_full[i] = logistic_prime(tau[i] * u_theta[i] + u_alpha[i]).max(cfg.v_floor);
    }

    let mut out = BTreeMap::new();
    out.insert(NuisanceRole::CondTreatment, pi_full);
    out.insert(NuisanceRole::CondOutcome, q_full);
    out.insert(NuisanceRole::LinkSlope, v_full);
    Ok(out)
}

fn fit_fold_missing(
    data: &Dataset,
    train: &[usize],
    cfg: &FirstStageConfig,
) -> Result<BTreeMap<NuisanceRole, Array1<f64>>> {
    let p = data.block_width("x");
    let du = data.block_width("u");
    let x = data.block("x", p)?;
    let u = data.block("u", du)?;
    let y = data.column("y")?;
    let d = data.column("d")?;
    let n = data.n_rows();

    // Propensity via logistic lasso of d on (x, u), clipped.
    let mut z = Array2::<f64>::zeros((n, p + du));
    for i in 0..n {
        for j in 0..p {
            z[[i, j]] = x[[i, j]];
        }
        for k in 0..du {
            z[[i, p + k]] = u[[i, k]];
        }
    }
    let z_tr = take_rows(&z, train);
    let lam_log = cfg.lambda.resolve(train.len(), p + du, GlmFamily::Logistic)?;
    let prop_coef = lasso_logistic(&z_tr, &take_vec(d, train), lam_log, &cfg.solver)?;
    let (lo, hi) = cfg.propensity_clip;
    let p_full = z.dot(&prop_coef).mapv(|s| logistic(s).clamp(lo, hi));

    // Preliminary theta from the uncorrected inverse-propensity loss on the
    // training rows, using the in-sample propensity.
    let x_tr = take_rows(&x, train);
    let y_tr = take_vec(y, train);
    let d_tr = take_vec(d, train);
    let p_tr = take_vec(&p_full, train);
    let moment = crate::apps::missing_data_moment(
        Arc::new(y_tr.to_vec()),
        Arc::new(d_tr.to_vec()),
        Arc::new(p_tr.to_vec()),
    );
    let ips_loss = CompositeLoss::uncorrected(moment, x_tr.clone())?;
    let lam_fs = cfg.lambda.resolve(train.len(), p, GlmFamily::Linear)?;
    let (theta_pre, _) = preliminary_theta(&ips_loss, lam_fs, &cfg.solver)?;

    // h_reg(z) ~ E[x'theta - y | z] from the observed rows, weighted by the
    // inverse propensity so the regression targets the full population.
    let features = missing_data_features(&x, &u);
    let observed: Vec<usize> = train.iter().copied().filter(|&i| d[i] == 1.0).collect();
    if observed.len() < 10 {
        return Err(Error::Config(format!(
            "only {} observed outcomes in training fold; cannot fit the correction regression",
            observed.len()
        )));
    }
    let f_obs = take_rows(&features, &observed);
    let target = Array1::from_iter(observed.iter().map(|&i| x.row(i).dot(&theta_pre) - y[i]));
    let weights = Array1::from_iter(observed.iter().map(|&i| 1.0 / p_full[i]));
    let lam_h = cfg.lambda.resolve(observed.len(), features.ncols(), GlmFamily::Linear)?;
    let h_fit = lasso_linear_centered(&f_obs, &target, Some(&weights), true, lam_h, &cfg.solver)?;
    let h_reg_full = h_fit.predict(&features);

    // Correction multiplier: h(z) = E[grad_gamma m | z] = -E[u(y, x'theta)|z] / p(z).
    let corr = Array1::from_iter((0..n).map(|i| -h_reg_full[i] / p_full[i]));

    let mut out = BTreeMap::new();
    out.insert(NuisanceRole::Propensity, p_full);
    out.insert(NuisanceRole::CorrectionH, corr);
    Ok(out)
}

fn fit_fold_games(
    data: &Dataset,
    train: &[usize],
    cfg: &FirstStageConfig,
) -> Result<BTreeMap<NuisanceRole, Array1<f64>>> {
    let pm1 = data.block_width("x");
    let x = data.block("x", pm1)?;
    let y = data.column("y")?;
    let v = data.column("v")?;
    let n = data.n_rows();

    // Opponent belief g(z) = E[v | x]. Under equilibrium play the logit of
    // each player's entry probability is linear in (x, opponent belief), so
    // a plain logistic-linear fit of v on x is misspecified whenever the
    // opponent reacts. Two rounds fix that: first approximate this player's
    // own entry probability from x alone, then refit the opponent belief on
    // (x, own-entry). When the opponent ignores this player the second
    // round's extra coefficient simply shrinks to zero.
    let x_tr = take_rows(&x, train);
    let lam_g = cfg.lambda.resolve(train.len(), pm1, GlmFamily::Logistic)?;
    let own_coef = lasso_logistic(&x_tr, &take_vec(y, train), lam_g, &cfg.solver)?;
    let own_full = x.dot(&own_coef).mapv(logistic);

    let mut design_g = Array2::<f64>::zeros((train.len(), pm1 + 1));
    for (r, &i) in train.iter().enumerate() {
        for j in 0..pm1 {
            design_g[[r, j]] = x[[i, j]];
        }
        design_g[[r, pm1]] = own_full[i];
    }
    let lam_g2 = cfg.lambda.resolve(train.len(), pm1 + 1, GlmFamily::Logistic)?;
    let g_coef = lasso_logistic(&design_g, &take_vec(v, train), lam_g2, &cfg.solver)?;
    let g_full = {
        let mut idx = x.dot(&g_coef.slice(ndarray::s![0..pm1]).to_owned());
        for i in 0..n {
            idx[i] += own_full[i] * g_coef[pm1];
        }
        idx.mapv(logistic)
    };

    // Preliminary theta: two-stage logistic lasso of y on (x, g).
    let mut design = Array2::<f64>::zeros((train.len(), pm1 + 1));
    for (r, &i) in train.iter().enumerate() {
        for j in 0..pm1 {
            design[[r, j]] = x[[i, j]];
        }
        design[[r, pm1]] = g_full[i];
    }
    let lam_pre = cfg.lambda.resolve(train.len(), pm1 + 1, GlmFamily::Logistic)?;
    let mut theta_pre = lasso_logistic(&design, &take_vec(y, train), lam_pre, &cfg.solver)?;

    let h_from = |theta: &Array1<f64>| -> Array1<f64> {
        let delta = theta[pm1];
        let mut h = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut idx = 0.0;
            for j in 0..pm1 {
                idx += x[[i, j]] * theta[j];
            }
            idx += g_full[i] * delta;
            h[i] = delta * logistic_prime(idx);
        }
        h
    };

    // One orthogonal refinement of the preliminary estimate, still inside
    // the training fold: re-solve with the correction built from the first
    // pass, then recompute h(z) = Delta L'(Lambda' theta) at the update.
    let h_pre = h_from(&theta_pre);
    let y_tr = Arc::new(take_vec(y, train).to_vec());
    let v_tr = take_vec(v, train);
    let g_tr = take_vec(&g_full, train);
    let h_tr = take_vec(&h_pre, train);
    let moment = crate::apps::binary_choice_moment(y_tr);
    let correction = crate::moment::OrthogonalCorrection::conditional_expectation(
        Arc::new(move |i| h_tr[i]),
        Arc::new(move |i| v_tr[i] - g_tr[i]),
    );
    if let Ok(loss) = CompositeLoss::orthogonalized(moment, design, &correction) {
        if let Ok((refined, _)) =
            prox_grad_minimize(&loss, lam_pre, &SearchSet::FullSpace, &theta_pre, &cfg.solver)
        {
            theta_pre = refined;
        }
    }
    let h_full = h_from(&theta_pre);

    let mut out = BTreeMap::new();
    out.insert(NuisanceRole::OpponentBelief, g_full);
    out.insert(NuisanceRole::CorrectionH, h_full);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::soft_threshold;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn fold_plan_partitions_evenly() {
        for n in [7usize, 8, 100] {
            for k in [2usize, 3] {
                let plan = FoldPlan::new(n, k, 42).unwrap();
                let sizes: Vec<usize> = (0..k).map(|f| plan.fold_indices(f).len()).collect();
                assert_eq!(sizes.iter().sum::<usize>(), n);
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                assert!(hi - lo <= 1, "uneven folds: {sizes:?}");
            }
        }
    }

    #[test]
    fn fold_plan_is_deterministic_in_seed() {
        let a = FoldPlan::new(50, 2, 9).unwrap();
        let b = FoldPlan::new(50, 2, 9).unwrap();
        let c = FoldPlan::new(50, 2, 10).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_ne!(a.assignment, c.assignment);
    }

    #[test]
    fn lambda_rule_linear_hand_value() {
        // 2 (1 + 1) sqrt(ln(2*10/0.05) / 100) = 4 sqrt(ln(400)/100)
        let lam = first_stage_lambda(100, 10, 0.05, 1.0, 1.0, GlmFamily::Linear).unwrap();
        assert_abs_diff_eq!(lam, 4.0 * (400.0f64.ln() / 100.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(lam, 0.9790987, epsilon = 1e-6);
    }

    #[test]
    fn lambda_rule_logistic_coefficient_is_one_at_unit_bound() {
        // B = 1: 2 (1/4 + 1/4) = 1, so lambda = sqrt(ln(2d/delta)/n).
        let lam = first_stage_lambda(500, 25, 0.1, 1.0, 0.0, GlmFamily::Logistic).unwrap();
        assert_abs_diff_eq!(lam, ((2.0 * 25.0 / 0.1f64).ln() / 500.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn lambda_decreases_as_delta_grows() {
        let mut last = f64::INFINITY;
        for delta in [0.01, 0.05, 0.1, 0.5, 0.9] {
            let lam = first_stage_lambda(100, 10, delta, 1.0, 1.0, GlmFamily::Linear).unwrap();
            assert!(lam < last);
            last = lam;
        }
    }

    fn orthonormal_design(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream(seed, 0, Role::Probe);
        let mut cols: Vec<Array1<f64>> = Vec::new();
        while cols.len() < d {
            let mut v = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0..1.0f64)));
            for q in &cols {
                let proj = v.dot(q);
                v = &v - &(q * proj);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                cols.push(v / norm);
            }
        }
        let mut x = Array2::zeros((n, d));
        for (j, c) in cols.iter().enumerate() {
            x.column_mut(j).assign(&(c * (n as f64).sqrt()));
        }
        x
    }

    #[test]
    fn lasso_linear_orthonormal_design_matches_soft_thresholded_ols() {
        // Objective (1/n) sum (...)^2 has soft threshold at lambda/2.
        let n = 80;
        let d = 6;
        let x = orthonormal_design(n, d, 51);
        let mut rng = stream(52, 0, Role::Probe);
        let y = Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0f64)));
        let ols = x.t().dot(&y) / n as f64;
        let lambda = 0.4;
        let mut cfg = SolverConfig::default();
        cfg.tol = 1e-14;
        let alpha = lasso_linear(&x, &y, lambda, &cfg).unwrap();
        let expected = soft_threshold(&ols, lambda / 2.0).unwrap();
        for j in 0..d {
            assert_abs_diff_eq!(alpha[j], expected[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn lasso_linear_unpenalized_full_rank_equals_ols() {
        // d = 2 closed form: solve the 2x2 normal equations by hand.
        let x = Array2::from_shape_vec(
            (5, 2),
            vec![1.0, 0.5, -1.0, 1.0, 2.0, -0.5, 0.0, 1.5, 1.0, 1.0],
        )
        .unwrap();
        let y = Array1::from_vec(vec![0.7, -0.2, 1.9, 0.4, 1.1]);
        let (a, b, c) = (
            x.column(0).dot(&x.column(0)),
            x.column(0).dot(&x.column(1)),
            x.column(1).dot(&x.column(1)),
        );
        let (r0, r1) = (x.column(0).dot(&y), x.column(1).dot(&y));
        let det = a * c - b * b;
        let ols = [(c * r0 - b * r1) / det, (a * r1 - b * r0) / det];
        let mut cfg = SolverConfig::default();
        cfg.tol = 1e-15;
        cfg.max_iters = 50_000;
        let alpha = lasso_linear(&x, &y, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(alpha[0], ols[0], epsilon = 1e-7);
        assert_abs_diff_eq!(alpha[1], ols[1], epsilon = 1e-7);
    }

    #[test]
    fn lasso_linear_full_shrinkage_above_threshold() {
        let mut rng = stream(53, 0, Role::Probe);
        let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_iter((0..30).map(|_| rng.random_range(-1.0..1.0)));
        let threshold = 2.0 * x.t().dot(&y).mapv(f64::abs).iter().fold(0.0f64, |a, &b| a.max(b))
            / 30.0;
        let alpha = lasso_linear(&x, &y, threshold * 1.01, &SolverConfig::default()).unwrap();
        assert!(alpha.iter().all(|&a| a == 0.0), "expected full shrinkage, got {alpha:?}");
    }

    #[test]
    fn lasso_logistic_no_signal_shrinks_to_uninformative_half() {
        let mut rng = stream(54, 0, Role::Probe);
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        // perfectly balanced labels independent of x
        let v = Array1::from_iter((0..n).map(|i| (i % 2) as f64));
        let alpha = lasso_logistic(&x, &v, 0.5, &SolverConfig::default()).unwrap();
        assert!(alpha.iter().all(|&a| a == 0.0));
        assert_abs_diff_eq!(logistic(x.row(0).dot(&alpha)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lasso_logistic_rejects_non_binary_response() {
        let x = Array2::zeros((3, 2));
        let v = Array1::from_vec(vec![0.0, 0.5, 1.0]);
        assert!(lasso_logistic(&x, &v, 0.1, &SolverConfig::default()).is_err());
    }

    #[test]
    fn lasso_kkt_holds_on_random_instances() {
        let mut rng = stream(55, 0, Role::Probe);
        for trial in 0..5 {
            let n = 60;
            let d = 8;
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
            let y = Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0)));
            let lambda = 0.05 + 0.05 * trial as f64;
            let mut cfg = SolverConfig::default();
            cfg.tol = 1e-14;
            cfg.max_iters = 100_000;
            let alpha = lasso_linear(&x, &y, lambda, &cfg).unwrap();
            let gap = lasso_kkt_gap(&x, &y, &alpha, lambda);
            assert!(gap <= 1e-6, "KKT gap {gap} too large at trial {trial}");
        }
    }

    #[test]
    fn planted_sparse_logistic_support_recovery() {
        // k = 2 planted coefficients at n = 2000, d = 50, with the
        // finite-sample logistic penalty rule; supports should match in at
        // least 90% of seeds.
        let n = 2000;
        let d = 50;
        let lambda = first_stage_lambda(n, d, 0.05, 1.0, 0.0, GlmFamily::Logistic).unwrap();
        let mut hits = 0;
        let seeds = 50;
        for seed in 0..seeds {
            let mut rng = stream(800 + seed, 0, Role::Probe);
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
            let v = Array1::from_iter((0..n).map(|i| {
                let idx = 2.0 * x[[i, 0]] - 2.0 * x[[i, 1]];
                if rng.random::<f64>() < logistic(idx) {
                    1.0
                } else {
                    0.0
                }
            }));
            let mut cfg = SolverConfig::default();
            cfg.tol = 1e-10;
            let alpha = lasso_logistic(&x, &v, lambda, &cfg).unwrap();
            let support: Vec<usize> = (0..d).filter(|&j| alpha[j].abs() > 1e-10).collect();
            if support == vec![0, 1] {
                hits += 1;
            }
        }
        assert!(
            hits * 10 >= seeds * 9,
            "support recovered in only {hits}/{seeds} seeds"
        );
    }

    #[test]
    fn centered_weighted_lasso_recovers_exact_linear_data() {
        let mut rng = stream(56, 0, Role::Probe);
        let n = 120;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
        let y = Array1::from_iter((0..n).map(|i| 1.5 + 2.0 * x[[i, 0]] - x[[i, 2]]));
        let w = Array1::from_iter((0..n).map(|_| rng.random_range(0.5..2.0)));
        let mut cfg = SolverConfig::default();
        cfg.tol = 1e-15;
        cfg.max_iters = 100_000;
        let fit = lasso_linear_centered(&x, &y, Some(&w), true, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(fit.intercept, 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.alpha[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.alpha[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.alpha[2], -1.0, epsilon = 1e-6);
    }

    #[test]
    fn missing_data_features_contain_expected_products() {
        let x = Array2::from_shape_vec((1, 2), vec![2.0, 3.0]).unwrap();
        let u = Array2::from_shape_vec((1, 2), vec![5.0, 7.0]).unwrap();
        let f = missing_data_features(&x, &u);
        assert_eq!(f.ncols(), 2 + 2 + 4 + 4 + 2);
        let row: Vec<f64> = f.row(0).to_vec();
        assert_eq!(
            row,
            vec![
                2.0, 3.0, // x
                5.0, 7.0, // u
                10.0, 14.0, 15.0, 21.0, // x (x) u
                50.0, 98.0, 75.0, 147.0, // x (x) u^2
                25.0, 49.0 // u^2
            ]
        );
    }
}
