//! Single-index conditional moment restrictions and their integrated losses.
//!
//! A moment restriction enters estimation only through the scalar index
//! `t = Lambda(z, g(z))' theta`. The loss integrand `K` is an antiderivative
//! of the moment `m` in `t`, so the loss gradient is the moment itself times
//! the loading vector. An additive correction `alpha(w) = -h(z) I(z)^-1 R(w,g)`
//! makes the gradient insensitive at first order to nuisance error; because
//! `alpha` does not depend on `t`, the correction adds an affine-in-theta term
//! and preserves convexity.
//!
//! All per-observation functions are closures over the observation index:
//! the application layer captures whatever columns it needs when it builds
//! the moment, which keeps this module agnostic of column naming.

use crate::data::pairwise_mean;
use crate::error::{Error, Result};
use crate::solver::SmoothObjective;
use ndarray::{Array1, Array2};
use std::sync::Arc;

/// Scalar function of (observation index, single index value).
pub type IndexFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;
/// Scalar function of the observation index alone.
pub type RowFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// The (m, dm/dt, K) bundle of one conditional moment restriction.
#[derive(Clone)]
pub struct SingleIndexMoment {
    /// Moment value `m(w_i, t, g(z_i))`.
    pub m: IndexFn,
    /// Derivative of the moment in the single index.
    pub dm_dt: IndexFn,
    /// Antiderivative of `m` in `t`; the loss integrand.
    pub k: IndexFn,
    /// Whether `m` increases in `t` (implies the integrated loss is convex).
    pub monotone_in_t: bool,
}

/// Correction nuisances for moments that are not orthogonal on their own.
#[derive(Clone)]
pub struct OrthogonalCorrection {
    /// `h(z_i)`: conditional expectation of the moment's derivative in the
    /// nuisance output.
    pub h: RowFn,
    /// `I(z_i)`: conditional derivative of the generalized residual in the
    /// nuisance output. Must stay away from zero.
    pub i: RowFn,
    /// `R(w_i, g)`: generalized residual with `E[R | z] = 0` at the truth.
    pub r: RowFn,
    /// Reject assembly when some `|I(z_i)|` falls below this floor.
    pub floor: f64,
}

/// Default floor for `|I(z)|`; guards the inverse against propensity-like
/// degeneracies.
pub const DEFAULT_I_FLOOR: f64 = 1e-3;

impl OrthogonalCorrection {
    pub fn new(h: RowFn, i: RowFn, r: RowFn) -> Self {
        OrthogonalCorrection { h, i, r, floor: DEFAULT_I_FLOOR }
    }

    /// Special case for a nuisance that is a conditional expectation of an
    /// observed variable `v`: the residual is `v - g(z)`, `I` is identically
    /// `-1`, and the correction reduces to `alpha = h(z) (v - g(z))`.
    pub fn conditional_expectation(h: RowFn, residual: RowFn) -> Self {
        OrthogonalCorrection {
            h,
            i: Arc::new(|_| -1.0),
            r: residual,
            floor: DEFAULT_I_FLOOR,
        }
    }
}

/// A fully assembled sample loss: moment bundle, per-observation loadings,
/// and (optionally) correction values.
pub struct CompositeLoss {
    moment: SingleIndexMoment,
    /// n-by-p index loadings `Lambda(z_i, g(z_i))`.
    loadings: Array2<f64>,
    /// Correction values `alpha_i`; all zero when the loss is uncorrected.
    alpha: Array1<f64>,
    corrected: bool,
}

impl CompositeLoss {
    /// Loss without a correction term (for moments orthogonal by
    /// construction, or for deliberately naive baselines).
    pub fn uncorrected(moment: SingleIndexMoment, loadings: Array2<f64>) -> Result<Self> {
        validate_loadings(&loadings)?;
        let n = loadings.nrows();
        Ok(CompositeLoss {
            moment,
            loadings,
            alpha: Array1::zeros(n),
            corrected: false,
        })
    }

    /// Attaches the bias-correction term `alpha_i = -h_i I_i^-1 R_i` to the
    /// integrated loss. Fails if any `|I(z_i)|` is below the correction's
    /// floor, naming the offending observation.
    pub fn orthogonalized(
        moment: SingleIndexMoment,
        loadings: Array2<f64>,
        correction: &OrthogonalCorrection,
    ) -> Result<Self> {
        validate_loadings(&loadings)?;
        let n = loadings.nrows();
        let mut alpha = Array1::zeros(n);
        for row in 0..n {
            let i_val = (correction.i)(row);
            if i_val.abs() < correction.floor {
                return Err(Error::SingularCorrection {
                    row,
                    value: i_val,
                    floor: correction.floor,
                });
            }
            alpha[row] = -(correction.h)(row) / i_val * (correction.r)(row);
        }
        Ok(CompositeLoss {
            moment,
            loadings,
            alpha,
            corrected: true,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn loadings(&self) -> &Array2<f64> {
        &self.loadings
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn is_corrected(&self) -> bool {
        self.corrected
    }

    pub fn monotone_in_t(&self) -> bool {
        self.moment.monotone_in_t
    }

    fn indices(&self, theta: &Array1<f64>) -> Array1<f64> {
        self.loadings.dot(theta)
    }

    /// Sample mean of `K(w_i, t_i, g_i) + alpha_i t_i` with `t = Lambda theta`.
    pub fn value(&self, theta: &Array1<f64>) -> f64 {
        let t = self.indices(theta);
        let per_obs: Vec<f64> = (0..self.n_obs())
            .map(|i| (self.moment.k)(i, t[i]) + self.alpha[i] * t[i])
            .collect();
        pairwise_mean(&per_obs)
    }

    /// Sample mean of `(m(w_i, t_i, g_i) + alpha_i) Lambda_i`.
    pub fn gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        let t = self.indices(theta);
        let weights =
            Array1::from_iter((0..self.n_obs()).map(|i| (self.moment.m)(i, t[i]) + self.alpha[i]));
        self.loadings.t().dot(&weights) / self.n_obs() as f64
    }

    /// Gradient together with the per-coordinate standard error of its
    /// per-observation terms (used for Monte Carlo noise floors).
    pub fn gradient_and_se(&self, theta: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let n = self.n_obs();
        let p = self.loadings.ncols();
        let t = self.indices(theta);
        let mut sum = Array1::<f64>::zeros(p);
        let mut sumsq = Array1::<f64>::zeros(p);
        for i in 0..n {
            let w = (self.moment.m)(i, t[i]) + self.alpha[i];
            for j in 0..p {
                let g = w * self.loadings[[i, j]];
                sum[j] += g;
                sumsq[j] += g * g;
            }
        }
        let mean = &sum / n as f64;
        let var = &sumsq / n as f64 - mean.mapv(|m| m * m);
        let se = var.mapv(|v| (v.max(0.0) / n as f64).sqrt());
        (mean, se)
    }

    /// Quadratic form `nu' H(theta) nu` of the loss Hessian, which for a
    /// single-index loss is `mean_i dm_dt(i, t_i) (Lambda_i' nu)^2`.
    pub fn hessian_quadratic_form(&self, theta: &Array1<f64>, nu: &Array1<f64>) -> f64 {
        let t = self.indices(theta);
        let ln = self.loadings.dot(nu);
        let per_obs: Vec<f64> = (0..self.n_obs())
            .map(|i| (self.moment.dm_dt)(i, t[i]) * ln[i] * ln[i])
            .collect();
        pairwise_mean(&per_obs)
    }
}

impl SmoothObjective for CompositeLoss {
    fn dim(&self) -> usize {
        self.loadings.ncols()
    }
    fn value(&self, theta: &Array1<f64>) -> f64 {
        CompositeLoss::value(self, theta)
    }
    fn gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        CompositeLoss::gradient(self, theta)
    }
}

fn validate_loadings(loadings: &Array2<f64>) -> Result<()> {
    if loadings.nrows() == 0 || loadings.ncols() == 0 {
        return Err(Error::Data("loadings matrix must be nonempty".into()));
    }
    for ((i, _), v) in loadings.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite loading at observation {i}")));
        }
    }
    Ok(())
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Gradient-vs-radius report from [`orthogonality_check`].
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub r_values: Vec<f64>,
    /// `||grad L(theta0, g0 + r (g_dir - g0))||_inf` per radius.
    pub grad_norms: Vec<f64>,
    /// Monte Carlo noise floor (3 standard errors of the max coordinate).
    pub noise_floors: Vec<f64>,
    /// Fitted log-log slope over the points above their noise floor.
    pub slope: Option<f64>,
    /// True when every point sits at or below its noise floor.
    pub at_noise_floor: bool,
}

/// Estimates how fast the loss gradient at `theta0` reacts to nuisance error.
///
/// For each radius `r` the caller-provided factory assembles the loss at the
/// perturbed nuisance `g0 + r (g_dir - g0)` on a fixed Monte Carlo sample
/// (common random numbers across radii). The report carries the infinity
/// norm of the mean gradient per radius and the log-log slope: orthogonal
/// losses show slope near 2, non-orthogonal ones near 1.
pub fn orthogonality_check<F>(
    theta0: &Array1<f64>,
    r_grid: &[f64],
    loss_at: F,
) -> Result<SlopeReport>
where
    F: Fn(f64) -> Result<CompositeLoss>,
{
    if r_grid.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "r grid needs at least 4 points, got {}",
            r_grid.len()
        )));
    }
    if r_grid.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidArgument("r grid must be strictly positive".into()));
    }
    let (min_r, max_r) = r_grid
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if max_r / min_r < 4.0 {
        return Err(Error::InvalidArgument(
            "r grid must span at least a factor of 4 between smallest and largest radius".into(),
        ));
    }

    let mut grad_norms = Vec::with_capacity(r_grid.len());
    let mut noise_floors = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let loss = loss_at(r)?;
        let (grad, se) = loss.gradient_and_se(theta0);
        let (mut norm, mut argmax) = (0.0, 0);
        for (j, g) in grad.iter().enumerate() {
            if g.abs() > norm {
                norm = g.abs();
                argmax = j;
            }
        }
        grad_norms.push(norm);
        noise_floors.push(3.0 * se[argmax]);
    }

    // Points enter the slope fit only when the signal clearly dominates the
    // Monte Carlo noise (twice the floor); borderline points carry more
    // noise than information on the log scale.
    let above: Vec<(f64, f64)> = r_grid
        .iter()
        .zip(&grad_norms)
        .zip(&noise_floors)
        .filter(|((_, &g), &f)| g > 2.0 * f && g > 0.0)
        .map(|((&r, &g), _)| (r.ln(), g.ln()))
        .collect();
    let at_noise_floor = grad_norms
        .iter()
        .zip(&noise_floors)
        .all(|(&g, &f)| g <= f);
    let slope = if above.len() < 2 {
        None
    } else {
        let mx = above.iter().map(|(x, _)| x).sum::<f64>() / above.len() as f64;
        let my = above.iter().map(|(_, y)| y).sum::<f64>() / above.len() as f64;
        let sxx: f64 = above.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        let sxy: f64 = above.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        Some(sxy / sxx)
    };

    Ok(SlopeReport {
        r_values: r_grid.to_vec(),
        grad_norms,
        noise_floors,
        slope,
        at_noise_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Logistic moment with per-row outcome: m = L(t) - y, K = log-loss.
    fn logistic_moment(y: Arc<Vec<f64>>) -> SingleIndexMoment {
        let logistic = |t: f64| 1.0 / (1.0 + (-t).exp());
        let y_m = y.clone();
        let y_k = y.clone();
        SingleIndexMoment {
            m: Arc::new(move |i, t| logistic(t) - y_m[i]),
            dm_dt: Arc::new(move |_, t| {
                let l = logistic(t);
                l * (1.0 - l)
            }),
            k: Arc::new(move |i, t| {
                // antiderivative of L(t) - y: log(1 + e^t) - y t, stably
                let softplus = if t > 30.0 { t } else { (1.0 + t.exp()).ln() };
                softplus - y_k[i] * t
            }),
            monotone_in_t: true,
        }
    }

    fn random_loadings(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream(seed, 0, Role::Probe);
        Array2::from_shape_fn((n, p), |_| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn k_is_an_antiderivative_of_m_and_dm_dt_matches() {
        let y = Arc::new(vec![0.0, 1.0, 1.0, 0.0, 1.0]);
        let moment = logistic_moment(y);
        let mut rng = stream(21, 0, Role::Probe);
        for _ in 0..100 {
            let i = rng.random_range(0..5);
            let t: f64 = rng.random_range(-3.0..3.0);
            let k = &moment.k;
            let m = &moment.m;
            let fd_m = central_diff(|u| k(i, u), t, 1e-5);
            let m_val = m(i, t);
            assert_abs_diff_eq!(fd_m, m_val, epsilon = 1e-6 * m_val.abs().max(1.0));
            let fd_dm = central_diff(|u| m(i, u), t, 1e-5);
            let dm_val = (moment.dm_dt)(i, t);
            assert_abs_diff_eq!(fd_dm, dm_val, epsilon = 1e-6 * dm_val.abs().max(1.0));
        }
    }

    #[test]
    fn monotone_flag_holds_on_random_probes() {
        let y = Arc::new(vec![0.3]);
        let moment = logistic_moment(y);
        let mut rng = stream(22, 0, Role::Probe);
        for _ in 0..100 {
            let t1: f64 = rng.random_range(-4.0..4.0);
            let t2 = t1 + rng.random_range(0.0..2.0);
            assert!((moment.m)(0, t2) >= (moment.m)(0, t1));
        }
    }

    #[test]
    fn squared_loss_value_at_zero_index() {
        // m = t - y, K = 0.5 (y - t)^2: at theta = 0 the loss is mean(y^2)/2.
        let y = Arc::new(vec![1.0, -2.0, 0.5, 3.0]);
        let y_m = y.clone();
        let y_k = y.clone();
        let moment = SingleIndexMoment {
            m: Arc::new(move |i, t| t - y_m[i]),
            dm_dt: Arc::new(|_, _| 1.0),
            k: Arc::new(move |i, t| 0.5 * (y_k[i] - t) * (y_k[i] - t)),
            monotone_in_t: true,
        };
        let loadings = random_loadings(4, 3, 23);
        let loss = CompositeLoss::uncorrected(moment, loadings).unwrap();
        let expected = 0.5 * (1.0 + 4.0 + 0.25 + 9.0) / 4.0;
        assert_abs_diff_eq!(loss.value(&Array1::zeros(3)), expected, epsilon = 1e-12);
    }

    #[test]
    fn missing_data_loss_matches_hand_computation_on_three_rows() {
        // K = d (t - y)^2 / (2 p), correction alpha = h (d - p).
        let d = Arc::new(vec![1.0, 0.0, 1.0]);
        let y = Arc::new(vec![0.2, -0.4, 1.0]);
        let p = Arc::new(vec![0.5, 0.8, 0.25]);
        let h = Arc::new(vec![0.3, -0.2, 0.1]);
        let x = vec![1.0, 2.0, -1.0];

        let (dm, ym, pm) = (d.clone(), y.clone(), p.clone());
        let (dk, yk, pk) = (d.clone(), y.clone(), p.clone());
        let dd = d.clone();
        let pd = p.clone();
        let moment = SingleIndexMoment {
            m: Arc::new(move |i, t| dm[i] * (t - ym[i]) / pm[i]),
            dm_dt: Arc::new(move |i, _| dd[i] / pd[i]),
            k: Arc::new(move |i, t| dk[i] * (t - yk[i]) * (t - yk[i]) / (2.0 * pk[i])),
            monotone_in_t: true,
        };
        let loadings = Array2::from_shape_vec((3, 1), x).unwrap();
        let hc = h.clone();
        let (dc, pc) = (d.clone(), p.clone());
        let correction = OrthogonalCorrection::conditional_expectation(
            Arc::new(move |i| hc[i]),
            Arc::new(move |i| dc[i] - pc[i]),
        );
        let loss = CompositeLoss::orthogonalized(moment, loadings, &correction).unwrap();

        // theta = 0.5 -> t = [0.5, 1.0, -0.5]
        // K terms: 0.09/1.0, 0, 2.25/0.5 -> mean 1.53
        // alpha = h (d - p) = [0.15, 0.16, 0.075]; mean(alpha t) = 0.1975/3
        let theta = Array1::from_vec(vec![0.5]);
        assert_abs_diff_eq!(loss.value(&theta), 1.53 + 0.1975 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_at_random_points() {
        let n = 40;
        let p = 4;
        let mut rng = stream(24, 0, Role::Probe);
        let y = Arc::new((0..n).map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 }).collect::<Vec<_>>());
        let moment = logistic_moment(y);
        let loadings = random_loadings(n, p, 25);
        let v = Arc::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<f64>>());
        let g = Arc::new((0..n).map(|_| rng.random_range(0.2..0.8)).collect::<Vec<f64>>());
        let h = Arc::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let (vc, gc) = (v.clone(), g.clone());
        let hc = h.clone();
        let corr = OrthogonalCorrection::conditional_expectation(
            Arc::new(move |i| hc[i]),
            Arc::new(move |i| vc[i] - gc[i]),
        );
        let loss = CompositeLoss::orthogonalized(moment, loadings, &corr).unwrap();

        for _ in 0..5 {
            let theta = Array1::from_iter((0..p).map(|_| rng.random_range(-1.0..1.0)));
            let grad = loss.gradient(&theta);
            for j in 0..p {
                let fd = central_diff(
                    |u| {
                        let mut th = theta.clone();
                        th[j] = u;
                        loss.value(&th)
                    },
                    theta[j],
                    1e-6,
                );
                assert_abs_diff_eq!(grad[j], fd, epsilon = 1e-6 * grad[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn correction_is_affine_in_theta() {
        // [corrected - uncorrected](theta1) - [same](theta2)
        //   = mean(alpha_i Lambda_i)' (theta1 - theta2) exactly.
        let n = 30;
        let p = 3;
        let mut rng = stream(26, 0, Role::Probe);
        let y = Arc::new((0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>());
        let moment = logistic_moment(y);
        let loadings = random_loadings(n, p, 27);
        let h = Arc::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>());
        let r = Arc::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let (hc, rc) = (h.clone(), r.clone());
        let corr = OrthogonalCorrection::conditional_expectation(
            Arc::new(move |i| hc[i]),
            Arc::new(move |i| rc[i]),
        );
        let plain = CompositeLoss::uncorrected(moment.clone(), loadings.clone()).unwrap();
        let corrected = CompositeLoss::orthogonalized(moment, loadings.clone(), &corr).unwrap();

        let theta1 = Array1::from_iter((0..p).map(|_| rng.random_range(-1.0..1.0)));
        let theta2 = Array1::from_iter((0..p).map(|_| rng.random_range(-1.0..1.0)));
        let diff1 = corrected.value(&theta1) - plain.value(&theta1);
        let diff2 = corrected.value(&theta2) - plain.value(&theta2);
        let mean_alpha_lambda = loadings.t().dot(corrected.alpha()) / n as f64;
        let expected = mean_alpha_lambda.dot(&(&theta1 - &theta2));
        assert_abs_diff_eq!(diff1 - diff2, expected, epsilon = 1e-12);
    }

    #[test]
    fn monotone_moment_gives_nonnegative_hessian_form() {
        let n = 50;
        let p = 4;
        let mut rng = stream(28, 0, Role::Probe);
        let y = Arc::new((0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>());
        let moment = logistic_moment(y);
        let loadings = random_loadings(n, p, 29);
        let loss = CompositeLoss::uncorrected(moment, loadings).unwrap();
        for _ in 0..20 {
            let theta = Array1::from_iter((0..p).map(|_| rng.random_range(-1.0..1.0)));
            let nu = Array1::from_iter((0..p).map(|_| rng.random_range(-1.0..1.0)));
            assert!(loss.hessian_quadratic_form(&theta, &nu) >= 0.0);
            // second differences along nu agree in sign
            let f = |s: f64| loss.value(&(&theta + &(&nu * s)));
            let second = f(1e-3) - 2.0 * f(0.0) + f(-1e-3);
            assert!(second >= -1e-12);
        }
    }

    #[test]
    fn gradient_is_permutation_invariant() {
        let n = 25;
        let p = 3;
        let mut rng = stream(30, 0, Role::Probe);
        let yv: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let loadings = random_loadings(n, p, 31);
        let perm: Vec<usize> = {
            let mut idx: Vec<usize> = (0..n).collect();
            // Fisher-Yates with the same stream
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            idx
        };
        let y_perm: Vec<f64> = perm.iter().map(|&i| yv[i]).collect();
        let mut loadings_perm = Array2::zeros((n, p));
        for (new_i, &old_i) in perm.iter().enumerate() {
            loadings_perm
                .row_mut(new_i)
                .assign(&loadings.row(old_i));
        }
        let loss_a =
            CompositeLoss::uncorrected(logistic_moment(Arc::new(yv)), loadings).unwrap();
        let loss_b =
            CompositeLoss::uncorrected(logistic_moment(Arc::new(y_perm)), loadings_perm).unwrap();
        let theta = Array1::from_vec(vec![0.4, -0.2, 0.9]);
        let (ga, gb) = (loss_a.gradient(&theta), loss_b.gradient(&theta));
        for j in 0..p {
            assert_abs_diff_eq!(ga[j], gb[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_residual_makes_corrected_equal_uncorrected() {
        let y = Arc::new(vec![0.1, 0.9, 0.4]);
        let moment = logistic_moment(y);
        let loadings = random_loadings(3, 2, 32);
        let corr = OrthogonalCorrection::conditional_expectation(
            Arc::new(|_| 5.0),
            Arc::new(|_| 0.0),
        );
        let plain = CompositeLoss::uncorrected(moment.clone(), loadings.clone()).unwrap();
        let corrected = CompositeLoss::orthogonalized(moment, loadings, &corr).unwrap();
        let theta = Array1::from_vec(vec![0.3, -0.7]);
        assert_eq!(plain.value(&theta), corrected.value(&theta));
        assert_eq!(plain.gradient(&theta), corrected.gradient(&theta));
    }

    #[test]
    fn singular_correction_names_the_observation() {
        let y = Arc::new(vec![0.1, 0.9]);
        let moment = logistic_moment(y);
        let loadings = random_loadings(2, 2, 33);
        let corr = OrthogonalCorrection::new(
            Arc::new(|_| 1.0),
            Arc::new(|i| if i == 1 { 1e-9 } else { 1.0 }),
            Arc::new(|_| 0.5),
        );
        match CompositeLoss::orthogonalized(moment, loadings, &corr) {
            Err(Error::SingularCorrection { row, .. }) => assert_eq!(row, 1),
            Err(other) => panic!("expected singular correction, got {other:?}"),
            Ok(_) => panic!("expected singular correction, got a loss"),
        }
    }

    #[test]
    fn zero_direction_reports_noise_floor_flag() {
        // Perturbing along g_dir = g0 leaves the loss at the truth; every
        // gradient norm sits at the Monte Carlo noise floor.
        let n = 4000;
        let mut rng = stream(34, 0, Role::Probe);
        let yv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loadings = random_loadings(n, 2, 35);
        let y = Arc::new(yv);
        let report = orthogonality_check(&Array1::zeros(2), &[0.05, 0.1, 0.2, 0.4], |_r| {
            // m = t - y with E[y] = 0 and theta0 = 0: population gradient 0.
            let ym = y.clone();
            let yk = y.clone();
            let moment = SingleIndexMoment {
                m: Arc::new(move |i, t| t - ym[i]),
                dm_dt: Arc::new(|_, _| 1.0),
                k: Arc::new(move |i, t| 0.5 * (t - yk[i]) * (t - yk[i])),
                monotone_in_t: true,
            };
            CompositeLoss::uncorrected(moment, loadings.clone())
        })
        .unwrap();
        assert!(report.at_noise_floor);
        assert!(report.slope.is_none());
    }

    #[test]
    fn r_grid_preconditions_are_enforced() {
        let theta = Array1::zeros(1);
        let mk = |_r: f64| {
            let moment = SingleIndexMoment {
                m: Arc::new(|_, t| t),
                dm_dt: Arc::new(|_, _| 1.0),
                k: Arc::new(|_, t| 0.5 * t * t),
                monotone_in_t: true,
            };
            CompositeLoss::uncorrected(moment, Array2::from_elem((2, 1), 1.0))
        };
        assert!(orthogonality_check(&theta, &[0.1, 0.2, 0.4], mk).is_err());
        assert!(orthogonality_check(&theta, &[0.1, 0.2, 0.3, -0.4], mk).is_err());
        assert!(orthogonality_check(&theta, &[0.1, 0.12, 0.15, 0.2], mk).is_err());
    }
}
