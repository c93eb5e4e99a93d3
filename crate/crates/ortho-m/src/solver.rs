//! Proximal-gradient minimization of a smooth loss plus an l1 penalty,
//! optionally restricted to an l1 ball.
//!
//! The composite step is a soft-threshold followed by an l1-ball projection
//! when a ball constraint is active. Step sizes come from backtracking by
//! default; Nesterov extrapolation is used on unconstrained solves with a
//! monotone restart so the composite objective never increases across
//! accepted iterations.

use crate::error::{Error, Result};
use ndarray::Array1;
use serde::Serialize;

/// Smooth part of the objective. Implementations must be pure: the same
/// `theta` always produces the same value and gradient.
pub trait SmoothObjective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &Array1<f64>) -> f64;
    fn gradient(&self, theta: &Array1<f64>) -> Array1<f64>;
}

/// Closure-backed objective, mostly for tests and small problems.
pub struct FnObjective<V, G>
where
    V: Fn(&Array1<f64>) -> f64 + Sync,
    G: Fn(&Array1<f64>) -> Array1<f64> + Sync,
{
    pub dim: usize,
    pub value_fn: V,
    pub grad_fn: G,
}

impl<V, G> SmoothObjective for FnObjective<V, G>
where
    V: Fn(&Array1<f64>) -> f64 + Sync,
    G: Fn(&Array1<f64>) -> Array1<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &Array1<f64>) -> f64 {
        (self.value_fn)(theta)
    }
    fn gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        (self.grad_fn)(theta)
    }
}

/// Feasible region of the solve.
#[derive(Debug, Clone)]
pub enum SearchSet {
    FullSpace,
    L1Ball { center: Array1<f64>, radius: f64 },
}

impl SearchSet {
    pub fn l1_ball(center: Array1<f64>, radius: f64) -> Self {
        SearchSet::L1Ball { center, radius }
    }

    pub fn contains(&self, theta: &Array1<f64>, slack: f64) -> bool {
        match self {
            SearchSet::FullSpace => true,
            SearchSet::L1Ball { center, radius } => {
                l1_distance(theta, center) <= radius + slack
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    Fixed(f64),
    Backtracking { beta: f64, eta0: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative change in the composite objective below which we stop.
    pub tol: f64,
    pub step_rule: StepRule,
    /// Nesterov extrapolation; automatically disabled on l1-ball search sets.
    pub acceleration: bool,
    /// Record the composite objective of every accepted iterate.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 10_000,
            tol: 1e-8,
            step_rule: StepRule::Backtracking { beta: 0.5, eta0: 1.0 },
            acceleration: true,
            trace: false,
        }
    }
}

/// What happened during a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_step: f64,
    pub final_objective: f64,
    /// True when the initial point was outside the search set and projected.
    pub init_projected: bool,
    /// Starting point of the solve; with a non-convex composite the limit
    /// point depends on it.
    pub init: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// Componentwise shrink toward zero: `sign(v_j) * max(|v_j| - t, 0)`.
/// Entries with `|v_j| <= t` (ties included) map to exactly zero.
pub fn soft_threshold(v: &Array1<f64>, t: f64) -> Result<Array1<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "soft threshold requires t >= 0, got {t}"
        )));
    }
    Ok(v.mapv(|x| {
        let shrunk = x.abs() - t;
        if shrunk > 0.0 {
            shrunk * x.signum()
        } else {
            0.0
        }
    }))
}

fn l1_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Euclidean projection of `v` onto `{u : ||u - center||_1 <= radius}`.
///
/// Sort-based simplex projection on `|v - center|`, O(p log p). Points
/// already inside the ball are returned unchanged.
pub fn project_l1_ball(v: &Array1<f64>, center: &Array1<f64>, radius: f64) -> Result<Array1<f64>> {
    if radius < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "l1 ball radius must be nonnegative, got {radius}"
        )));
    }
    if v.len() != center.len() {
        return Err(Error::InvalidArgument(format!(
            "projection dimension mismatch: {} vs {}",
            v.len(),
            center.len()
        )));
    }
    if radius == 0.0 {
        return Ok(center.clone());
    }
    let w: Array1<f64> = (v - center).mapv(f64::abs);
    if w.sum() <= radius {
        return Ok(v.clone());
    }
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-finite coordinate"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut out = v.clone();
    for i in 0..out.len() {
        let diff = v[i] - center[i];
        let shrunk = (diff.abs() - tau).max(0.0);
        out[i] = center[i] + shrunk * diff.signum();
    }
    Ok(out)
}

fn check_finite(value: f64, grad: &Array1<f64>, iteration: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            iteration,
            what: format!("loss value is {value}"),
        });
    }
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NumericFailure {
            iteration,
            what: format!("gradient coordinate {bad} is {}", grad[bad]),
        });
    }
    Ok(())
}

fn composite(obj: &dyn SmoothObjective, lambda: f64, theta: &Array1<f64>) -> f64 {
    obj.value(theta) + lambda * theta.mapv(f64::abs).sum()
}

fn prox_step(
    point: &Array1<f64>,
    grad: &Array1<f64>,
    eta: f64,
    lambda: f64,
    set: &SearchSet,
) -> Result<Array1<f64>> {
    let moved = point - &(grad * eta);
    let shrunk = soft_threshold(&moved, eta * lambda)?;
    match set {
        SearchSet::FullSpace => Ok(shrunk),
        SearchSet::L1Ball { center, radius } => project_l1_ball(&shrunk, center, *radius),
    }
}

/// Minimizes `obj(theta) + lambda * ||theta||_1` over `set` starting at `init`.
///
/// Terminates when the relative change of the composite objective falls
/// below `cfg.tol` or `cfg.max_iters` is reached. The returned point always
/// lies in `set`, and the composite objective is non-increasing across
/// accepted iterations.
pub fn prox_grad_minimize(
    obj: &dyn SmoothObjective,
    lambda: f64,
    set: &SearchSet,
    init: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolverDiagnostics)> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "penalty must be nonnegative, got {lambda}"
        )));
    }
    if init.len() != obj.dim() {
        return Err(Error::InvalidArgument(format!(
            "init has dimension {}, objective expects {}",
            init.len(),
            obj.dim()
        )));
    }

    let init_recorded = init.to_vec();
    let mut init_projected = false;
    let mut x = if set.contains(init, 1e-12) {
        init.clone()
    } else {
        init_projected = true;
        match set {
            SearchSet::FullSpace => init.clone(),
            SearchSet::L1Ball { center, radius } => project_l1_ball(init, center, *radius)?,
        }
    };

    // Extrapolation has no descent guarantee on the ball-constrained
    // composite, so it only runs on full-space solves.
    let accelerate = cfg.acceleration && matches!(set, SearchSet::FullSpace);

    let (beta, mut eta) = match cfg.step_rule {
        StepRule::Fixed(eta) => {
            if eta <= 0.0 {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
            }
            (1.0, eta)
        }
        StepRule::Backtracking { beta, eta0 } => {
            if !(0.0 < beta && beta < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "backtracking factor must lie in (0,1), got {beta}"
                )));
            }
            if eta0 <= 0.0 {
                return Err(Error::InvalidArgument(format!("initial step must be positive, got {eta0}")));
            }
            (beta, eta0)
        }
    };
    let backtracking = matches!(cfg.step_rule, StepRule::Backtracking { .. });

    let mut f_x = composite(obj, lambda, &x);
    if !f_x.is_finite() {
        return Err(Error::NumericFailure {
            iteration: 0,
            what: format!("loss value is {f_x} at the initial point"),
        });
    }
    let mut trace = if cfg.trace { vec![f_x] } else { Vec::new() };

    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let (mut value_y, mut grad_y) = (obj.value(&y), obj.gradient(&y));
        check_finite(value_y, &grad_y, iter)?;

        let mut candidate;
        loop {
            candidate = prox_step(&y, &grad_y, eta, lambda, set)?;
            if !backtracking {
                break;
            }
            // Sufficient decrease of the smooth part against its quadratic
            // model at y.
            let diff = &candidate - &y;
            let quad = value_y + grad_y.dot(&diff) + diff.dot(&diff) / (2.0 * eta);
            let value_c = obj.value(&candidate);
            if !value_c.is_finite() {
                return Err(Error::NumericFailure {
                    iteration: iter,
                    what: format!("loss value is {value_c} at a trial point"),
                });
            }
            if value_c <= quad + 1e-12 * quad.abs().max(1.0) || eta < 1e-18 {
                break;
            }
            eta *= beta;
        }

        let mut f_candidate = composite(obj, lambda, &candidate);
        if accelerate && f_candidate > f_x {
            // Extrapolated point overshot; restart momentum and step from x.
            momentum = 1.0;
            y = x.clone();
            value_y = obj.value(&y);
            grad_y = obj.gradient(&y);
            check_finite(value_y, &grad_y, iter)?;
            loop {
                candidate = prox_step(&y, &grad_y, eta, lambda, set)?;
                if !backtracking {
                    break;
                }
                let diff = &candidate - &y;
                let quad = value_y + grad_y.dot(&diff) + diff.dot(&diff) / (2.0 * eta);
                if obj.value(&candidate) <= quad + 1e-12 * quad.abs().max(1.0) || eta < 1e-18 {
                    break;
                }
                eta *= beta;
            }
            f_candidate = composite(obj, lambda, &candidate);
        }

        let rel_change = (f_x - f_candidate).abs() / f_x.abs().max(1.0);
        let accepted = if f_candidate <= f_x {
            if cfg.trace {
                trace.push(f_candidate);
            }
            if accelerate {
                let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let extrapolated = &candidate + &((&candidate - &x) * ((momentum - 1.0) / momentum_next));
                momentum = momentum_next;
                y = extrapolated;
            } else {
                y = candidate.clone();
            }
            x = candidate;
            f_x = f_candidate;
            true
        } else {
            // No progress even from x itself: a fixed step can do this on a
            // stiff problem; treat the current point as converged-in-place.
            y = x.clone();
            momentum = 1.0;
            false
        };

        if !accepted {
            break;
        }
        if rel_change < cfg.tol {
            converged = true;
            break;
        }
    }

    let diagnostics = SolverDiagnostics {
        iterations,
        converged,
        final_step: eta,
        final_objective: f_x,
        init_projected,
        init: init_recorded,
        objective_trace: trace,
    };
    Ok((x, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn quadratic_around(a: Array1<f64>) -> impl SmoothObjective {
        let dim = a.len();
        let a_val = a.clone();
        FnObjective {
            dim,
            value_fn: move |theta: &Array1<f64>| {
                let d = theta - &a_val;
                0.5 * d.dot(&d)
            },
            grad_fn: move |theta: &Array1<f64>| theta - &a,
        }
    }

    #[test]
    fn soft_threshold_componentwise() {
        let v = Array1::from_vec(vec![3.0, -1.0, 0.5]);
        let out = soft_threshold(&v, 1.0).unwrap();
        assert_eq!(out.to_vec(), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn soft_threshold_zero_is_identity() {
        let v = Array1::from_vec(vec![1.5, -0.25, 0.0, 7.0]);
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v);
    }

    #[test]
    fn soft_threshold_preserves_sign() {
        let v = Array1::from_vec(vec![-2.5]);
        assert_eq!(soft_threshold(&v, 1.25).unwrap().to_vec(), vec![-1.25]);
    }

    #[test]
    fn soft_threshold_rejects_negative_t() {
        let v = Array1::from_vec(vec![1.0]);
        assert!(matches!(
            soft_threshold(&v, -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn soft_threshold_subgradient_conditions_on_random_probes() {
        let mut rng = stream(11, 0, Role::Probe);
        for _ in 0..200 {
            let p = rng.random_range(1..8);
            let v = Array1::from_iter((0..p).map(|_| rng.random_range(-3.0..3.0)));
            let t: f64 = rng.random_range(0.0..2.0);
            let out = soft_threshold(&v, t).unwrap();
            for j in 0..p {
                assert!((v[j] - out[j]).abs() <= t + 1e-12);
                if out[j] != 0.0 {
                    assert_eq!(out[j].signum(), v[j].signum());
                    assert_abs_diff_eq!((v[j] - out[j]).abs(), t, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn projection_inside_ball_is_identity() {
        let v = Array1::from_vec(vec![0.2, -0.3]);
        let c = Array1::zeros(2);
        assert_eq!(project_l1_ball(&v, &c, 1.0).unwrap(), v);
    }

    #[test]
    fn projection_single_axis() {
        let v = Array1::from_vec(vec![2.0, 0.0]);
        let c = Array1::zeros(2);
        let out = project_l1_ball(&v, &c, 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_diagonal_matches_boundary_grid_search() {
        // Independent oracle: scan the boundary |u1| + |u2| = 1 at
        // resolution 1e-4 and take the closest point to v.
        let v = Array1::from_vec(vec![1.0, 1.0]);
        let c = Array1::zeros(2);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 10_000;
        for sign1 in [-1.0, 1.0] {
            for sign2 in [-1.0, 1.0] {
                for i in 0..=steps {
                    let a = i as f64 / steps as f64;
                    let u = (sign1 * a, sign2 * (1.0 - a));
                    let d = (u.0 - v[0]).powi(2) + (u.1 - v[1]).powi(2);
                    if d < best.0 {
                        best = (d, u.0, u.1);
                    }
                }
            }
        }
        assert_abs_diff_eq!(best.1, 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(best.2, 0.5, epsilon = 1e-4);
        let out = project_l1_ball(&v, &c, 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn projection_feasible_on_random_inputs() {
        let mut rng = stream(12, 0, Role::Probe);
        for _ in 0..300 {
            let p = rng.random_range(1..12);
            let v = Array1::from_iter((0..p).map(|_| rng.random_range(-5.0..5.0)));
            let c = Array1::from_iter((0..p).map(|_| rng.random_range(-2.0..2.0)));
            let r: f64 = rng.random_range(0.0..3.0);
            let out = project_l1_ball(&v, &c, r).unwrap();
            let dist: f64 = out
                .iter()
                .zip(c.iter())
                .map(|(a, b)| (a - b).abs())
                .sum();
            assert!(dist <= r + 1e-12, "dist {dist} exceeds radius {r}");
        }
    }

    #[test]
    fn projection_zero_radius_returns_center() {
        let v = Array1::from_vec(vec![4.0, -1.0]);
        let c = Array1::from_vec(vec![0.5, 0.5]);
        assert_eq!(project_l1_ball(&v, &c, 0.0).unwrap(), c);
    }

    #[test]
    fn prox_of_separable_quadratic_is_soft_threshold() {
        let a = Array1::from_vec(vec![2.0, -0.3, 0.9, -4.0]);
        let obj = quadratic_around(a.clone());
        let t = 0.5;
        let init = Array1::zeros(4);
        let (theta, diag) =
            prox_grad_minimize(&obj, t, &SearchSet::FullSpace, &init, &SolverConfig::default())
                .unwrap();
        let expected = soft_threshold(&a, t).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(theta[j], expected[j], epsilon = 1e-7);
        }
        assert!(diag.converged);
    }

    #[test]
    fn orthonormal_design_lasso_matches_soft_thresholded_ols() {
        // Build X with X'X = n I via Gram-Schmidt, then check the closed form.
        let n = 60;
        let p = 5;
        let mut rng = stream(13, 0, Role::Probe);
        let mut cols: Vec<Array1<f64>> = Vec::new();
        for _ in 0..p {
            let mut v = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0..1.0f64)));
            for q in &cols {
                let proj = v.dot(q);
                v = &v - &(q * proj);
            }
            let norm = v.dot(&v).sqrt();
            cols.push(v / norm);
        }
        let mut x = Array2::zeros((n, p));
        for (j, c) in cols.iter().enumerate() {
            x.column_mut(j).assign(&(c * (n as f64).sqrt()));
        }
        let y = Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0f64)));
        let ols = x.t().dot(&y) / n as f64;
        let lambda = 0.3;

        let xc = x.clone();
        let yc = y.clone();
        let obj = FnObjective {
            dim: p,
            value_fn: move |theta: &Array1<f64>| {
                let r = &yc - &xc.dot(theta);
                r.dot(&r) / (2.0 * n as f64)
            },
            grad_fn: {
                let xg = x.clone();
                let yg = y.clone();
                move |theta: &Array1<f64>| {
                    let r = xg.dot(theta) - &yg;
                    xg.t().dot(&r) / n as f64
                }
            },
        };
        let mut cfg = SolverConfig::default();
        cfg.tol = 1e-14;
        let (theta, _) =
            prox_grad_minimize(&obj, lambda, &SearchSet::FullSpace, &Array1::zeros(p), &cfg).unwrap();
        let expected = soft_threshold(&ols, lambda).unwrap();
        for j in 0..p {
            assert_abs_diff_eq!(theta[j], expected[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn monotone_descent_along_accepted_iterates() {
        let mut rng = stream(14, 0, Role::Probe);
        let p = 6;
        let a = Array1::from_iter((0..p).map(|_| rng.random_range(-3.0..3.0f64)));
        let obj = quadratic_around(a);
        let mut cfg = SolverConfig::default();
        cfg.trace = true;
        let init = Array1::from_iter((0..p).map(|_| rng.random_range(-5.0..5.0f64)));
        let (_, diag) =
            prox_grad_minimize(&obj, 0.7, &SearchSet::FullSpace, &init, &cfg).unwrap();
        for w in diag.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fixed_point_terminates_within_one_iteration() {
        let a = Array1::from_vec(vec![2.0, -1.0, 0.1]);
        let t = 0.5;
        let star = soft_threshold(&a, t).unwrap(); // minimizer of 0.5||x-a||^2 + t||x||_1
        let obj = quadratic_around(a);
        let (theta, diag) =
            prox_grad_minimize(&obj, t, &SearchSet::FullSpace, &star, &SolverConfig::default())
                .unwrap();
        assert_eq!(diag.iterations, 1);
        for j in 0..3 {
            assert_abs_diff_eq!(theta[j], star[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn ball_constrained_solution_stays_feasible_and_init_projection_is_recorded() {
        let a = Array1::from_vec(vec![3.0, 3.0]);
        let obj = quadratic_around(a);
        let set = SearchSet::l1_ball(Array1::zeros(2), 1.0);
        let init = Array1::from_vec(vec![5.0, -5.0]);
        let (theta, diag) =
            prox_grad_minimize(&obj, 0.0, &set, &init, &SolverConfig::default()).unwrap();
        assert!(diag.init_projected);
        assert!(set.contains(&theta, 1e-10));
        // Unconstrained optimum is (3,3); the ball forces the symmetric
        // boundary point (0.5, 0.5).
        assert_abs_diff_eq!(theta[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(theta[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn non_finite_gradient_is_reported_with_iterate_index() {
        let obj = FnObjective {
            dim: 1,
            value_fn: |theta: &Array1<f64>| theta[0].ln(),
            grad_fn: |theta: &Array1<f64>| Array1::from_vec(vec![1.0 / theta[0]]),
        };
        let init = Array1::from_vec(vec![-1.0]);
        let err = prox_grad_minimize(
            &obj,
            0.1,
            &SearchSet::FullSpace,
            &init,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericFailure { .. }));
    }
}
