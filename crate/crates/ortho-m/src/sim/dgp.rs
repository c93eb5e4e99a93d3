//! Data-generating processes for the four benchmark experiments.
//!
//! Every generator draws from `(seed, replication, role)` streams, so one
//! replication is reproducible in isolation and coefficient draws are
//! independent of the sample draws.

use super::DgpConfig;
use crate::apps::{logistic, logistic_prime, Model};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::first_stage::NuisanceRole;
use crate::rng::{stream, Role};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;
use std::collections::BTreeMap;

/// How opponent beliefs are generated in the games model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GamesVariant {
    /// Player 2 ignores player 1 (delta2 forced to zero), so beliefs have a
    /// closed logistic-linear form.
    Decoupled,
    /// Beliefs solve the two-player fixed point of the logistic best
    /// responses row by row.
    Equilibrium,
}

impl GamesVariant {
    pub fn parse(s: &str) -> Result<GamesVariant> {
        match s {
            "dgp1" | "decoupled" => Ok(GamesVariant::Decoupled),
            "dgp2" | "equilibrium" => Ok(GamesVariant::Equilibrium),
            other => Err(Error::Config(format!("unknown games variant '{other}'"))),
        }
    }
}

/// Ground truth attached to a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub theta0: Array1<f64>,
    /// True per-observation nuisance values, keyed by the roles the model's
    /// loss reads.
    pub nuisance: BTreeMap<NuisanceRole, Array1<f64>>,
    /// Generator internals useful for diagnostics (per-row vectors).
    pub aux: BTreeMap<String, Array1<f64>>,
}

impl SimTruth {
    pub fn support(&self) -> Vec<usize> {
        (0..self.theta0.len()).filter(|&j| self.theta0[j] != 0.0).collect()
    }
}

/// A simulated dataset with its generating truth.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub truth: SimTruth,
}

/// Dispatches to the model's generator.
pub fn generate(cfg: &DgpConfig, replication: u64) -> Result<SimData> {
    match cfg.model()? {
        Model::PartiallyLinear => gen_partially_linear(cfg, replication),
        Model::LogisticTe => gen_logistic_te(cfg, replication),
        Model::MissingData => gen_missing_data(cfg, replication),
        Model::Games => gen_games(cfg, replication),
    }
}

fn ones_support(dim: usize, k: usize, value: f64) -> Array1<f64> {
    let mut v = Array1::zeros(dim);
    for j in 0..k.min(dim) {
        v[j] = value;
    }
    v
}

/// y = tau x'theta + u'alpha + eps with tau = u'beta + eta, x = (1, u_1..),
/// Gaussian controls and noise, and all nonzero coefficients equal to one.
pub fn gen_partially_linear(cfg: &DgpConfig, replication: u64) -> Result<SimData> {
    let (n, p, du) = (cfg.n, cfg.p, cfg.d_u);
    if du + 1 < p {
        return Err(Error::Config(format!(
            "partially linear generator needs d_u >= p - 1 (got p={p}, d_u={du})"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng_u = stream(cfg.seed, replication, Role::Controls);
    let u = Array2::from_shape_fn((n, du), |_| normal.sample(&mut rng_u));

    let theta0 = ones_support(p, cfg.k, cfg.theta_value);
    let alpha0 = ones_support(du, cfg.k_alpha, 1.0);
    let beta0 = ones_support(du, cfg.k_beta, 1.0);

    let mut rng_eta = stream(cfg.seed, replication, Role::Treatment);
    let mut rng_eps = stream(cfg.seed, replication, Role::Noise);

    let mut tau = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    let mut h0 = Array1::zeros(n);
    let mut q0 = Array1::zeros(n);
    for i in 0..n {
        let urow = u.row(i);
        h0[i] = urow.dot(&beta0);
        tau[i] = h0[i] + cfg.sigma_eta * normal.sample(&mut rng_eta);
        let mut x_theta = theta0[0];
        for j in 1..p {
            x_theta += theta0[j] * u[[i, j - 1]];
        }
        let f0 = urow.dot(&alpha0);
        y[i] = tau[i] * x_theta + f0 + cfg.sigma_eps * normal.sample(&mut rng_eps);
        q0[i] = h0[i] * x_theta + f0;
    }

    let mut data = Dataset::new(n);
    data.insert("y", y)?;
    data.insert("tau", tau)?;
    for j in 0..du {
        data.insert(format!("u_{}", j + 1), u.column(j).to_owned())?;
    }

    let mut nuisance = BTreeMap::new();
    nuisance.insert(NuisanceRole::CondTreatment, h0);
    nuisance.insert(NuisanceRole::CondOutcome, q0);
    let mut aux = BTreeMap::new();
    aux.insert("alpha0".into(), alpha0);
    aux.insert("beta0".into(), beta0);

    Ok(SimData { data, truth: SimTruth { theta0, nuisance, aux } })
}

/// Pr[y=1 | u, tau] = L(tau u'theta + u'alpha) with tau = u'beta + eta and
/// uniform controls.
pub fn gen_logistic_te(cfg: &DgpConfig, replication: u64) -> Result<SimData> {
    let (n, p) = (cfg.n, cfg.p);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let uni = Uniform::new(-cfg.sigma_u, cfg.sigma_u)
        .map_err(|e| Error::Config(format!("bad sigma_u: {e}")))?;

    let mut rng_u = stream(cfg.seed, replication, Role::Controls);
    let u = Array2::from_shape_fn((n, p), |_| uni.sample(&mut rng_u));

    let theta0 = ones_support(p, cfg.k, cfg.theta_value);
    let alpha0 = ones_support(p, cfg.k_alpha, 1.0);
    let beta0 = ones_support(p, cfg.k_alpha, 1.0); // identical supports

    let mut rng_eta = stream(cfg.seed, replication, Role::Treatment);
    let mut rng_y = stream(cfg.seed, replication, Role::Presence);

    let mut tau = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    let mut pi0 = Array1::zeros(n);
    let mut q0 = Array1::zeros(n);
    let mut v0 = Array1::zeros(n);
    for i in 0..n {
        let urow = u.row(i);
        pi0[i] = urow.dot(&beta0);
        tau[i] = pi0[i] + cfg.sigma_eta * normal.sample(&mut rng_eta);
        let u_theta = urow.dot(&theta0);
        let u_alpha = urow.dot(&alpha0);
        let index = tau[i] * u_theta + u_alpha;
        y[i] = if rng_y.random::<f64>() < logistic(index) { 1.0 } else { 0.0 };
        q0[i] = pi0[i] * u_theta + u_alpha;
        v0[i] = logistic_prime(index);
    }

    let mut data = Dataset::new(n);
    data.insert("y", y)?;
    data.insert("tau", tau)?;
    for j in 0..p {
        data.insert(format!("u_{}", j + 1), u.column(j).to_owned())?;
    }

    let mut nuisance = BTreeMap::new();
    nuisance.insert(NuisanceRole::CondTreatment, pi0);
    nuisance.insert(NuisanceRole::CondOutcome, q0);
    nuisance.insert(NuisanceRole::LinkSlope, v0);
    let mut aux = BTreeMap::new();
    aux.insert("alpha0".into(), alpha0);
    aux.insert("beta0".into(), beta0);

    Ok(SimData { data, truth: SimTruth { theta0, nuisance, aux } })
}

/// y = x' h(u) + eps with h(u) = theta + A1 u + A2 (u^2 - E[u^2]) observed
/// only when d = 1, where Pr(d=1 | x, u) = L(sigma_eta (x'beta + u'gamma)).
pub fn gen_missing_data(cfg: &DgpConfig, replication: u64) -> Result<SimData> {
    let (n, p, du) = (cfg.n, cfg.p, cfg.d_u);
    let k_theta = cfg.k;
    let k_u = cfg.k_alpha;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let uni_x = Uniform::new(-cfg.sigma_x, cfg.sigma_x)
        .map_err(|e| Error::Config(format!("bad sigma_x: {e}")))?;
    let uni_u = Uniform::new(-cfg.sigma_u, cfg.sigma_u)
        .map_err(|e| Error::Config(format!("bad sigma_u: {e}")))?;

    let mut rng_x = stream(cfg.seed, replication, Role::Treatment);
    let mut rng_u = stream(cfg.seed, replication, Role::Controls);
    let x = Array2::from_shape_fn((n, p), |_| uni_x.sample(&mut rng_x));
    let u = Array2::from_shape_fn((n, du), |_| uni_u.sample(&mut rng_u));

    // Coefficient draws: A1, A2 nonzero on the theta support rows and the
    // first k_u columns with U(1,2) entries; beta ~ U(0,1), gamma ~ U(2,3).
    let mut rng_coef = stream(cfg.seed, replication, Role::Coefficients);
    let theta0 = ones_support(p, k_theta, cfg.theta_value);
    let mut a1 = Array2::<f64>::zeros((p, du));
    let mut a2 = Array2::<f64>::zeros((p, du));
    for row in 0..k_theta.min(p) {
        for col in 0..k_u.min(du) {
            a1[[row, col]] = rng_coef.random_range(1.0..2.0);
            a2[[row, col]] = rng_coef.random_range(1.0..2.0);
        }
    }
    let beta = Array1::from_shape_fn(p, |_| rng_coef.random_range(0.0..1.0));
    let gamma = Array1::from_shape_fn(du, |_| rng_coef.random_range(2.0..3.0));

    // E[u^2] for U(-s, s) is s^2 / 3, computed analytically.
    let u2_mean = cfg.sigma_u * cfg.sigma_u / 3.0;

    let mut rng_eps = stream(cfg.seed, replication, Role::Noise);
    let mut rng_d = stream(cfg.seed, replication, Role::Presence);

    let mut y = Array1::zeros(n);
    let mut d = Array1::zeros(n);
    let mut p0 = Array1::zeros(n);
    let mut corr_h0 = Array1::zeros(n);
    for i in 0..n {
        let urow = u.row(i);
        let xrow = x.row(i);
        // x' h(u) = x'theta + x' A1 u + x' A2 (u^2 - E[u^2])
        let mut hetero = 0.0;
        for row in 0..p {
            let mut hr = 0.0;
            for col in 0..du {
                let uc = urow[col];
                hr += a1[[row, col]] * uc + a2[[row, col]] * (uc * uc - u2_mean);
            }
            hetero += xrow[row] * hr;
        }
        let y_true = xrow.dot(&theta0) + hetero + cfg.sigma_eps * normal.sample(&mut rng_eps);
        let index = cfg.sigma_eta * (xrow.dot(&beta) + urow.dot(&gamma));
        p0[i] = logistic(index);
        d[i] = if rng_d.random::<f64>() < p0[i] { 1.0 } else { 0.0 };
        // only d*y is observable
        y[i] = d[i] * y_true;
        // E[x'theta - y | z] = -hetero, so the correction multiplier
        // -E[u(y, x'theta0) | z] / p0(z) is hetero / p0.
        corr_h0[i] = hetero / p0[i];
    }

    let mut data = Dataset::new(n);
    data.insert("y", y)?;
    data.insert("d", d)?;
    for j in 0..p {
        data.insert(format!("x_{}", j + 1), x.column(j).to_owned())?;
    }
    for j in 0..du {
        data.insert(format!("u_{}", j + 1), u.column(j).to_owned())?;
    }

    let mut nuisance = BTreeMap::new();
    nuisance.insert(NuisanceRole::Propensity, p0);
    nuisance.insert(NuisanceRole::CorrectionH, corr_h0);
    let mut aux = BTreeMap::new();
    aux.insert("beta".into(), beta);
    aux.insert("gamma".into(), gamma);
    aux.insert("a1_row0".into(), a1.row(0).to_owned());
    aux.insert("a2_row0".into(), a2.row(0).to_owned());

    Ok(SimData { data, truth: SimTruth { theta0, nuisance, aux } })
}

/// Cap on the equilibrium fixed-point iterations; the logistic best-response
/// map is a contraction whenever |delta1 delta2| / 16 < 1.
const EQUILIBRIUM_MAX_ITERS: usize = 1000;
const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Two-player entry game: Pr[y_i = 1 | x] = L(x'alpha_i + g_{-i}(x) delta_i)
/// with beliefs g either closed-form (decoupled) or solved to a fixed point.
pub fn gen_games(cfg: &DgpConfig, replication: u64) -> Result<SimData> {
    let n = cfg.n;
    let p = cfg.p;
    if p < 2 {
        return Err(Error::Config("games model needs p >= 2".into()));
    }
    let pm1 = p - 1;
    let (delta1, delta2) = match cfg.games_variant {
        GamesVariant::Decoupled => (cfg.delta1, 0.0),
        GamesVariant::Equilibrium => (cfg.delta1, cfg.delta2),
    };
    if matches!(cfg.games_variant, GamesVariant::Equilibrium)
        && (delta1 * delta2).abs() / 16.0 >= 1.0
    {
        return Err(Error::Config(format!(
            "equilibrium map is not a contraction: |delta1 delta2|/16 = {} >= 1",
            (delta1 * delta2).abs() / 16.0
        )));
    }

    let uni = Uniform::new(-cfg.sigma_x, cfg.sigma_x)
        .map_err(|e| Error::Config(format!("bad sigma_x: {e}")))?;
    let mut rng_x = stream(cfg.seed, replication, Role::Controls);
    let x = Array2::from_shape_fn((n, pm1), |_| uni.sample(&mut rng_x));

    // alpha^1 has k_beta (= k_1) unit coefficients; alpha^2 has k_alpha
    // (= k_2) coefficients drawn U(-2, 2).
    let mut rng_coef = stream(cfg.seed, replication, Role::Coefficients);
    let alpha1 = ones_support(pm1, cfg.k_beta, 1.0);
    let mut alpha2 = Array1::<f64>::zeros(pm1);
    for j in 0..cfg.k_alpha.min(pm1) {
        alpha2[j] = rng_coef.random_range(-2.0..2.0);
    }

    let idx1 = x.dot(&alpha1);
    let idx2 = x.dot(&alpha2);

    let mut g1 = Array1::zeros(n);
    let mut g2 = Array1::zeros(n);
    match cfg.games_variant {
        GamesVariant::Decoupled => {
            for i in 0..n {
                g2[i] = logistic(idx2[i]);
                g1[i] = logistic(idx1[i] + g2[i] * delta1);
            }
        }
        GamesVariant::Equilibrium => {
            for i in 0..n {
                let (mut a, mut b) = (0.5, 0.5); // (g1, g2)
                let mut residual = f64::INFINITY;
                for _ in 0..EQUILIBRIUM_MAX_ITERS {
                    let na = logistic(idx1[i] + b * delta1);
                    let nb = logistic(idx2[i] + a * delta2);
                    residual = (na - a).abs().max((nb - b).abs());
                    a = na;
                    b = nb;
                    if residual < EQUILIBRIUM_TOL {
                        break;
                    }
                }
                if residual >= EQUILIBRIUM_TOL {
                    return Err(Error::FixedPoint {
                        max_iters: EQUILIBRIUM_MAX_ITERS,
                        residual,
                    });
                }
                g1[i] = a;
                g2[i] = b;
            }
        }
    }

    let mut rng_act = stream(cfg.seed, replication, Role::Presence);
    let mut y = Array1::zeros(n);
    let mut v = Array1::zeros(n);
    let mut corr_h0 = Array1::zeros(n);
    for i in 0..n {
        y[i] = if rng_act.random::<f64>() < g1[i] { 1.0 } else { 0.0 };
        v[i] = if rng_act.random::<f64>() < g2[i] { 1.0 } else { 0.0 };
        corr_h0[i] = delta1 * logistic_prime(idx1[i] + g2[i] * delta1);
    }

    let mut theta0 = Array1::zeros(p);
    for j in 0..pm1 {
        theta0[j] = alpha1[j];
    }
    theta0[pm1] = delta1;

    let mut data = Dataset::new(n);
    data.insert("y", y)?;
    data.insert("v", v)?;
    for j in 0..pm1 {
        data.insert(format!("x_{}", j + 1), x.column(j).to_owned())?;
    }

    let mut nuisance = BTreeMap::new();
    nuisance.insert(NuisanceRole::OpponentBelief, g2.clone());
    nuisance.insert(NuisanceRole::CorrectionH, corr_h0);
    let mut aux = BTreeMap::new();
    aux.insert("alpha2".into(), alpha2);
    aux.insert("g1".into(), g1);
    aux.insert("delta".into(), Array1::from_vec(vec![delta1, delta2]));

    Ok(SimData { data, truth: SimTruth { theta0, nuisance, aux } })
}

/// Max violation of the equilibrium equations across rows; recomputed from
/// the stored truth for self-checks.
pub fn equilibrium_residual(sim: &SimData) -> Result<f64> {
    let g2 = &sim.truth.nuisance[&NuisanceRole::OpponentBelief];
    let g1 = sim
        .truth
        .aux
        .get("g1")
        .ok_or_else(|| Error::Config("missing g1 in generator truth".into()))?;
    let alpha2 = sim
        .truth
        .aux
        .get("alpha2")
        .ok_or_else(|| Error::Config("missing alpha2 in generator truth".into()))?;
    let delta = sim
        .truth
        .aux
        .get("delta")
        .ok_or_else(|| Error::Config("missing delta in generator truth".into()))?;
    let p = sim.truth.theta0.len();
    let x = sim.data.block("x", p - 1)?;
    let alpha1 = sim.truth.theta0.slice(ndarray::s![0..p - 1]).to_owned();
    let mut worst: f64 = 0.0;
    for i in 0..sim.data.n_rows() {
        let i1 = x.row(i).dot(&alpha1);
        let i2 = x.row(i).dot(alpha2);
        let r1 = (g1[i] - logistic(i1 + g2[i] * delta[0])).abs();
        let r2 = (g2[i] - logistic(i2 + g1[i] * delta[1])).abs();
        worst = worst.max(r1).max(r2);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn partially_linear_noise_and_column_sanity() {
        let mut cfg = DgpConfig::desk(Model::PartiallyLinear);
        cfg.n = 4000;
        let sim = generate(&cfg, 0).unwrap();
        let n = sim.data.n_rows() as f64;
        // empirical var(tau | u) should be close to sigma_eta^2 = 1
        let tau = sim.data.column("tau").unwrap();
        let h0 = &sim.truth.nuisance[&NuisanceRole::CondTreatment];
        let resid: Vec<f64> = (0..cfg.n).map(|i| tau[i] - h0[i]).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.15, "var(tau|u) = {var}");
        // column means of u within 3 sigma / sqrt(n) of zero
        for j in [1usize, 7, 50] {
            let col = sim.data.column(&format!("u_{j}")).unwrap();
            let mean = col.sum() / n;
            assert!(mean.abs() < 3.0 / n.sqrt() * 1.5, "u_{j} mean {mean}");
        }
    }

    #[test]
    fn partially_linear_noiseless_degenerate_case() {
        let mut cfg = DgpConfig::desk(Model::PartiallyLinear);
        cfg.n = 300;
        cfg.p = 10;
        cfg.d_u = 10;
        cfg.sigma_eps = 0.0;
        cfg.k_alpha = 0;
        cfg.k_beta = 0;
        let sim = generate(&cfg, 3).unwrap();
        // y = tau x'theta exactly
        let y = sim.data.column("y").unwrap();
        let tau = sim.data.column("tau").unwrap();
        for i in 0..cfg.n {
            let mut x_theta = sim.truth.theta0[0];
            for j in 1..cfg.p {
                x_theta +=
                    sim.truth.theta0[j] * sim.data.column(&format!("u_{j}")).unwrap()[i];
            }
            assert_abs_diff_eq!(y[i], tau[i] * x_theta, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_data_rate_in_sane_band_and_sparse_heterogeneity() {
        let cfg = DgpConfig::desk(Model::MissingData);
        let sim = generate(&cfg, 1).unwrap();
        let d = sim.data.column("d").unwrap();
        let rate = d.sum() / cfg.n as f64;
        assert!(rate > 0.2 && rate < 0.8, "missingness rate {rate}");
        // heterogeneity coefficients vanish off the theta support
        let a1 = &sim.truth.aux["a1_row0"];
        assert!(a1.iter().take(cfg.k_alpha).all(|&v| (1.0..2.0).contains(&v)));
        assert!(a1.iter().skip(cfg.k_alpha).all(|&v| v == 0.0));
    }

    #[test]
    fn missing_data_flat_presence_when_eta_vanishes() {
        let mut cfg = DgpConfig::desk(Model::MissingData);
        cfg.sigma_eta = 0.0;
        cfg.n = 500;
        let sim = generate(&cfg, 2).unwrap();
        let p0 = &sim.truth.nuisance[&NuisanceRole::Propensity];
        assert!(p0.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn games_decoupled_matches_closed_form() {
        let mut cfg = DgpConfig::desk(Model::Games);
        cfg.n = 200;
        cfg.p = 6;
        cfg.d_u = 5;
        cfg.games_variant = GamesVariant::Decoupled;
        let sim = generate(&cfg, 0).unwrap();
        let x = sim.data.block("x", 5).unwrap();
        let alpha2 = &sim.truth.aux["alpha2"];
        let g2 = &sim.truth.nuisance[&NuisanceRole::OpponentBelief];
        for i in 0..cfg.n {
            assert_abs_diff_eq!(g2[i], logistic(x.row(i).dot(alpha2)), epsilon = 1e-14);
        }
    }

    #[test]
    fn games_equilibrium_residual_is_tiny_and_contraction_bound_holds() {
        let mut cfg = DgpConfig::desk(Model::Games);
        cfg.n = 300;
        cfg.p = 8;
        cfg.d_u = 7;
        cfg.games_variant = GamesVariant::Equilibrium;
        let sim = generate(&cfg, 5).unwrap();
        assert!(equilibrium_residual(&sim).unwrap() < 1e-10);
        // |dg_i / dg_{-i}| = |delta_i| L' <= |delta_i| / 4 <= 0.75
        assert!(cfg.delta1.abs() / 4.0 <= 0.75 + 1e-12);
        assert!(cfg.delta2.abs() / 4.0 <= 0.75 + 1e-12);
    }

    #[test]
    fn games_zero_interaction_decouples_both_players() {
        let mut cfg = DgpConfig::desk(Model::Games);
        cfg.n = 100;
        cfg.p = 4;
        cfg.delta1 = 0.0;
        cfg.delta2 = 0.0;
        cfg.games_variant = GamesVariant::Equilibrium;
        let sim = generate(&cfg, 0).unwrap();
        let x = sim.data.block("x", 3).unwrap();
        let alpha1 = sim.truth.theta0.slice(ndarray::s![0..3]).to_owned();
        let g1 = &sim.truth.aux["g1"];
        for i in 0..cfg.n {
            assert_abs_diff_eq!(g1[i], logistic(x.row(i).dot(&alpha1)), epsilon = 1e-12);
        }
    }

    #[test]
    fn logistic_te_class_balance_and_null_model() {
        let cfg = DgpConfig::desk(Model::LogisticTe);
        let sim = generate(&cfg, 0).unwrap();
        let y = sim.data.column("y").unwrap();
        let rate = y.sum() / cfg.n as f64;
        assert!(rate > 0.3 && rate < 0.7, "class balance {rate}");

        let mut null_cfg = cfg.clone();
        null_cfg.k = 0;
        null_cfg.k_alpha = 0;
        null_cfg.n = 4000;
        let null = generate(&null_cfg, 1).unwrap();
        let y = null.data.column("y").unwrap();
        let rate = y.sum() / null_cfg.n as f64;
        assert!((rate - 0.5).abs() < 0.03, "null-model rate {rate}");
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_replication() {
        let cfg = DgpConfig::desk(Model::MissingData);
        let a = generate(&cfg, 7).unwrap();
        let b = generate(&cfg, 7).unwrap();
        let c = generate(&cfg, 8).unwrap();
        let ya = a.data.column("y").unwrap();
        let yb = b.data.column("y").unwrap();
        let yc = c.data.column("y").unwrap();
        assert_eq!(ya, yb);
        assert_ne!(ya, yc);
    }
}
