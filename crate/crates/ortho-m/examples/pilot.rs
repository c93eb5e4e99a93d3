// Scratch pilot: shape/rate/sensitivity/cone/ordering checks at reduced reps.

use ndarray::Array1;
use ortho_m::apps::Model;
use ortho_m::estimators::{algorithm1, EstimatorConfig, LambdaRule, make_penalty_plan};
use ortho_m::first_stage::{build_nuisance_on_fold, FoldPlan, NuisanceFit, NuisanceRole};
use ortho_m::sim::{generate, run_method, run_replications, run_with_nuisance, DgpConfig, Method};
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let reps: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(20);

    // ---- criterion 6: figure shape (plr) ----
    if which == "all" || which == "c6" {
        let t = Instant::now();
        let mut medians_direct = Vec::new();
        let mut medians_ortho = Vec::new();
        let mut medians_split = Vec::new();
        for k_alpha in [1usize, 5, 10, 20] {
            let mut cfg = DgpConfig::desk(Model::PartiallyLinear);
            cfg.k_alpha = k_alpha;
            cfg.k_beta = k_alpha;
            cfg.n_replications = reps;
            let report = run_replications(
                &cfg,
                &[Method::Direct, Method::Ortho, Method::OrthoSplit],
                &EstimatorConfig::default(),
                false,
            )
            .unwrap();
            medians_direct.push(report.median_l2("direct").unwrap());
            medians_ortho.push(report.median_l2("ortho").unwrap());
            medians_split.push(report.median_l2("ortho-split").unwrap());
        }
        println!("c6 direct medians: {medians_direct:?}");
        println!("c6 ortho  medians: {medians_ortho:?}");
        println!("c6 split  medians: {medians_split:?} ({:.0}s)", t.elapsed().as_secs_f64());
    }

    // ---- criterion 9: oracle rate scaling (plr) ----
    if which == "all" || which == "c9" {
        let t = Instant::now();
        let mut meds = Vec::new();
        for n in [1000usize, 2000, 4000] {
            let mut cfg = DgpConfig::desk(Model::PartiallyLinear);
            cfg.n = n;
            cfg.n_replications = reps.max(40);
            let report = run_replications(
                &cfg,
                &[Method::OracleOrtho],
                &EstimatorConfig::default(),
                false,
            )
            .unwrap();
            meds.push(report.median_l2("oracle-ortho").unwrap());
        }
        println!(
            "c9 oracle medians: {meds:?} ratios: [{:.3}, {:.3}] ({:.0}s)",
            meds[0] / meds[1],
            meds[1] / meds[2],
            t.elapsed().as_secs_f64()
        );
    }

    // ---- criterion 10: sensitivity slopes (missing, injection) ----
    if which == "all" || which == "c10" {
        let t = Instant::now();
        let mut cfg = DgpConfig::desk(Model::MissingData);
        cfg.n = 40_000;
        cfg.sigma_x = 1.0;
        cfg.sigma_u = 1.0;
        cfg.sigma_eta = 0.3;
        cfg.sigma_eps = 0.25;
        let eps_grid = [0.05, 0.1, 0.2, 0.4];
        let mut med_ortho = Vec::new();
        let mut med_ips = Vec::new();
        for &eps in &eps_grid {
            let mut errs_o = Vec::new();
            let mut errs_i = Vec::new();
            for rep in 0..reps as u64 {
                let sim = generate(&cfg, rep).unwrap();
                let n = sim.data.n_rows();
                let truth = NuisanceFit::from_truth(n, sim.truth.nuisance.clone()).unwrap();
                let x1 = sim.data.column("x_1").unwrap();
                let u1 = sim.data.column("u_1").unwrap();
                let p0 = truth.column(NuisanceRole::Propensity).unwrap();
                let h0 = truth.column(NuisanceRole::CorrectionH).unwrap();
                let dp = Array1::from_iter(
                    (0..n).map(|i| 0.4 * ((x1[i] + u1[i]) * 0.5).tanh() + 0.08),
                );
                let p_target = (p0 + &dp).mapv(|v: f64| v.clamp(0.02, 0.98));
                let h_target = h0 * 2.0
                    + &Array1::from_iter(
                        (0..n).map(|i| 50.0 * ((x1[i] + u1[i]) * 0.5).tanh() + 16.0),
                    );
                let p_eps = p0 + &((&p_target - p0) * eps);
                let h_eps = h0 + &((&h_target - h0) * eps);
                let perturbed = truth
                    .clone()
                    .with_column(NuisanceRole::Propensity, p_eps)
                    .unwrap()
                    .with_column(NuisanceRole::CorrectionH, h_eps)
                    .unwrap();
                let est = EstimatorConfig::default();
                let o = run_with_nuisance(&sim.data, Model::MissingData, &perturbed, &est, true)
                    .unwrap()
                    .with_truth(&sim.truth.theta0);
                let i = run_with_nuisance(&sim.data, Model::MissingData, &perturbed, &est, false)
                    .unwrap()
                    .with_truth(&sim.truth.theta0);
                errs_o.push(o.metrics.unwrap().l2_error);
                errs_i.push(i.metrics.unwrap().l2_error);
            }
            med_ortho.push(median(errs_o));
            med_ips.push(median(errs_i));
        }
        let lx: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
        let lo: Vec<f64> = med_ortho.iter().map(|e| e.ln()).collect();
        let li: Vec<f64> = med_ips.iter().map(|e| e.ln()).collect();
        println!("c10 ortho medians: {med_ortho:?} slope {:.3}", ols_slope(&lx, &lo));
        println!("c10 ips   medians: {med_ips:?} slope {:.3} ({:.0}s)", ols_slope(&lx, &li), t.elapsed().as_secs_f64());
    }

    // ---- criterion 4/5: cone membership on qualifying seeds ----
    if which == "all" || which == "c4" {
        let t = Instant::now();
        let cfg = DgpConfig::desk(Model::PartiallyLinear);
        let mut qualifying = 0;
        let mut cone_ok = 0;
        let mut l12_ok = 0;
        for rep in 0..reps as u64 {
            let sim = generate(&cfg, rep).unwrap();
            let mut est = EstimatorConfig::default();
            est.lambda = LambdaRule::Theorem;
            est.replication = rep;
            let folds = FoldPlan::with_replication(sim.data.n_rows(), 2, est.seed, rep).unwrap();
            let nuisance = build_nuisance_on_fold(&sim.data, Model::PartiallyLinear, &folds, 1, &est.first_stage).unwrap();
            let est_rows = folds.fold_indices(0);
            let est_data = sim.data.select_rows(&est_rows);
            let est_nuis = nuisance.restrict_rows(&est_rows).unwrap();
            let loss = Model::PartiallyLinear.loss(&est_data, &est_nuis, true).unwrap();
            let g_n = nuisance.max_disagreement().unwrap_or(0.0);
            let mut inputs = est.plan.clone();
            inputs.g_n = Some(g_n);
            let plan = make_penalty_plan(est_rows.len(), cfg.p, &inputs).unwrap();
            let grad0 = loss.gradient(&sim.truth.theta0);
            let sup = grad0.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let result = algorithm1(&sim.data, Model::PartiallyLinear, &folds, &est)
                .unwrap()
                .with_truth(&sim.truth.theta0);
            if rep < 8 {
                println!("  rep {rep}: sup={sup:.4} lam/2={:.4} g_est={g_n:.4}", plan.lambda_main / 2.0);
            }
            if plan.lambda_main / 2.0 >= sup {
                qualifying += 1;
                let cone = result.cone.as_ref().unwrap();
                if cone.nu_off_support_l1 <= 3.0 * cone.nu_on_support_l1 + 1e-6 {
                    cone_ok += 1;
                }
                let m = result.metrics.as_ref().unwrap();
                if m.l1_error <= 4.0 * (cfg.k as f64).sqrt() * m.l2_error + 1e-6 {
                    l12_ok += 1;
                }
            }
        }
        println!("c4 qualifying {qualifying}/{reps}, cone ok {cone_ok}, l1/l2 ok {l12_ok} ({:.0}s)", t.elapsed().as_secs_f64());
    }

    // ---- criterion 8: games ordering ----
    if which == "all" || which == "c8" {
        let fs_lambda: f64 = std::env::args().nth(3).and_then(|a| a.parse().ok()).unwrap_or(0.0);
        for variant in ["dgp1", "dgp2"] {
            let t = Instant::now();
            let mut cfg = DgpConfig::desk(Model::Games);
            cfg.games_variant = ortho_m::sim::GamesVariant::parse(variant).unwrap();
            cfg.n_replications = reps;
            let mut est = EstimatorConfig::default();
            {
                if fs_lambda > 0.0 {
                    est.lambda = ortho_m::estimators::LambdaRule::Manual(fs_lambda);
                }
            }
            let report = run_replications(
                &cfg,
                &[Method::OracleNaive, Method::Naive, Method::Ortho],
                &est,
                false,
            )
            .unwrap();
            println!(
                "c8 {variant}: oracle-lg {:?} 2slg {:?} 2sortho-lg {:?} failures {} ({:.0}s)",
                report.median_l2("oracle-lg"),
                report.median_l2("2slg"),
                report.median_l2("2sortho-lg"),
                report.failures.len(),
                t.elapsed().as_secs_f64()
            );
        }
    }
}
