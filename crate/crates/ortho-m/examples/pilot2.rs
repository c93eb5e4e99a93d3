// Deep-dive: one games DGP1 replication, per-coordinate error anatomy.

use ortho_m::apps::Model;
use ortho_m::estimators::EstimatorConfig;
use ortho_m::first_stage::{build_nuisance, FoldPlan, NuisanceRole};
use ortho_m::sim::{generate, run_method, DgpConfig, Method};

fn main() {
    let mut cfg = DgpConfig::desk(Model::Games);
    cfg.games_variant = ortho_m::sim::GamesVariant::parse("dgp1").unwrap();
    let est = EstimatorConfig::default();
    for rep in [0u64, 1, 2] {
        let sim = generate(&cfg, rep).unwrap();
        let folds = FoldPlan::with_replication(sim.data.n_rows(), 2, 0, rep).unwrap();
        let nuis = build_nuisance(&sim.data, Model::Games, &folds, &est.first_stage).unwrap();
        let g_hat = nuis.column(NuisanceRole::OpponentBelief).unwrap();
        let g0 = &sim.truth.nuisance[&NuisanceRole::OpponentBelief];
        let n = sim.data.n_rows();
        let rms = ((g_hat - g0).dot(&(g_hat - g0)) / n as f64).sqrt();
        let bias: f64 = (g_hat - g0).sum() / n as f64;
        let h_hat = nuis.column(NuisanceRole::CorrectionH).unwrap();
        let h0 = &sim.truth.nuisance[&NuisanceRole::CorrectionH];
        let h_rms = ((h_hat - h0).dot(&(h_hat - h0)) / n as f64).sqrt();
        println!("rep {rep}: g_hat RMS err {rms:.4} mean bias {bias:.4} | h RMS err {h_rms:.4}");
        let p = sim.truth.theta0.len();
        for method in [Method::OracleNaive, Method::Naive, Method::Ortho] {
            let r = run_method(&sim, Model::Games, method, &est).unwrap();
            let nu: Vec<f64> = r.theta_hat.iter().zip(sim.truth.theta0.iter()).map(|(a, b)| a - b).collect();
            let err_alpha1 = nu[0].abs();
            let err_delta = nu[p - 1].abs();
            let err_rest: f64 = nu[1..p - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
            println!(
                "  {:10} l2={:.3} |err alpha1|={:.3} |err delta|={:.3} rest={:.3} supp={}",
                method.label(Model::Games),
                r.metrics.as_ref().unwrap().l2_error,
                err_alpha1,
                err_delta,
                err_rest,
                r.support.len()
            );
        }
    }
}
