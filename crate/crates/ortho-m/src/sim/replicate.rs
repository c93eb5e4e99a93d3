//! Replication loop: fresh data per seed, every method on the same data,
//! deterministic aggregation.

use super::baselines::{run_method, Method};
use super::dgp::generate;
use super::report::Summary;
use super::DgpConfig;
use crate::apps::Model;
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// One estimator on one replication.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: String,
    pub l1_error: f64,
    pub l2_error: f64,
    pub support_size: usize,
    /// Wall-clock milliseconds when timing was requested; 0 otherwise so
    /// that report files are byte-identical across reruns.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub method: String,
    pub message: String,
}

/// Per-seed, per-method error table plus aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationReport {
    pub model: String,
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailureRecord>,
}

impl ReplicationReport {
    /// The fixed-order CSV: seed, method, l1_error, l2_error, support_size,
    /// wall_ms. Floats print in shortest round-trip form.
    pub fn csv_bytes(&self) -> Vec<u8> {
        let mut out = String::from("seed,method,l1_error,l2_error,support_size,wall_ms\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.seed, r.method, r.l1_error, r.l2_error, r.support_size, r.wall_ms
            ));
        }
        out.into_bytes()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.csv_bytes())?;
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        Summary::from_report(self)
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &self.summary())?;
        Ok(())
    }

    /// l2 errors of one method across seeds, in seed order.
    pub fn method_l2(&self, label: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.method == label).map(|r| r.l2_error).collect()
    }

    pub fn median_l2(&self, label: &str) -> Option<f64> {
        let mut v = self.method_l2(label);
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("NaN error"));
        Some(median_sorted(&v))
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs `methods` over `cfg.n_replications` fresh datasets. Failures are
/// recorded per (seed, method) and do not abort the loop. Replications run
/// in parallel; the output ordering is by seed then by the given method
/// order, independent of scheduling.
pub fn run_replications(
    cfg: &DgpConfig,
    methods: &[Method],
    est: &EstimatorConfig,
    record_timing: bool,
) -> Result<ReplicationReport> {
    if methods.is_empty() {
        return Err(Error::Config("method list must be nonempty".into()));
    }
    let model = cfg.model()?;
    for m in methods {
        // surface unsupported combinations before spending compute
        if matches!(m, Method::Naive | Method::OracleNaive)
            && !matches!(model, Model::MissingData | Model::Games)
        {
            return Err(Error::Config(format!(
                "method '{}' is not defined for model '{}'",
                m.label(model),
                model.id()
            )));
        }
    }

    let per_rep: Vec<(Vec<RunRecord>, Vec<FailureRecord>)> = (0..cfg.n_replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let mut est_rep = est.clone();
            est_rep.replication = rep;
            match generate(cfg, rep) {
                Ok(sim) => {
                    for &method in methods {
                        let start = std::time::Instant::now();
                        match run_method(&sim, model, method, &est_rep) {
                            Ok(result) => {
                                let metrics =
                                    result.metrics.as_ref().expect("truth metrics attached");
                                records.push(RunRecord {
                                    seed: rep,
                                    method: method.label(model).to_string(),
                                    l1_error: metrics.l1_error,
                                    l2_error: metrics.l2_error,
                                    support_size: result.support.len(),
                                    wall_ms: if record_timing {
                                        start.elapsed().as_millis() as u64
                                    } else {
                                        0
                                    },
                                });
                            }
                            Err(e) => failures.push(FailureRecord {
                                seed: rep,
                                method: method.label(model).to_string(),
                                message: e.to_string(),
                            }),
                        }
                    }
                }
                Err(e) => failures.push(FailureRecord {
                    seed: rep,
                    method: "<generate>".to_string(),
                    message: e.to_string(),
                }),
            }
            (records, failures)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_rep {
        records.extend(r);
        failures.extend(f);
    }
    Ok(ReplicationReport { model: model.id().to_string(), records, failures })
}
