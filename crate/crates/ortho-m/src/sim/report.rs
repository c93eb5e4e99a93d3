//! Aggregates of a replication report: per-method quantiles and pairwise
//! error decreases, serialized as the JSON summary next to the CSV.

use super::replicate::{median_sorted, ReplicationReport};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    fn from_values(values: &[f64]) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in errors"));
        let at = |q: f64| -> f64 {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        };
        Some(Quantiles {
            min: sorted[0],
            q25: at(0.25),
            median: median_sorted(&sorted),
            q75: at(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub l2: Quantiles,
    pub l1: Quantiles,
}

/// Distribution of per-seed error differences `method - reference`; negative
/// medians mean `method` is more accurate.
#[derive(Debug, Clone, Serialize)]
pub struct PairwiseDecrease {
    pub method: String,
    pub reference: String,
    pub seeds: usize,
    pub l2_difference: Quantiles,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub model: String,
    pub methods: Vec<MethodSummary>,
    pub pairwise: Vec<PairwiseDecrease>,
    pub failures: usize,
}

impl Summary {
    pub fn from_report(report: &ReplicationReport) -> Summary {
        // preserve first-appearance order of methods
        let mut order: Vec<String> = Vec::new();
        let mut l1: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut l2_by_seed: BTreeMap<&str, BTreeMap<u64, f64>> = BTreeMap::new();
        for r in &report.records {
            if !order.iter().any(|m| m == &r.method) {
                order.push(r.method.clone());
            }
            l1.entry(&r.method).or_default().push(r.l1_error);
            l2_by_seed.entry(&r.method).or_default().insert(r.seed, r.l2_error);
        }

        let methods: Vec<MethodSummary> = order
            .iter()
            .filter_map(|m| {
                let l2_vals: Vec<f64> =
                    l2_by_seed.get(m.as_str())?.values().copied().collect();
                Some(MethodSummary {
                    method: m.clone(),
                    runs: l2_vals.len(),
                    l2: Quantiles::from_values(&l2_vals)?,
                    l1: Quantiles::from_values(l1.get(m.as_str())?)?,
                })
            })
            .collect();

        let mut pairwise = Vec::new();
        for a in &order {
            for b in &order {
                if a == b {
                    continue;
                }
                let (sa, sb) = (&l2_by_seed[a.as_str()], &l2_by_seed[b.as_str()]);
                let diffs: Vec<f64> = sa
                    .iter()
                    .filter_map(|(seed, ea)| sb.get(seed).map(|eb| ea - eb))
                    .collect();
                if let Some(q) = Quantiles::from_values(&diffs) {
                    pairwise.push(PairwiseDecrease {
                        method: a.clone(),
                        reference: b.clone(),
                        seeds: diffs.len(),
                        l2_difference: q,
                    });
                }
            }
        }

        Summary {
            model: report.model.clone(),
            methods,
            pairwise,
            failures: report.failures.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::replicate::RunRecord;

    fn record(seed: u64, method: &str, l2: f64) -> RunRecord {
        RunRecord {
            seed,
            method: method.into(),
            l1_error: 2.0 * l2,
            l2_error: l2,
            support_size: 1,
            wall_ms: 0,
        }
    }

    #[test]
    fn aggregates_are_recomputable_from_records() {
        let report = ReplicationReport {
            model: "plr".into(),
            records: vec![
                record(0, "a", 1.0),
                record(0, "b", 2.0),
                record(1, "a", 3.0),
                record(1, "b", 1.0),
                record(2, "a", 2.0),
                record(2, "b", 4.0),
            ],
            failures: vec![],
        };
        let s = report.summary();
        assert_eq!(s.methods.len(), 2);
        assert_eq!(s.methods[0].method, "a");
        assert_eq!(s.methods[0].l2.median, 2.0);
        assert_eq!(s.methods[0].l2.min, 1.0);
        assert_eq!(s.methods[0].l2.max, 3.0);
        // a - b differences per seed: -1, 2, -2 -> median -1
        let ab = s
            .pairwise
            .iter()
            .find(|p| p.method == "a" && p.reference == "b")
            .unwrap();
        assert_eq!(ab.l2_difference.median, -1.0);
        assert_eq!(ab.seeds, 3);
    }
}
