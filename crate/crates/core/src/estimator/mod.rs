//! Simulation-free energy estimation and validation against the oracle.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchgen::Microbenchmark;
use crate::error::Result;
use crate::modelfit::EnergyModel;
use crate::refsim::Oracle;
use crate::statetrace::{abstract_trace, component_class, StateCountVector, Trace};

/// Oracle totals below this are treated as numerical noise by [`validate`].
pub const MIN_TRUTH_PJ: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub total: f64,
    /// Per key family (`cpu`, `noc`, `bus`, `sync`, ...) plus `static`.
    pub breakdown: BTreeMap<String, f64>,
    /// Per model-state key.
    pub contributions: BTreeMap<String, f64>,
    /// Fraction of mapped events whose key had a constant or reducer.
    pub coverage: f64,
    pub missing: Vec<String>,
}

/// Energy of a count vector under `model`.
pub fn evaluate(counts: &StateCountVector, model: &EnergyModel) -> EnergyEstimate {
    let mut contributions = BTreeMap::new();
    let mut missing = Vec::new();
    let (mut covered, mut mapped) = (0u64, 0u64);
    for (key, &n) in &counts.counts {
        let tally = counts.event_tally.get(key).copied().unwrap_or(n);
        mapped += tally;
        match model.key_energy(key) {
            Some(e) => {
                covered += tally;
                contributions.insert(key.clone(), e * n as f64);
            }
            None => missing.push(key.clone()),
        }
    }
    let mut breakdown: BTreeMap<String, f64> = BTreeMap::new();
    for (k, v) in &contributions {
        let family = component_class(k.split('/').next().unwrap_or(k));
        *breakdown.entry(family.to_string()).or_default() += v;
    }
    breakdown.insert("static".into(), counts.duration as f64 * model.static_per_cycle());
    let total = breakdown.values().sum();
    EnergyEstimate {
        total,
        breakdown,
        contributions,
        coverage: if mapped == 0 { 1.0 } else { covered as f64 / mapped as f64 },
        missing,
    }
}

/// Maps `trace` through the model function and evaluates it.
pub fn estimate(trace: &Trace, model: &EnergyModel) -> Result<EnergyEstimate> {
    Ok(evaluate(&abstract_trace(trace, &model.function)?, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub benchmark: String,
    pub truth_pj: f64,
    pub estimate_pj: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    /// Benchmarks whose oracle total was below [`MIN_TRUTH_PJ`].
    pub excluded: Vec<String>,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
}

impl ErrorReport {
    pub fn from_rows(rows: Vec<ErrorRow>, excluded: Vec<String>) -> Self {
        let mean_rel_error = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.rel_error).sum::<f64>() / rows.len() as f64
        };
        let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
        Self {
            rows,
            excluded,
            mean_rel_error,
            max_rel_error,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("benchmark,truth_pJ,estimate_pJ,rel_error\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.benchmark, r.truth_pj, r.estimate_pj, r.rel_error));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "benchmarks": self.rows.len(),
            "excluded": self.excluded,
            "mean_rel_error": self.mean_rel_error,
            "max_rel_error": self.max_rel_error,
        }))
        .expect("summary serializes")
    }
}

/// Runs every benchmark on the oracle and through `model`. Runs in the
/// current rayon pool; results keep the benchmark order.
pub fn validate(model: &EnergyModel, benchmarks: &[Microbenchmark], oracle: &Oracle) -> Result<ErrorReport> {
    let pairs: Vec<(String, f64, f64)> = benchmarks
        .par_iter()
        .map(|b| {
            let (trace, ledger) = oracle.run(&b.program)?;
            Ok((b.name.clone(), ledger.total(), estimate(&trace, model)?.total))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (benchmark, truth_pj, estimate_pj) in pairs {
        if truth_pj.abs() < MIN_TRUTH_PJ {
            log::warn!("{benchmark}: oracle total {truth_pj} pJ excluded from validation");
            excluded.push(benchmark);
            continue;
        }
        rows.push(ErrorRow {
            rel_error: (estimate_pj - truth_pj).abs() / truth_pj,
            benchmark,
            truth_pj,
            estimate_pj,
        });
    }
    Ok(ErrorReport::from_rows(rows, excluded))
}
