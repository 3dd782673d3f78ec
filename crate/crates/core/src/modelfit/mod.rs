//! Fitting energy models to oracle measurements.
//!
//! [`fit_constants`] correlates state-count vectors with measured totals by
//! least squares; [`fit_linear`] and [`fit_staircase`] fit packet-size
//! functions; [`reduce_noc_model`] and [`reduce_packet_sizes`] shrink a fitted
//! model by re-keying or replacing key families with parametric reducers.

pub mod lsq;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::evaluate;
use crate::refsim::manhattan_dist;
use crate::statetrace::builtin::{NOC_HOP_TEMPLATE, NOC_PAIR_TEMPLATE};
use crate::statetrace::{AbstractionLevel, Emit, ModelFunction, Stage, State, StateCountVector, Template};
use crate::sysconfig::ClusterCoord;

/// Agreement required between constants merged by a reduction, in pJ.
pub const REDUCTION_TOL: f64 = 1e-9;

/// One measured benchmark in the state space of a model function.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub name: String,
    pub counts: StateCountVector,
    pub measured: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReducerKind {
    Linear,
    Staircase,
}

/// A fitted function replacing every key `{family}/{variable}:{value}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reducer {
    pub kind: ReducerKind,
    pub family: String,
    pub variable: String,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flit_bytes: Option<u32>,
}

impl Reducer {
    /// The reducer's input value if `key` belongs to its family.
    pub fn input(&self, key: &str) -> Option<u32> {
        let rest = key.strip_prefix(self.family.as_str())?.strip_prefix('/')?;
        rest.strip_prefix(self.variable.as_str())?.strip_prefix(':')?.parse().ok()
    }

    /// Energy of one occurrence with input `x`.
    pub fn eval(&self, x: u32) -> f64 {
        match self.kind {
            ReducerKind::Linear => self.a + self.b * f64::from(x),
            ReducerKind::Staircase => {
                let flit = self.flit_bytes.unwrap_or(1).max(1);
                self.a + self.b * f64::from(x.div_ceil(flit))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Set by the caller (the library never reads the clock).
    #[serde(default)]
    pub fit_date: Option<String>,
    pub observations: usize,
    pub rank_deficient: bool,
    /// Some constant came out negative; kept as fitted.
    pub signed_constants: bool,
}

/// State space, model function and fitted constants (pJ per occurrence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub level: AbstractionLevel,
    pub function_ref: String,
    pub function: ModelFunction,
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub reducers: Vec<Reducer>,
    #[serde(rename = "static_power_pW")]
    pub static_power_pw: f64,
    pub clock_hz: f64,
    /// Mean over data patterns for keys with a `p:` field.
    #[serde(default)]
    pub pattern_means: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

impl EnergyModel {
    /// Static energy per cycle in pJ.
    pub fn static_per_cycle(&self) -> f64 {
        if self.clock_hz > 0.0 {
            self.static_power_pw / self.clock_hz
        } else {
            0.0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::syntax("energy model", &e))
    }

    /// Energy of one occurrence of `key`: its constant, else the first
    /// reducer whose family covers it.
    pub fn key_energy(&self, key: &str) -> Option<f64> {
        self.constants
            .get(key)
            .copied()
            .or_else(|| self.reducers.iter().find_map(|r| r.input(key).map(|x| r.eval(x))))
    }

    /// Number of keys plus reducers.
    pub fn size(&self) -> usize {
        self.constants.len() + self.reducers.len()
    }

    fn refresh_means(&mut self) {
        self.pattern_means = pattern_means(&self.constants);
    }
}

/// Averages constants that differ only in their `p:` field.
pub fn pattern_means(constants: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for (k, v) in constants {
        if !k.split('/').any(|s| s.starts_with("p:")) {
            continue;
        }
        let rest: Vec<&str> = k.split('/').filter(|s| !s.starts_with("p:")).collect();
        let e = acc.entry(rest.join("/")).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / f64::from(n))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub names: Vec<String>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `measured - predicted` per observation.
    pub residuals: Vec<f64>,
    pub max_abs_error: f64,
    pub mean_rel_error: f64,
    pub columns: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    pub negative_keys: Vec<String>,
}

impl FitReport {
    fn new(names: Vec<String>, measured: Vec<f64>, predicted: Vec<f64>, columns: usize, rank: usize) -> Self {
        let residuals: Vec<f64> = measured.iter().zip(&predicted).map(|(m, p)| m - p).collect();
        let max_abs_error = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
        let rel: Vec<f64> = measured
            .iter()
            .zip(&residuals)
            .filter(|(m, _)| **m != 0.0)
            .map(|(m, r)| (r / m).abs())
            .collect();
        let mean_rel_error = if rel.is_empty() { 0.0 } else { rel.iter().sum::<f64>() / rel.len() as f64 };
        Self {
            names,
            measured,
            predicted,
            residuals,
            max_abs_error,
            mean_rel_error,
            columns,
            rank,
            rank_deficient: rank < columns,
            negative_keys: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("observation,measured_pj,predicted_pj,residual_pj\n");
        for i in 0..self.names.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.names[i], self.measured[i], self.predicted[i], self.residuals[i]
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "observations": self.names.len(),
            "max_abs_error_pj": self.max_abs_error,
            "mean_rel_error": self.mean_rel_error,
            "columns": self.columns,
            "rank": self.rank,
            "rank_deficient": self.rank_deficient,
            "negative_keys": self.negative_keys,
        })
        .to_string()
    }
}

/// Least-squares constants for every observed key, plus a static-power term
/// (one column holding the observation duration) when `clock_hz` is given.
pub fn fit_constants(
    observations: &[Observation],
    function: &ModelFunction,
    clock_hz: Option<f64>,
) -> Result<(EnergyModel, FitReport)> {
    if observations.is_empty() {
        return Err(Error::invalid("observations", "need at least one observation"));
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for o in observations {
        for (k, &c) in &o.counts.counts {
            if c > 0 {
                index.entry(k.as_str()).or_insert(0);
            }
        }
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let static_col = clock_hz.map(|_| index.len());
    let n = index.len() + usize::from(static_col.is_some());
    let rows: Vec<lsq::SparseRow> = observations
        .iter()
        .map(|o| {
            let mut row: lsq::SparseRow = o
                .counts
                .counts
                .iter()
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (index[k.as_str()], c as f64))
                .collect();
            if let Some(s) = static_col {
                row.push((s, o.counts.duration as f64));
            }
            row
        })
        .collect();
    let b: Vec<f64> = observations.iter().map(|o| o.measured).collect();
    let sol = lsq::solve(n, &rows, &b);
    if sol.rank_deficient() {
        log::warn!("fit `{}`: rank {} of {} columns, minimum-norm solution", function.name, sol.rank, n);
    }
    let constants: BTreeMap<String, f64> = index.iter().map(|(k, &i)| (k.to_string(), sol.x[i])).collect();
    let per_cycle = static_col.map_or(0.0, |s| sol.x[s]);
    let negative_keys: Vec<String> = constants.iter().filter(|(_, v)| **v < 0.0).map(|(k, _)| k.clone()).collect();
    let mut model = EnergyModel {
        level: function.level,
        function_ref: function.name.clone(),
        function: function.clone(),
        constants,
        reducers: Vec::new(),
        static_power_pw: per_cycle * clock_hz.unwrap_or(0.0),
        clock_hz: clock_hz.unwrap_or(0.0),
        pattern_means: BTreeMap::new(),
        provenance: Provenance {
            fit_date: None,
            observations: observations.len(),
            rank_deficient: sol.rank_deficient(),
            signed_constants: !negative_keys.is_empty() || per_cycle < 0.0,
        },
    };
    model.refresh_means();
    let mut report = report_for(&model, observations, n, sol.rank);
    report.negative_keys = negative_keys;
    Ok((model, report))
}

/// Residuals of `model` on `observations`.
pub fn report_for(model: &EnergyModel, observations: &[Observation], columns: usize, rank: usize) -> FitReport {
    FitReport::new(
        observations.iter().map(|o| o.name.clone()).collect(),
        observations.iter().map(|o| o.measured).collect(),
        observations.iter().map(|o| evaluate(&o.counts, model).total).collect(),
        columns,
        rank,
    )
}

fn fit_affine(
    fit_points: &[(f64, f64)],
    eval_points: &[(f64, f64)],
    x: impl Fn(f64) -> f64,
    what: &str,
) -> Result<(f64, f64, FitReport)> {
    let xs: Vec<f64> = fit_points.iter().map(|p| x(p.0)).collect();
    if xs.iter().all(|v| *v == xs[0]) || fit_points.len() < 2 {
        return Err(Error::Underdetermined(format!("{what} fit needs two distinct inputs")));
    }
    let rows: Vec<lsq::SparseRow> = xs.iter().map(|&v| vec![(0, 1.0), (1, v)]).collect();
    let b: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
    let sol = lsq::solve(2, &rows, &b);
    let (a, slope) = (sol.x[0], sol.x[1]);
    let eval = if eval_points.is_empty() { fit_points } else { eval_points };
    let report = FitReport::new(
        eval.iter().map(|p| format!("{}", p.0)).collect(),
        eval.iter().map(|p| p.1).collect(),
        eval.iter().map(|p| a + slope * x(p.0)).collect(),
        2,
        sol.rank,
    );
    Ok((a, slope, report))
}

/// `E(s) = a + b·s` fitted on `fit_points`; errors reported over
/// `eval_points` (or the fit points when empty).
pub fn fit_linear(fit_points: &[(f64, f64)], eval_points: &[(f64, f64)]) -> Result<(f64, f64, FitReport)> {
    fit_affine(fit_points, eval_points, |s| s, "linear")
}

/// `E(s) = a + b·ceil(s / flit_bytes)`.
pub fn fit_staircase(
    fit_points: &[(f64, f64)],
    eval_points: &[(f64, f64)],
    flit_bytes: u32,
) -> Result<(f64, f64, FitReport)> {
    if flit_bytes == 0 {
        return Err(Error::invalid("flit_bytes", "must be positive"));
    }
    let flit = f64::from(flit_bytes);
    fit_affine(fit_points, eval_points, |s| (s / flit).ceil(), "staircase")
}

fn swap_template(f: &ModelFunction, from: &str, to: &str) -> ModelFunction {
    let mut f = f.clone();
    for stage in &mut f.stages {
        if let Stage::Rules(r) = stage {
            for rule in &mut r.rules {
                if matches!(&rule.emit, Emit::Key(t) if t.source() == from) {
                    rule.emit = Emit::Key(Template::parse(to).expect("builtin template"));
                }
            }
        }
    }
    f
}

fn field_u32(state: &State, name: &str) -> Option<u32> {
    state.fields.iter().find(|(n, _)| n == name)?.1.parse().ok()
}

/// Re-keys cluster-pair NoC constants (`noc/sx:../sy:../dx:../dy:../s:..`)
/// by hop count. Pairs sharing a hop count and size must agree within
/// [`REDUCTION_TOL`]; otherwise they are averaged and a warning is logged.
pub fn reduce_noc_model(full: &EnergyModel) -> EnergyModel {
    let mut merged: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut constants = BTreeMap::new();
    for (k, &v) in &full.constants {
        let pair = State::from_key(k).ok().filter(|s| s.component == "noc").and_then(|s| {
            let a = ClusterCoord::new(field_u32(&s, "sx")?, field_u32(&s, "sy")?);
            let b = ClusterCoord::new(field_u32(&s, "dx")?, field_u32(&s, "dy")?);
            Some((manhattan_dist(a, b), field_u32(&s, "s")?))
        });
        match pair {
            Some((h, size)) => merged.entry(format!("noc/h:{h}/s:{size}")).or_default().push(v),
            None => {
                constants.insert(k.clone(), v);
            }
        }
    }
    for (k, vs) in merged {
        let (lo, hi) = vs.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        if hi - lo > REDUCTION_TOL {
            log::warn!("{k}: merged pair constants disagree by {} pJ; averaging", hi - lo);
        }
        constants.insert(k, vs.iter().sum::<f64>() / vs.len() as f64);
    }
    let function = swap_template(&full.function, NOC_PAIR_TEMPLATE, NOC_HOP_TEMPLATE);
    let mut model = EnergyModel {
        function_ref: function.name.clone(),
        function,
        constants,
        ..full.clone()
    };
    model.refresh_means();
    model
}

/// Family and size of a packet key (`noc/h:2/s:64` -> (`noc/h:2`, 64)).
fn packet_family(key: &str) -> Option<(&str, u32)> {
    let (family, last) = key.rsplit_once('/')?;
    let size = last.strip_prefix("s:")?.parse().ok()?;
    (family.starts_with("noc") || family.starts_with("bus")).then_some((family, size))
}

/// Replaces every packet-size key family (`noc/...`, `bus`) that spans
/// enough distinct inputs with a fitted reducer. With `window`, each family
/// is fitted on that many points around the middle of its size range and
/// evaluated on all of them.
pub fn reduce_packet_sizes(
    model: &EnergyModel,
    kind: ReducerKind,
    flit_bytes: u32,
    window: Option<usize>,
) -> Result<(EnergyModel, Vec<(String, FitReport)>)> {
    let mut families: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (k, &v) in &model.constants {
        if let Some((family, size)) = packet_family(k) {
            families.entry(family.to_string()).or_default().push((f64::from(size), v));
        }
    }
    let mut out = model.clone();
    let mut reports = Vec::new();
    for (family, mut points) in families {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fit_on = match window {
            Some(k) => crate::benchgen::center_window(&points, k),
            None => &points[..],
        };
        let fitted = match kind {
            ReducerKind::Linear => fit_linear(fit_on, &points),
            ReducerKind::Staircase => fit_staircase(fit_on, &points, flit_bytes),
        };
        let (a, b, report) = match fitted {
            Ok(f) => f,
            Err(Error::Underdetermined(_)) => {
                log::info!("{family}: too few distinct sizes, constants kept");
                continue;
            }
            Err(e) => return Err(e),
        };
        out.constants.retain(|k, _| packet_family(k).map(|(f, _)| f) != Some(family.as_str()));
        out.reducers.retain(|r| r.family != family);
        out.reducers.push(Reducer {
            kind,
            family: family.clone(),
            variable: "s".into(),
            a,
            b,
            flit_bytes: (kind == ReducerKind::Staircase).then_some(flit_bytes),
        });
        reports.push((family, report));
    }
    out.refresh_means();
    Ok((out, reports))
}
