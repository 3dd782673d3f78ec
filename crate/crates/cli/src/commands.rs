//! Subcommand implementations. Each loads and checks every input first,
//! computes, and only then hands its files to [`Artifacts`].

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use enermod::benchgen::{self, apps::applications, manifest_csv, Microbenchmark, Swept};
use enermod::campaign::{self, IMEM_SWEEP_REPS};
use enermod::dse::{self, Bounds, DataflowGraph, Schedule, Weights};
use enermod::estimator;
use enermod::modelfit::{self, fit_linear, fit_staircase, EnergyModel, Observation, ReducerKind};
use enermod::refsim::{DataPattern, EnergyLedger, Oracle, OracleParams, Program};
use enermod::statetrace::{abstract_trace, builtin, ModelFunction, Trace};
use enermod::sysconfig::{ApiDescription, CommOpDesc, CommOpName, Isa, SizeRange, SystemConfig};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{
    read_text, Artifacts, BenchKind, EstimateCmd, Explore, Failure, FitCmd, GenBench, Global, Level, OracleCmd,
    Outcome, ReduceCmd, SizeReducer, SweepImem, SweepNoc, ValidateCmd,
};

struct Platform {
    config: SystemConfig,
    isa: Isa,
    api: ApiDescription,
    params: OracleParams,
}

/// Reads and parses an optional input file, or falls back to `builtin`.
fn load<T>(
    path: Option<&Path>,
    parse: impl FnOnce(&str) -> enermod::Result<T>,
    builtin: impl FnOnce() -> enermod::Result<T>,
) -> Outcome<T> {
    match path {
        Some(p) => parse(&read_text(p)?).map_err(|e| Failure::from(e).in_file(p)),
        None => Ok(builtin()?),
    }
}

fn parse_file<T>(path: &Path, parse: impl FnOnce(&str) -> enermod::Result<T>) -> Outcome<T> {
    load(Some(path), parse, || unreachable!("path given"))
}

impl Platform {
    fn load(g: &Global) -> Outcome<Self> {
        let config = load(g.config.as_deref(), SystemConfig::parse, || Ok(SystemConfig::default()))?;
        let isa = load(
            g.isa.as_deref(),
            |t| Isa::parse(t, config.vliw_slots),
            || Isa::builtin(config.vliw_slots),
        )?;
        let api = load(g.api.as_deref(), |t| ApiDescription::parse(t, &config), || ApiDescription::builtin(&config))?;
        let params = load(g.params.as_deref(), OracleParams::parse, || Ok(OracleParams::default()))?;
        Ok(Self {
            config,
            isa,
            api,
            params,
        })
    }

    fn oracle(&self) -> Oracle {
        Oracle::new(&self.config, &self.isa, &self.params)
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}

/// File stem for a benchmark name (`instr/g12/zeros` -> `instr_g12_zeros`).
fn stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-._".contains(c) { c } else { '_' })
        .collect()
}

/// `SOURCE_DATE_EPOCH` when set, else the current time (RFC 3339, UTC).
fn fit_date() -> String {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0))
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// The manifest columns a run needs; `variable` and `value` are informative.
#[derive(Deserialize)]
struct ManifestRow {
    name: String,
    program_file: String,
}

struct ManifestEntry {
    name: String,
    stem: String,
    program: Program,
}

fn manifest_path(g: &Global, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| g.outdir.join("benchmarks").join("manifest.csv"))
}

/// Manifest rows with their programs; program paths are relative to the
/// manifest.
fn read_manifest(path: &Path) -> Outcome<Vec<ManifestEntry>> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Failure::new(4, "syntax", e.to_string()).in_file(path))?;
        let file = dir.join(&row.program_file);
        let program = parse_file(&file, Program::parse)?;
        let stem = Path::new(&row.program_file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| stem(&row.name));
        out.push(ManifestEntry {
            name: row.name,
            stem,
            program,
        });
    }
    if out.is_empty() {
        return Err(Failure::invalid("manifest lists no benchmarks").in_file(path));
    }
    Ok(out)
}

fn as_benchmarks(entries: Vec<ManifestEntry>) -> Vec<Microbenchmark> {
    entries
        .into_iter()
        .map(|e| Microbenchmark {
            name: e.name,
            swept: Swept::Application,
            reps: 1,
            program: e.program,
        })
        .collect()
}

/// API with the send range overridden where given.
fn send_api(p: &Platform, min: Option<u32>, max: Option<u32>, step: Option<u32>) -> Outcome<ApiDescription> {
    if min.is_none() && max.is_none() && step.is_none() {
        return Ok(p.api.clone());
    }
    let base = p.api.range(CommOpName::Send).unwrap_or(SizeRange {
        min: p.config.word_bytes,
        max: p.config.word_bytes,
        step: p.config.word_bytes,
    });
    let range = SizeRange {
        min: min.unwrap_or(base.min),
        max: max.unwrap_or(base.max),
        step: step.unwrap_or(base.step),
    };
    let mut ops: Vec<CommOpDesc> = p.api.ops().iter().filter(|o| o.name != CommOpName::Send).cloned().collect();
    ops.push(CommOpDesc {
        name: CommOpName::Send,
        params: Some(range),
    });
    Ok(ApiDescription::new(ops, &p.config)?)
}

pub fn gen_bench(g: &Global, a: &GenBench, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let api = send_api(&p, a.min, a.max, a.step)?;
    let (cfg, isa) = (&p.config, &p.isa);
    let reps = a.reps.unwrap_or(benchgen::DEFAULT_REPS);
    let comm_reps = a.reps.unwrap_or(campaign::COMM_REPS);
    let benches = match a.kind {
        BenchKind::Training => campaign::training_benchmarks(&p.oracle(), isa, &api, reps)?,
        BenchKind::Instr => benchgen::gen_instruction_benchmarks(isa, cfg, &DataPattern::ALL, reps)?,
        BenchKind::Calibration => benchgen::gen_calibration_benchmarks(isa, cfg, &DataPattern::ALL, reps),
        BenchKind::Comm => benchgen::gen_comm_benchmarks(&api, cfg, a.src, a.dst, comm_reps)?,
        BenchKind::Local => benchgen::gen_local_comm_benchmarks(&api, cfg, a.src, comm_reps)?,
        BenchKind::Pairs => {
            let mut b = benchgen::gen_pair_benchmarks(&api, cfg, comm_reps)?;
            b.extend(benchgen::gen_calibration_benchmarks(isa, cfg, &DataPattern::ALL, reps));
            b
        }
        BenchKind::Position => {
            let group = match a.group {
                Some(group) => group,
                None => campaign::nop_groups(isa, p.oracle().catalog())?.0,
            };
            let reps = a.reps.unwrap_or(IMEM_SWEEP_REPS);
            benchgen::gen_position_benchmarks(cfg, isa, group, a.lo, a.hi, reps)?
        }
        BenchKind::Apps => applications(isa, cfg)?,
    };
    let mut seen = BTreeSet::new();
    for b in &benches {
        let s = stem(&b.name);
        if !seen.insert(s.clone()) {
            return Err(Failure::invalid(format!("benchmark file name `{s}` is not unique")));
        }
        out.add(Path::new("benchmarks").join(format!("{s}.json")), b.program.to_json());
    }
    out.add("benchmarks/manifest.csv", manifest_csv(&benches, |b| format!("{}.json", stem(&b.name))));
    Ok(pretty(&json!({ "benchmarks": benches.len(), "manifest": "benchmarks/manifest.csv" })))
}

pub fn oracle(g: &Global, a: &OracleCmd, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let entries = read_manifest(&manifest_path(g, a.manifest.as_ref()))?;
    let stems: Vec<String> = entries.iter().map(|e| e.stem.clone()).collect();
    let benches = as_benchmarks(entries);
    let measured = campaign::run_campaign(&p.oracle(), &benches)?;
    let mut table = String::from("benchmark,total_pJ\n");
    let mut total = 0.0;
    for (m, s) in measured.iter().zip(&stems) {
        out.add(Path::new("traces").join(format!("{s}.trace")), m.trace.to_text());
        out.add(Path::new("ledgers").join(format!("{s}.csv")), m.ledger.to_csv());
        table.push_str(&format!("{},{}\n", m.name, m.ledger.total()));
        total += m.ledger.total();
    }
    out.add("reports/oracle.csv", table);
    let summary = pretty(&json!({ "benchmarks": measured.len(), "total_pJ": total }));
    out.add("reports/oracle.json", summary.clone());
    Ok(summary)
}

fn level_function(level: Level, config: &SystemConfig) -> (ModelFunction, &'static str) {
    match level {
        Level::FineExact => (builtin::fine_exact(config.bank_words), "fine-exact"),
        Level::Fine => (builtin::fine(), "fine"),
        Level::FinePairs => (builtin::fine_pairs(), "fine-pairs"),
        Level::ActiveIdle => (builtin::active_idle(), "active-idle"),
        Level::ActiveIdleClass => (builtin::active_idle_by_class(), "active-idle-class"),
        Level::Binary => (builtin::binary_usage(), "binary"),
        Level::BinaryClass => (builtin::binary_by_class(), "binary-class"),
        Level::Identity => (builtin::identity(), "identity"),
    }
}

/// Checks a user-chosen artifact name.
fn artifact_name(name: &str) -> Outcome<&str> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(Failure::invalid(format!("`{name}` is not a valid artifact name")));
    }
    Ok(name)
}

fn write_fit(out: &mut Artifacts, name: &str, model: &EnergyModel, report: &modelfit::FitReport) {
    out.add(Path::new("models").join(format!("{name}.json")), model.to_json());
    out.add(Path::new("reports").join(format!("fit_{name}.csv")), report.to_csv());
    let summary: Value = serde_json::from_str(&report.summary_json()).expect("summary is json");
    out.add(Path::new("reports").join(format!("fit_{name}.json")), pretty(&summary));
}

pub fn fit(g: &Global, a: &FitCmd, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let (function, level_name) = level_function(a.level, &p.config);
    let function = match &a.function {
        Some(path) => parse_file(path, ModelFunction::parse)?,
        None => function,
    };
    let name = artifact_name(a.name.as_deref().unwrap_or(level_name))?.to_string();
    let entries = read_manifest(&manifest_path(g, a.manifest.as_ref()))?;
    let mut observations = Vec::with_capacity(entries.len());
    for e in &entries {
        let tp = g.outdir.join("traces").join(format!("{}.trace", e.stem));
        let lp = g.outdir.join("ledgers").join(format!("{}.csv", e.stem));
        let trace = parse_file(&tp, Trace::parse)?;
        let (_, measured) = EnergyLedger::parse_csv_totals(&read_text(&lp)?)
            .ok_or_else(|| Failure::new(4, "syntax", "not a ledger CSV").in_file(&lp))?;
        observations.push(Observation {
            name: e.name.clone(),
            counts: abstract_trace(&trace, &function).map_err(|e| Failure::from(e).in_file(&tp))?,
            measured,
        });
    }
    let (mut model, report) = modelfit::fit_constants(&observations, &function, Some(p.config.clock_hz))?;
    model.provenance.fit_date = Some(fit_date());
    write_fit(out, &name, &model, &report);
    Ok(pretty(&json!({
        "model": format!("models/{name}.json"),
        "keys": model.constants.len(),
        "observations": observations.len(),
        "rank_deficient": report.rank_deficient,
        "max_abs_error_pj": report.max_abs_error,
    })))
}

pub fn reduce(g: &Global, a: &ReduceCmd, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let input = parse_file(&a.model, EnergyModel::parse)?;
    let default_name = format!(
        "{}-reduced",
        a.model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    );
    let name = artifact_name(a.name.as_deref().unwrap_or(&default_name))?.to_string();
    let mut model = if a.hops { modelfit::reduce_noc_model(&input) } else { input.clone() };
    let mut families = serde_json::Map::new();
    if let Some(kind) = a.sizes {
        let kind = match kind {
            SizeReducer::Linear => ReducerKind::Linear,
            SizeReducer::Staircase => ReducerKind::Staircase,
        };
        let (reduced, reports) = modelfit::reduce_packet_sizes(&model, kind, p.config.flit_payload_bytes, a.window)?;
        model = reduced;
        for (family, r) in reports {
            families.insert(family, serde_json::from_str(&r.summary_json()).expect("summary is json"));
        }
    }
    model.provenance.fit_date = Some(fit_date());
    out.add(Path::new("models").join(format!("{name}.json")), model.to_json());
    let summary = pretty(&json!({
        "model": format!("models/{name}.json"),
        "size_before": input.size(),
        "size_after": model.size(),
        "families": families,
    }));
    out.add(Path::new("reports").join(format!("reduce_{name}.json")), summary.clone());
    Ok(summary)
}

pub fn estimate(_g: &Global, a: &EstimateCmd, out: &mut Artifacts) -> Outcome<String> {
    let model = parse_file(&a.model, EnergyModel::parse)?;
    let trace = parse_file(&a.trace, Trace::parse)?;
    let e = estimator::estimate(&trace, &model).map_err(|e| Failure::from(e).in_file(&a.trace))?;
    let text = serde_json::to_string_pretty(&e).expect("estimate serializes");
    let s = a.trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.add(Path::new("reports").join(format!("estimate_{s}.json")), text.clone());
    Ok(text)
}

/// Fits the simplified model (group and pattern constants, staircase
/// packets) on the standard training campaign.
fn train_simplified(p: &Platform, oracle: &Oracle, out: &mut Artifacts) -> Outcome<EnergyModel> {
    let benches = campaign::training_benchmarks(oracle, &p.isa, &p.api, benchgen::DEFAULT_REPS)?;
    let measured = campaign::run_campaign(oracle, &benches)?;
    let (mut model, report) = campaign::simplified_model(&measured, oracle)?;
    model.provenance.fit_date = Some(fit_date());
    write_fit(out, "simplified", &model, &report);
    Ok(model)
}

fn model_or_trained(p: &Platform, oracle: &Oracle, path: Option<&PathBuf>, out: &mut Artifacts) -> Outcome<EnergyModel> {
    match path {
        Some(path) => parse_file(path, EnergyModel::parse),
        None => train_simplified(p, oracle, out),
    }
}

pub fn validate(g: &Global, a: &ValidateCmd, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let benches = match &a.manifest {
        Some(m) => as_benchmarks(read_manifest(m)?),
        None => applications(&p.isa, &p.config)?,
    };
    let oracle = p.oracle();
    let model = model_or_trained(&p, &oracle, a.model.as_ref(), out)?;
    let report = estimator::validate(&model, &benches, &oracle)?;
    out.add("reports/validation.csv", report.to_csv());
    let summary = report.summary_json();
    out.add("reports/validation.json", summary.clone());
    Ok(summary)
}

/// Sizes after which the sweep energy steps up by more than `tol`.
fn step_points(points: &[(f64, f64)], tol: f64) -> Vec<f64> {
    points.windows(2).filter(|w| w[1].1 - w[0].1 > tol).map(|w| w[0].0).collect()
}

pub fn sweep_noc(g: &Global, a: &SweepNoc, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let rows = campaign::noc_sweep(&p.oracle(), &p.api, a.src, a.dst)?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (f64::from(r.size), r.total_pj)).collect();
    let window = benchgen::center_window(&points, a.window);
    let flit = p.config.flit_payload_bytes;
    let (la, lb, lin) = fit_linear(window, &points)?;
    let (sa, sb, stair) = fit_staircase(window, &points, flit)?;
    let mut csv =
        String::from("size_bytes,flits,total_pJ,router_pJ,ni_pJ,sync_pJ,bus_pJ,linear_fit_pJ,staircase_fit_pJ\n");
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.size, r.flits, r.total_pj, r.router_pj, r.ni_pj, r.sync_pj, r.bus_pj, lin.predicted[i], stair.predicted[i]
        ));
    }
    out.add("reports/noc_sweep.csv", csv);
    let summary = pretty(&json!({
        "src": [a.src.x, a.src.y],
        "dst": [a.dst.x, a.dst.y],
        "points": rows.len(),
        "fit_window": [window.first().map(|w| w.0), window.last().map(|w| w.0)],
        "flit_payload_bytes": flit,
        "linear": { "a_pJ": la, "b_pJ_per_byte": lb, "max_abs_error_pj": lin.max_abs_error },
        "staircase": { "a_pJ": sa, "b_pJ_per_flit": sb, "max_abs_error_pj": stair.max_abs_error },
        "steps_after_bytes": step_points(&points, 1e-9),
    }));
    out.add("reports/noc_sweep.json", summary.clone());
    Ok(summary)
}

pub fn sweep_imem(g: &Global, a: &SweepImem, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    let oracle = p.oracle();
    let sweep = campaign::imem_sweep(&oracle, &p.isa, a.lo, a.hi)?;
    let (one, two) = sweep.ranges();
    let (full_one, full_two) = campaign::imem_full_ranges(&oracle, &p.isa)?;
    out.add("reports/imem_sweep.csv", sweep.to_csv());
    let summary = pretty(&json!({
        "lo": a.lo,
        "hi": a.hi,
        "one_slot_range_pJ": one,
        "two_slot_range_pJ": two,
        "full_memory": { "one_slot_range_pJ": full_one, "two_slot_range_pJ": full_two },
    }));
    out.add("reports/imem_sweep.json", summary.clone());
    Ok(summary)
}

pub fn explore(g: &Global, a: &Explore, out: &mut Artifacts) -> Outcome<String> {
    let p = Platform::load(g)?;
    if !a.max_granularity.is_power_of_two() {
        return Err(Failure::invalid("--max-granularity must be a power of two"));
    }
    if !(a.cooling > 0.0 && a.cooling <= 1.0) || a.initial_temp < 0.0 {
        return Err(Failure::invalid("need 0 < cooling <= 1 and initial-temp >= 0"));
    }
    let graph = match &a.graph {
        Some(path) => parse_file(path, DataflowGraph::parse)?,
        None => dse::example_pipeline(&p.isa, &p.config)?,
    };
    let oracle = p.oracle();
    let model = model_or_trained(&p, &oracle, a.model.as_ref(), out)?;
    let schedule = Schedule {
        initial_temp: a.initial_temp,
        cooling: a.cooling,
        steps: a.steps,
        seed: g.seed,
        weights: Weights {
            energy: a.energy_weight,
            time: a.time_weight,
        },
        bounds: Bounds {
            max_clones: a.max_clones,
            max_granularity: a.max_granularity,
        },
    };
    let best = dse::search(&graph, &p.config, &model, &schedule, a.chains)?;
    let partition: Value = serde_json::from_str(&best.partition.to_json(&graph)).expect("partition is json");
    let summary = pretty(&json!({
        "partition": partition,
        "score": best.score,
        "cost": best.cost,
        "seed": g.seed,
        "chains": a.chains,
        "steps": a.steps,
    }));
    out.add("reports/explore.json", summary.clone());
    out.add("reports/explore_history.csv", dse::history_csv(&best.history));
    Ok(summary)
}

pub fn report(g: &Global, out: &mut Artifacts) -> Outcome<String> {
    let dir = g.outdir.join("reports");
    let listing = fs::read_dir(&dir).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound { 3 } else { 5 };
        Failure::new(code, if code == 3 { "missing-file" } else { "io" }, format!("{}: {e}", dir.display()))
    })?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_stem().is_some_and(|s| s != "summary"))
        .collect();
    files.sort();
    let mut all = serde_json::Map::new();
    for f in &files {
        let v: Value = serde_json::from_str(&read_text(f)?)
            .map_err(|e| Failure::new(4, "syntax", e.to_string()).in_file(f))?;
        let key = f.file_stem().expect("has stem").to_string_lossy().into_owned();
        all.insert(key, v);
    }
    let summary = pretty(&Value::Object(all));
    out.add("reports/summary.json", summary.clone());
    Ok(summary)
}
