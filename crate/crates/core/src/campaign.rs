//! Benchmark campaigns: running many programs on the oracle in parallel and
//! turning the results into fitted models and sweep tables.
//!
//! Every function here runs in the current rayon pool and keeps input order,
//! so results do not depend on the worker count. Use [`with_workers`] to pick
//! the pool size.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::benchgen::{
    self, gen_calibration_benchmarks, gen_comm_benchmarks, gen_instruction_benchmarks, gen_local_comm_benchmarks,
    gen_position_benchmarks, Microbenchmark,
};
use crate::error::{Error, Result};
use crate::modelfit::{fit_constants, reduce_packet_sizes, EnergyModel, FitReport, Observation, ReducerKind};
use crate::refsim::{manhattan_dist, DataPattern, EnergyLedger, LedgerComponent, Oracle};
use crate::statetrace::{abstract_trace, builtin, ModelFunction, Trace};
use crate::sysconfig::{ApiDescription, ClusterCoord, GroupCatalog, InstructionGroup, Isa, SlotOp};

/// Packets per communication benchmark.
pub const COMM_REPS: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub name: String,
    pub trace: Trace,
    pub ledger: EnergyLedger,
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Simulation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_campaign(oracle: &Oracle, benchmarks: &[Microbenchmark]) -> Result<Vec<Measurement>> {
    benchmarks
        .par_iter()
        .map(|b| {
            let (trace, ledger) = oracle.run(&b.program)?;
            Ok(Measurement {
                name: b.name.clone(),
                trace,
                ledger,
            })
        })
        .collect()
}

pub fn observations(measurements: &[Measurement], function: &ModelFunction) -> Result<Vec<Observation>> {
    measurements
        .par_iter()
        .map(|m| {
            Ok(Observation {
                name: m.name.clone(),
                counts: abstract_trace(&m.trace, function)?,
                measured: m.ledger.total(),
            })
        })
        .collect()
}

/// One destination cluster per distinct hop distance from cluster (0, 0),
/// the first in mesh order.
pub fn hop_representatives(config: &crate::sysconfig::SystemConfig) -> Vec<ClusterCoord> {
    let origin = ClusterCoord::new(0, 0);
    let mut seen = std::collections::BTreeMap::new();
    for c in config.clusters() {
        let h = manhattan_dist(origin, c);
        if h > 0 {
            seen.entry(h).or_insert(c);
        }
    }
    seen.into_values().collect()
}

/// The standard fitting campaign: every instruction group under every data
/// pattern, the calibration set, one packet sweep per hop distance and one
/// cluster-local sweep.
pub fn training_benchmarks(oracle: &Oracle, isa: &Isa, api: &ApiDescription, reps: u32) -> Result<Vec<Microbenchmark>> {
    let config = oracle.config();
    let mut out = gen_instruction_benchmarks(isa, config, &DataPattern::ALL, reps)?;
    out.extend(gen_calibration_benchmarks(isa, config, &DataPattern::ALL, reps));
    let origin = ClusterCoord::new(0, 0);
    for dst in hop_representatives(config) {
        out.extend(gen_comm_benchmarks(api, config, origin, dst, COMM_REPS)?);
    }
    if config.cpus_per_cluster > 1 {
        out.extend(gen_local_comm_benchmarks(api, config, origin, COMM_REPS)?);
    }
    Ok(out)
}

/// Fits `function` on `measurements` with a static term.
pub fn fit(measurements: &[Measurement], function: &ModelFunction, clock_hz: f64) -> Result<(EnergyModel, FitReport)> {
    fit_constants(&observations(measurements, function)?, function, Some(clock_hz))
}

/// Per-(group, pattern) instruction constants without the imem position term,
/// with packet-size keys replaced by staircase reducers.
pub fn simplified_model(measurements: &[Measurement], oracle: &Oracle) -> Result<(EnergyModel, FitReport)> {
    let config = oracle.config();
    let (model, report) = fit(measurements, &builtin::fine(), config.clock_hz)?;
    let (reduced, _) = reduce_packet_sizes(&model, ReducerKind::Staircase, config.flit_payload_bytes, None)?;
    Ok((reduced, report))
}

/// One row of a packet-size sweep: dynamic energy per packet by component.
#[derive(Debug, Clone, PartialEq)]
pub struct NocSweepRow {
    pub size: u32,
    pub flits: u32,
    pub total_pj: f64,
    pub router_pj: f64,
    pub ni_pj: f64,
    pub sync_pj: f64,
    pub bus_pj: f64,
}

pub fn noc_sweep(oracle: &Oracle, api: &ApiDescription, src: ClusterCoord, dst: ClusterCoord) -> Result<Vec<NocSweepRow>> {
    let config = oracle.config();
    let benches = if src == dst {
        gen_local_comm_benchmarks(api, config, src, 1)?
    } else {
        gen_comm_benchmarks(api, config, src, dst, 1)?
    };
    let measured = run_campaign(oracle, &benches)?;
    Ok(benches
        .iter()
        .zip(&measured)
        .map(|(b, m)| {
            let size = match b.swept {
                benchgen::Swept::PacketSize { size } => size,
                _ => unreachable!("packet sweep"),
            };
            let c = |x| m.ledger.component(x);
            NocSweepRow {
                size,
                flits: config.flits(size),
                total_pj: m.ledger.total() - c(LedgerComponent::Static),
                router_pj: c(LedgerComponent::Router),
                ni_pj: c(LedgerComponent::Ni),
                sync_pj: c(LedgerComponent::Sync),
                bus_pj: c(LedgerComponent::Bus),
            }
        })
        .collect())
}

pub fn noc_sweep_csv(rows: &[NocSweepRow]) -> String {
    let mut out = String::from("size_bytes,flits,total_pJ,router_pJ,ni_pJ,sync_pJ,bus_pJ\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.size, r.flits, r.total_pj, r.router_pj, r.ni_pj, r.sync_pj, r.bus_pj
        ));
    }
    out
}

/// NOP in slot 0 only (compressed) and NOP in every slot.
pub fn nop_groups(isa: &Isa, catalog: &GroupCatalog) -> Result<(u32, u32)> {
    let nop = isa
        .find("nop")
        .or_else(|| isa.defs().iter().position(|d| d.iclass == crate::sysconfig::InstructionClass::Nop))
        .ok_or_else(|| Error::invalid("isa", "no NOP instruction"))?;
    let mut one = vec![SlotOp::Empty; catalog.slots() as usize];
    one[0] = SlotOp::Instr(nop);
    let all = vec![SlotOp::Instr(nop); catalog.slots() as usize];
    let enc = |slots| {
        catalog
            .encode(&InstructionGroup { slots })
            .ok_or_else(|| Error::invalid("isa", "NOP must be allowed on every slot"))
    };
    Ok((enc(one)?, enc(all)?))
}

/// Per-bundle energy of the compressed and the full NOP bundle at each imem
/// word, measured as (benchmark − prologue-only benchmark) / repetitions.
/// The full bundle only exists at bundle-aligned words.
#[derive(Debug, Clone, PartialEq)]
pub struct ImemSweep {
    pub addrs: Vec<u32>,
    pub compressed_pj: Vec<f64>,
    pub uncompressed_pj: Vec<Option<f64>>,
}

impl ImemSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("addr,one_slot_pJ,two_slot_pJ\n");
        for i in 0..self.addrs.len() {
            let two = self.uncompressed_pj[i].map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", self.addrs[i], self.compressed_pj[i], two));
        }
        out
    }

    pub fn ranges(&self) -> (f64, f64) {
        let two: Vec<f64> = self.uncompressed_pj.iter().flatten().copied().collect();
        (spread(&self.compressed_pj), spread(&two))
    }
}

pub fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    if v.is_empty() {
        0.0
    } else {
        max - min
    }
}

pub const IMEM_SWEEP_REPS: u32 = 4;

pub fn imem_sweep(oracle: &Oracle, isa: &Isa, lo: u32, hi: u32) -> Result<ImemSweep> {
    let config = oracle.config();
    let (one, two) = nop_groups(isa, oracle.catalog())?;
    let prologue = &gen_calibration_benchmarks(isa, config, &[DataPattern::Zeros], 1)[1];
    debug_assert!(matches!(prologue.swept, benchgen::Swept::Prologue { .. }));
    let base = oracle.run(&prologue.program)?.1.total();
    let per_bundle = |group| -> Result<Vec<(u32, f64)>> {
        let benches = gen_position_benchmarks(config, isa, group, lo, hi, IMEM_SWEEP_REPS)?;
        let results = run_campaign(oracle, &benches)?;
        Ok(benches
            .iter()
            .zip(&results)
            .map(|(b, m)| {
                let benchgen::Swept::Position { addr } = b.swept else { unreachable!() };
                (addr, (m.ledger.total() - base) / f64::from(IMEM_SWEEP_REPS))
            })
            .collect())
    };
    let compressed = per_bundle(one)?;
    let wide: BTreeMap<u32, f64> = per_bundle(two)?.into_iter().collect();
    Ok(ImemSweep {
        addrs: compressed.iter().map(|c| c.0).collect(),
        uncompressed_pj: compressed.iter().map(|c| wide.get(&c.0).copied()).collect(),
        compressed_pj: compressed.into_iter().map(|c| c.1).collect(),
    })
}

/// Fetch-energy range of the compressed and full NOP bundle over every
/// bundle-aligned position of the whole imem (closed form, no simulation).
pub fn imem_full_ranges(oracle: &Oracle, isa: &Isa) -> Result<(f64, f64)> {
    let config = oracle.config();
    let (one, two) = nop_groups(isa, oracle.catalog())?;
    let range = |group: u32, compressed: bool| -> Result<f64> {
        let wpb = config.words_per_bundle(compressed);
        let v = (0..config.imem_words() / wpb)
            .map(|pos| oracle.bundle_energy(group, pos * wpb, DataPattern::Zeros).map(|e| e.1))
            .collect::<Result<Vec<f64>>>()?;
        Ok(spread(&v))
    };
    Ok((range(one, true)?, range(two, false)?))
}
