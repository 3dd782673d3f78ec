//! Microbenchmark generation from the ISA and API descriptions.
//!
//! Every instruction benchmark starts with the same one-bundle prologue that
//! puts the CPU into a defined data state, then repeats the measured bundle
//! `reps` times from one fixed imem address. Calibration benchmarks (idle,
//! prologue only, stand-alone sync) pin down the static term and the setup
//! cost so per-occurrence energies can be separated from the prologue.

pub mod apps;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refsim::transition::TransitionComponent;
use crate::refsim::{DataPattern, Op, Program};
use crate::sysconfig::{
    ApiDescription, ClusterCoord, CommOpName, CpuCoord, GroupCatalog, InstructionClass, InstructionGroup, Isa,
    SizeRange, SlotOp, SystemConfig,
};

pub const DEFAULT_REPS: u32 = 64;
/// Imem word the measured bundle is fetched from (binary 1010101010, five set
/// bits, word aligned for every bundle format).
pub const BODY_ADDR: u32 = 682;
pub const IDLE_CYCLES: u32 = 64;
/// Points of a packet sweep used for the reduced fit.
pub const CENTER_WINDOW: usize = 16;
/// Instruction groups of the reference 155-instruction ISA; times three data
/// patterns this gives the full-scale campaign size.
pub const REFERENCE_ISA_GROUPS: usize = 20_093;
pub const REFERENCE_ISA_TESTS: usize = REFERENCE_ISA_GROUPS * 3;

/// The state dimension a benchmark isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variable", rename_all = "snake_case")]
pub enum Swept {
    Group { group: u32, pattern: DataPattern },
    Position { addr: u32 },
    PacketSize { size: u32 },
    Idle { cycles: u32 },
    Prologue { pattern: DataPattern },
    Sync,
    Application,
}

impl Swept {
    pub fn variable(&self) -> &'static str {
        match self {
            Swept::Group { .. } => "group",
            Swept::Position { .. } => "position",
            Swept::PacketSize { .. } => "packet_size",
            Swept::Idle { .. } => "idle",
            Swept::Prologue { .. } => "prologue",
            Swept::Sync => "sync",
            Swept::Application => "application",
        }
    }
}

impl fmt::Display for Swept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Swept::Group { group, pattern } => write!(f, "{group}:{}", pattern.name()),
            Swept::Position { addr } => write!(f, "{addr}"),
            Swept::PacketSize { size } => write!(f, "{size}"),
            Swept::Idle { cycles } => write!(f, "{cycles}"),
            Swept::Prologue { pattern } => f.write_str(pattern.name()),
            Swept::Sync | Swept::Application => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microbenchmark {
    pub name: String,
    pub swept: Swept,
    /// Repetitions of the measured bundle or operation.
    pub reps: u32,
    pub program: Program,
}

impl Microbenchmark {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("benchmark serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::syntax("benchmark", &e))
    }
}

/// Campaign manifest: `name,variable,value,program_file` rows.
pub fn manifest_csv(benchmarks: &[Microbenchmark], file_of: impl Fn(&Microbenchmark) -> String) -> String {
    let mut out = String::from("name,variable,value,program_file\n");
    for b in benchmarks {
        out.push_str(&format!("{},{},{},{}\n", b.name, b.swept.variable(), b.swept, file_of(b)));
    }
    out
}

/// Compressed single-slot group of the first ALU instruction usable on slot
/// 0; falls back to group 0.
pub fn setup_group(isa: &Isa, catalog: &GroupCatalog) -> u32 {
    isa.defs()
        .iter()
        .position(|d| d.iclass == InstructionClass::Alu && d.allowed_slots.contains(&0))
        .and_then(|i| {
            let mut slots = vec![SlotOp::Empty; catalog.slots() as usize];
            slots[0] = SlotOp::Instr(i);
            catalog.encode(&InstructionGroup { slots })
        })
        .unwrap_or(0)
}

fn prologue(setup: u32, pattern: DataPattern) -> Op {
    Op::Bundle {
        group: setup,
        addr: 0,
        pattern,
    }
}

fn check_body_addr(config: &SystemConfig, catalog: &GroupCatalog, addr: u32) -> Result<()> {
    let widest = config.words_per_bundle(false);
    if catalog.is_empty() || addr + widest <= config.imem_words() {
        Ok(())
    } else {
        Err(Error::invalid("imem_bytes", format!("too small for a bundle at word {addr}")))
    }
}

/// One benchmark per (instruction group, pattern), groups in enumeration
/// order.
pub fn gen_instruction_benchmarks(
    isa: &Isa,
    config: &SystemConfig,
    patterns: &[DataPattern],
    reps: u32,
) -> Result<Vec<Microbenchmark>> {
    let catalog = GroupCatalog::new(isa, config.vliw_slots);
    check_body_addr(config, &catalog, BODY_ADDR)?;
    let setup = setup_group(isa, &catalog);
    let mut out = Vec::with_capacity(catalog.len() as usize * patterns.len());
    for group in 0..catalog.len() {
        for &pattern in patterns {
            let mut program = Program::default();
            program.push(0, prologue(setup, pattern));
            program.extend(
                0,
                (0..reps).map(|_| Op::Bundle {
                    group,
                    addr: BODY_ADDR,
                    pattern,
                }),
            );
            out.push(Microbenchmark {
                name: format!("instr/g{group}/{}", pattern.name()),
                swept: Swept::Group { group, pattern },
                reps,
                program,
            });
        }
    }
    Ok(out)
}

/// One benchmark per bundle-aligned imem word in `addr_lo..=addr_hi`, the
/// same group at every address.
pub fn gen_position_benchmarks(
    config: &SystemConfig,
    isa: &Isa,
    group: u32,
    addr_lo: u32,
    addr_hi: u32,
    reps: u32,
) -> Result<Vec<Microbenchmark>> {
    let catalog = GroupCatalog::new(isa, config.vliw_slots);
    if !catalog.contains(group) {
        return Err(Error::invalid("group", format!("unknown group {group}")));
    }
    let words = config.words_per_bundle(catalog.decode(group).compressed());
    if addr_lo > addr_hi || addr_hi + words > config.imem_words() {
        return Err(Error::invalid(
            "addr",
            format!("range {addr_lo}..={addr_hi} does not fit in {} imem words", config.imem_words()),
        ));
    }
    let first = addr_lo.next_multiple_of(words);
    if first > addr_hi {
        return Err(Error::invalid("addr", format!("no {words}-word aligned address in {addr_lo}..={addr_hi}")));
    }
    let setup = setup_group(isa, &catalog);
    let pattern = DataPattern::Zeros;
    Ok((first..=addr_hi)
        .step_by(words as usize)
        .map(|addr| {
            let mut program = Program::default();
            program.push(0, prologue(setup, pattern));
            program.extend(0, (0..reps).map(|_| Op::Bundle { group, addr, pattern }));
            Microbenchmark {
                name: format!("pos/g{group}/a{addr}"),
                swept: Swept::Position { addr },
                reps,
                program,
            }
        })
        .collect())
}

fn comm_program(src: u32, dst: u32, size: u32, reps: u32) -> Program {
    let mut program = Program::default();
    program.extend(src, (0..reps).map(|_| Op::Send { dst, size }));
    program.extend(dst, (0..reps).map(|_| Op::Recv { src, size }));
    program
}

fn send_range(api: &ApiDescription) -> Result<SizeRange> {
    api.range(CommOpName::Send)
        .ok_or_else(|| Error::invalid("api", "no send operation with a size range"))
}

/// Packet-size sweep between CPU 0 of two different clusters, one benchmark
/// per size of the API's send range.
pub fn gen_comm_benchmarks(
    api: &ApiDescription,
    config: &SystemConfig,
    src: ClusterCoord,
    dst: ClusterCoord,
    reps: u32,
) -> Result<Vec<Microbenchmark>> {
    for c in [src, dst] {
        if !config.contains(c) {
            return Err(Error::invalid("cluster", format!("{c} is off the mesh")));
        }
    }
    if src == dst {
        return Err(Error::invalid("cluster", "source and destination clusters must differ"));
    }
    let s = config.cpu_id(CpuCoord { cluster: src, cpu: 0 })?;
    let d = config.cpu_id(CpuCoord { cluster: dst, cpu: 0 })?;
    sweep(api, s, d, reps, &format!("comm/{}.{}-{}.{}", src.x, src.y, dst.x, dst.y))
}

/// Packet-size sweeps between CPU 0 of every ordered pair of distinct
/// clusters.
pub fn gen_pair_benchmarks(api: &ApiDescription, config: &SystemConfig, reps: u32) -> Result<Vec<Microbenchmark>> {
    let clusters: Vec<ClusterCoord> = config.clusters().collect();
    let mut out = Vec::new();
    for &a in &clusters {
        for &b in clusters.iter().filter(|&&b| b != a) {
            out.extend(gen_comm_benchmarks(api, config, a, b, reps)?);
        }
    }
    Ok(out)
}

/// Packet-size sweep between CPUs 0 and 1 of one cluster (crossbar path).
pub fn gen_local_comm_benchmarks(
    api: &ApiDescription,
    config: &SystemConfig,
    cluster: ClusterCoord,
    reps: u32,
) -> Result<Vec<Microbenchmark>> {
    if !config.contains(cluster) || config.cpus_per_cluster < 2 {
        return Err(Error::invalid("cluster", format!("{cluster} has no CPU pair")));
    }
    let s = config.cpu_id(CpuCoord { cluster, cpu: 0 })?;
    let d = config.cpu_id(CpuCoord { cluster, cpu: 1 })?;
    sweep(api, s, d, reps, &format!("local/{}.{}", cluster.x, cluster.y))
}

fn sweep(api: &ApiDescription, src: u32, dst: u32, reps: u32, prefix: &str) -> Result<Vec<Microbenchmark>> {
    Ok(send_range(api)?
        .values()
        .map(|size| Microbenchmark {
            name: format!("{prefix}/s{size}"),
            swept: Swept::PacketSize { size },
            reps,
            program: comm_program(src, dst, size, reps),
        })
        .collect())
}

/// The `k` items around the middle of `items`.
pub fn center_window<T>(items: &[T], k: usize) -> &[T] {
    let k = k.min(items.len());
    let start = (items.len() - k) / 2;
    &items[start..start + k]
}

/// Idle, prologue-only and stand-alone sync benchmarks.
pub fn gen_calibration_benchmarks(
    isa: &Isa,
    config: &SystemConfig,
    patterns: &[DataPattern],
    reps: u32,
) -> Vec<Microbenchmark> {
    let catalog = GroupCatalog::new(isa, config.vliw_slots);
    let setup = setup_group(isa, &catalog);
    let mut out = Vec::new();
    let mut idle = Program::default();
    idle.push(0, Op::Wait { cycles: IDLE_CYCLES });
    out.push(Microbenchmark {
        name: "cal/idle".into(),
        swept: Swept::Idle { cycles: IDLE_CYCLES },
        reps: 1,
        program: idle,
    });
    for &pattern in patterns {
        let mut p = Program::default();
        p.push(0, prologue(setup, pattern));
        out.push(Microbenchmark {
            name: format!("cal/prologue/{}", pattern.name()),
            swept: Swept::Prologue { pattern },
            reps: 0,
            program: p,
        });
    }
    let mut sync = Program::default();
    sync.extend(0, (0..reps).map(|_| Op::Sync));
    out.push(Microbenchmark {
        name: "cal/sync".into(),
        swept: Swept::Sync,
        reps,
        program: sync,
    });
    out
}

/// One measurement of the comprehensive transition model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionBenchmark {
    pub name: String,
    pub from: u32,
    pub to: u32,
    pub sequence: Vec<u32>,
}

/// `states²` benchmarks: for each ordered pair `(a, b)`, leave reset by
/// entering `a`, then transition to `b`.
pub fn gen_transition_benchmarks(component: &TransitionComponent) -> Vec<TransitionBenchmark> {
    let n = component.states;
    (0..n)
        .flat_map(|a| {
            (0..n).map(move |b| TransitionBenchmark {
                name: format!("tr/{a}-{b}"),
                from: a,
                to: b,
                sequence: vec![a, b],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
