//! Held-out streaming applications used for validation. None of them is
//! part of any fitting campaign; they mix instruction groups, data patterns,
//! code positions and both communication paths.

use std::collections::BTreeMap;

use super::{Microbenchmark, Swept};
use crate::error::{Error, Result};
use crate::refsim::{DataPattern, Op, Program};
use crate::sysconfig::{GroupCatalog, Isa, SystemConfig};

pub const APP_NAMES: [&str; 5] = ["filter-chain", "matmul-tiles", "sort-network", "fft-butterfly", "reduction-tree"];

/// CPUs an application may use.
const APP_CPUS: u32 = 16;

type Code = Vec<(u32, u32)>;

struct Builder<'a> {
    isa: &'a Isa,
    catalog: GroupCatalog,
    config: &'a SystemConfig,
    program: Program,
    cursor: BTreeMap<u32, u32>,
}

impl<'a> Builder<'a> {
    fn new(isa: &'a Isa, config: &'a SystemConfig) -> Result<Self> {
        if config.cpu_count() < APP_CPUS {
            return Err(Error::invalid(
                "config",
                format!("applications need at least {APP_CPUS} CPUs"),
            ));
        }
        Ok(Self {
            isa,
            catalog: GroupCatalog::new(isa, config.vliw_slots),
            config,
            program: Program::default(),
            cursor: BTreeMap::new(),
        })
    }

    fn group(&self, slots: &[&str]) -> Result<u32> {
        self.catalog.encode_mnemonics(self.isa, slots)
    }

    /// Places a kernel in `cpu`'s imem after its previous kernels.
    fn code(&mut self, cpu: u32, bundles: &[[&str; 2]]) -> Result<Code> {
        let start = *self.cursor.entry(cpu).or_insert(24 + 37 * (cpu % 7));
        let mut addr = start;
        let mut out = Vec::with_capacity(bundles.len());
        for b in bundles {
            let g = self.group(b)?;
            let words = self.config.words_per_bundle(self.catalog.decode(g).compressed());
            addr = addr.next_multiple_of(words);
            out.push((g, addr));
            addr += words;
        }
        if addr > self.config.imem_words() {
            return Err(Error::invalid("imem_bytes", "application code does not fit"));
        }
        self.cursor.insert(cpu, addr);
        Ok(out)
    }

    /// Executes a kernel once; the data pattern drifts every few bundles.
    fn run(&mut self, cpu: u32, code: &Code, phase: u32) {
        for (i, &(group, addr)) in code.iter().enumerate() {
            let pattern = DataPattern::ALL[((phase + i as u32 / 3) % 3) as usize];
            self.program.push(cpu, Op::Bundle { group, addr, pattern });
        }
    }

    fn send(&mut self, src: u32, dst: u32, size: u32) {
        self.program.push(src, Op::Send { dst, size });
        self.program.push(dst, Op::Recv { src, size });
    }

    fn finish(self, name: &str) -> Microbenchmark {
        Microbenchmark {
            name: format!("app/{name}"),
            swept: Swept::Application,
            reps: 1,
            program: self.program,
        }
    }
}

/// Four-stage FIR/IIR pipeline spanning three clusters.
fn filter_chain(b: &mut Builder) -> Result<()> {
    let stages = [0, 1, 4, 12];
    let mut kernels = Vec::new();
    for (k, &cpu) in stages.iter().enumerate() {
        let body: Vec<[&str; 2]> = match k % 2 {
            0 => vec![["ldw", ""], ["mac", "add"], ["mac", "vadd"], ["vmac", "add"], ["shr", ""], ["stw", ""], ["add", "bcc"]],
            _ => vec![["ldh", "nop"], ["vmac", "vmac"], ["vadd", "vsub"], ["mul", "sub"], ["sth", ""], ["cmp", "br"]],
        };
        kernels.push(b.code(cpu, &body)?);
    }
    for it in 0..24 {
        for (k, &cpu) in stages.iter().enumerate() {
            if k > 0 {
                b.program.push(cpu, Op::Recv { src: stages[k - 1], size: 32 });
            }
            for rep in 0..3 {
                b.run(cpu, &kernels[k], it + rep + k as u32);
            }
            if k + 1 < stages.len() {
                b.program.push(cpu, Op::Send { dst: stages[k + 1], size: 32 });
            }
        }
    }
    Ok(())
}

/// Master distributes tiles, four workers multiply-accumulate and return
/// partial results.
fn matmul_tiles(b: &mut Builder) -> Result<()> {
    let master = 0;
    let workers = [1, 2, 3, 8];
    let setup = b.code(master, &[["movi", "movi"], ["ldw", "add"], ["stw", ""]])?;
    let mut kernels = Vec::new();
    for &w in &workers {
        kernels.push(b.code(
            w,
            &[
                ["ldw", "movi"],
                ["mul", "add"],
                ["mac", "add"],
                ["mac", "vmac"],
                ["vmac", "vadd"],
                ["ldh", "xor"],
                ["mac", ""],
                ["stw", "bcc"],
            ],
        )?);
    }
    for round in 0..6 {
        for &w in &workers {
            b.run(master, &setup, round);
            b.send(master, w, 64);
        }
        for (k, &w) in workers.iter().enumerate() {
            for rep in 0..6 {
                b.run(w, &kernels[k], round + rep);
            }
            b.send(w, master, 16);
        }
        b.run(master, &setup, round + 1);
    }
    Ok(())
}

/// Odd-even merge network over eight CPUs in two clusters; partners swap
/// blocks in both directions.
fn sort_network(b: &mut Builder) -> Result<()> {
    let cpus = [0, 1, 2, 3, 4, 5, 6, 7];
    let mut kernels = Vec::new();
    for &c in &cpus {
        kernels.push(b.code(
            c,
            &[["ldw", "cmp"], ["sub", "bcc"], ["and", "or"], ["stw", ""], ["xor", "br"], ["ldw", ""], ["cmp", "bcc"]],
        )?);
    }
    for stage in 0..6u32 {
        for (i, &c) in cpus.iter().enumerate() {
            b.run(c, &kernels[i], stage);
        }
        let pairs: Vec<(usize, usize)> = match stage % 3 {
            0 => (0..8).step_by(2).map(|i| (i, i + 1)).collect(),
            1 => (1..7).step_by(2).map(|i| (i, i + 1)).collect(),
            _ => (0..4).map(|i| (i, i + 4)).collect(),
        };
        for (i, j) in pairs {
            let (a, c) = (cpus[i], cpus[j]);
            b.program.push(a, Op::Send { dst: c, size: 24 });
            b.program.push(c, Op::Send { dst: a, size: 24 });
            b.program.push(a, Op::Recv { src: c, size: 24 });
            b.program.push(c, Op::Recv { src: a, size: 24 });
        }
    }
    Ok(())
}

/// Radix-2 butterfly stages across all four clusters.
fn fft_butterfly(b: &mut Builder) -> Result<()> {
    let cpus: Vec<u32> = (0..8).map(|i| (i / 2) * 4 + i % 2).collect();
    let mut kernels = Vec::new();
    for &c in &cpus {
        kernels.push(b.code(
            c,
            &[["vmac", "vadd"], ["vsub", "vsub"], ["ldw", "vadd"], ["vmac", "vmac"], ["stw", "nop"], ["shl", "add"]],
        )?);
    }
    for stage in 0..3u32 {
        for (i, &c) in cpus.iter().enumerate() {
            for rep in 0..4 {
                b.run(c, &kernels[i], stage + rep);
            }
        }
        for i in 0..cpus.len() {
            let j = i ^ (1 << stage);
            if j > i {
                let (a, c) = (cpus[i], cpus[j]);
                b.program.push(a, Op::Send { dst: c, size: 64 });
                b.program.push(c, Op::Send { dst: a, size: 64 });
                b.program.push(a, Op::Recv { src: c, size: 64 });
                b.program.push(c, Op::Recv { src: a, size: 64 });
            }
        }
    }
    Ok(())
}

/// Sixteen CPUs each reduce a local block, then combine pairwise in a tree.
fn reduction_tree(b: &mut Builder) -> Result<()> {
    let mut local = Vec::new();
    let mut combine = Vec::new();
    for c in 0..APP_CPUS {
        local.push(b.code(c, &[["ldw", "add"], ["add", "add"], ["ldh", "sub"], ["div", ""], ["and", "bcc"]])?);
        combine.push(b.code(c, &[["add", ""], ["stw", "nop"]])?);
    }
    for c in 0..APP_CPUS {
        for rep in 0..(4 + c % 3) {
            b.run(c, &local[c as usize], rep + c);
        }
    }
    let mut stride = 1;
    while stride < APP_CPUS {
        for c in (0..APP_CPUS).step_by(2 * stride as usize) {
            let from = c + stride;
            b.send(from, c, 8);
            b.run(c, &combine[c as usize], stride);
        }
        stride *= 2;
    }
    b.program.push(0, Op::Sync);
    Ok(())
}

/// The five held-out applications, in [`APP_NAMES`] order.
pub fn applications(isa: &Isa, config: &SystemConfig) -> Result<Vec<Microbenchmark>> {
    let builders: [fn(&mut Builder) -> Result<()>; 5] =
        [filter_chain, matmul_tiles, sort_network, fft_butterfly, reduction_tree];
    APP_NAMES
        .iter()
        .zip(builders)
        .map(|(name, build)| {
            let mut b = Builder::new(isa, config)?;
            build(&mut b)?;
            Ok(b.finish(name))
        })
        .collect()
}
