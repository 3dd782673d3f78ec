use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::params::DataPattern;
use crate::error::{Error, Result};
use crate::sysconfig::{GroupCatalog, SystemConfig};

/// One step of a CPU's instruction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    /// Issue instruction group `group` fetched from imem word `addr`.
    Bundle {
        group: u32,
        addr: u32,
        pattern: DataPattern,
    },
    /// Synchronize the channel and push `size` bytes to CPU `dst`.
    Send { dst: u32, size: u32 },
    /// Block until `size` bytes from CPU `src` are available.
    Recv { src: u32, size: u32 },
    /// Stand-alone channel synchronization.
    Sync,
    /// Stall for `cycles` cycles.
    Wait { cycles: u32 },
}

/// Per-CPU operation lists, keyed by linear CPU id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    pub cpus: BTreeMap<u32, Vec<Op>>,
}

impl Program {
    pub fn push(&mut self, cpu: u32, op: Op) {
        self.cpus.entry(cpu).or_default().push(op);
    }

    pub fn extend(&mut self, cpu: u32, ops: impl IntoIterator<Item = Op>) {
        self.cpus.entry(cpu).or_default().extend(ops);
    }

    pub fn ops(&self) -> usize {
        self.cpus.values().map(Vec::len).sum()
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::syntax("program", &e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serializes")
    }

    /// Rejects anything the simulator cannot execute: unknown CPUs or groups,
    /// fetches past the end of imem or not aligned to the bundle size, and
    /// unbalanced channels.
    pub fn validate(&self, config: &SystemConfig, catalog: &GroupCatalog) -> Result<()> {
        let imem_words = config.imem_words();
        let mut sent: BTreeMap<(u32, u32), VecDeque<u32>> = BTreeMap::new();
        let mut received: BTreeMap<(u32, u32), VecDeque<u32>> = BTreeMap::new();
        for (&cpu, ops) in &self.cpus {
            if cpu >= config.cpu_count() {
                return Err(Error::invalid("program.cpu", format!("{cpu} is not on the mesh")));
            }
            for (i, op) in ops.iter().enumerate() {
                let at = || format!("program.cpu{cpu}[{i}]");
                match *op {
                    Op::Bundle { group, addr, .. } => {
                        if !catalog.contains(group) {
                            return Err(Error::invalid(at(), format!("unknown group {group}")));
                        }
                        let words = config.words_per_bundle(catalog.decode(group).compressed());
                        if u64::from(addr) + u64::from(words) > u64::from(imem_words) {
                            return Err(Error::invalid(at(), format!("imem address {addr} out of range")));
                        }
                        if addr % words != 0 {
                            return Err(Error::invalid(
                                at(),
                                format!("imem address {addr} is not aligned to a {words}-word bundle"),
                            ));
                        }
                    }
                    Op::Send { dst, size } => {
                        check_peer(config, cpu, dst, size).map_err(|r| Error::invalid(at(), r))?;
                        sent.entry((cpu, dst)).or_default().push_back(size);
                    }
                    Op::Recv { src, size } => {
                        check_peer(config, cpu, src, size).map_err(|r| Error::invalid(at(), r))?;
                        received.entry((src, cpu)).or_default().push_back(size);
                    }
                    Op::Wait { cycles: 0 } => {
                        return Err(Error::invalid(at(), "wait of zero cycles"));
                    }
                    Op::Sync | Op::Wait { .. } => {}
                }
            }
        }
        if sent != received {
            let bad = sent
                .keys()
                .chain(received.keys())
                .find(|k| sent.get(k) != received.get(k))
                .expect("maps differ");
            return Err(Error::invalid(
                "program.channels",
                format!("sends and receives on cpu{} -> cpu{} do not match", bad.0, bad.1),
            ));
        }
        Ok(())
    }
}

fn check_peer(config: &SystemConfig, cpu: u32, peer: u32, size: u32) -> std::result::Result<(), String> {
    if peer >= config.cpu_count() {
        return Err(format!("peer cpu {peer} is not on the mesh"));
    }
    if peer == cpu {
        return Err("a CPU cannot communicate with itself".into());
    }
    if size == 0 {
        return Err("zero-byte transfer".into());
    }
    Ok(())
}
