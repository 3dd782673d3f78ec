//! Deterministic cycle-level reference simulator: the ground-truth energy
//! "measurement" that models are fitted against.
//!
//! Every CPU issues one bundle per cycle. Remote sends are segmented into
//! flits that travel XY-routed over the mesh with wormhole timing and no
//! contention; cluster-local sends go over the crossbar. Energy is charged
//! per event from [`OracleParams`]:
//!
//! * bundle: per-slot core (or empty-slot) energy, imem fetch base energy
//!   (compressed or not), imem position term, dmem access per memory slot;
//! * NoC packet: sync + header + per flit `ni_in + ni_out + routers·(router + link)`
//!   where `routers = manhattan + 1` (the source router counts);
//! * local packet: sync + per beat crossbar energy;
//! * static: total static power of all instances times elapsed time.

mod ledger;
mod params;
mod program;
pub mod transition;

use std::collections::{HashMap, VecDeque};

pub use ledger::{EnergyLedger, LedgerComponent, LedgerEntry};
pub use params::{DataPattern, OracleParams};
pub use program::{Op, Program};

use crate::error::{Error, Result};
use crate::statetrace::{Attrs, ComponentId, EventKind, StateEvent, Trace};
use crate::sysconfig::{ClusterCoord, GroupCatalog, Isa, SlotOp, SystemConfig};

pub fn manhattan_dist(a: ClusterCoord, b: ClusterCoord) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Routers visited by dimension-ordered (X then Y) routing, both endpoints
/// included.
pub fn xy_route(from: ClusterCoord, to: ClusterCoord) -> Vec<ClusterCoord> {
    let mut route = vec![from];
    let mut cur = from;
    while cur.x != to.x {
        cur.x = if to.x > cur.x { cur.x + 1 } else { cur.x - 1 };
        route.push(cur);
    }
    while cur.y != to.y {
        cur.y = if to.y > cur.y { cur.y + 1 } else { cur.y - 1 };
        route.push(cur);
    }
    route
}

/// Extra imem fetch energy of word `addr`: the coefficient times the number
/// of set bits in the bank-local index, a stand-in for decoder-tree switching.
pub fn imem_spatial(params: &OracleParams, config: &SystemConfig, addr: u32) -> Result<f64> {
    if addr >= config.imem_words() {
        return Err(Error::invalid("addr", format!("{addr} is outside imem")));
    }
    Ok(params.imem_spatial_coeff * f64::from(imem_depth(config, addr)))
}

pub fn imem_depth(config: &SystemConfig, addr: u32) -> u32 {
    (addr % config.bank_words).count_ones()
}

#[derive(Debug, Clone)]
struct GroupInfo {
    core: [f64; 3],
    compressed: bool,
    dmem_slots: u32,
}

/// A configured reference simulator.
#[derive(Debug, Clone)]
pub struct Oracle {
    config: SystemConfig,
    params: OracleParams,
    catalog: GroupCatalog,
    groups: Vec<GroupInfo>,
}

impl Oracle {
    pub fn new(config: &SystemConfig, isa: &Isa, params: &OracleParams) -> Self {
        let catalog = GroupCatalog::new(isa, config.vliw_slots);
        let groups = (0..=catalog.idle_id())
            .map(|id| {
                let g = catalog.decode(id);
                let mut core = [0.0; 3];
                for p in DataPattern::ALL {
                    core[p as usize] = g
                        .slots
                        .iter()
                        .map(|s| match s {
                            SlotOp::Instr(i) => params.core(isa.get(*i).iclass, p),
                            SlotOp::Empty => params.empty_slot_energy,
                        })
                        .sum();
                }
                GroupInfo {
                    core,
                    compressed: g.compressed(),
                    dmem_slots: g.instrs().filter(|i| isa.get(*i).accesses_dmem()).count() as u32,
                }
            })
            .collect();
        Self {
            config: config.clone(),
            params: params.clone(),
            catalog,
            groups,
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn catalog(&self) -> &GroupCatalog {
        &self.catalog
    }

    /// Dynamic energy of one bundle, split into (core, imem, dmem).
    pub fn bundle_energy(&self, group: u32, addr: u32, pattern: DataPattern) -> Result<(f64, f64, f64)> {
        let info = self
            .groups
            .get(group as usize)
            .ok_or_else(|| Error::invalid("group", format!("unknown group {group}")))?;
        let imem = self.params.imem_base(info.compressed) + imem_spatial(&self.params, &self.config, addr)?;
        let dmem = f64::from(info.dmem_slots) * self.params.dmem(pattern);
        Ok((info.core[pattern as usize], imem, dmem))
    }

    /// Closed-form energy of one packet (static excluded).
    pub fn packet_energy(&self, src_cpu: u32, dst_cpu: u32, size: u32) -> f64 {
        let p = &self.params;
        let flits = f64::from(self.config.flits(size));
        let (a, b) = (self.config.cluster_of(src_cpu), self.config.cluster_of(dst_cpu));
        if a == b {
            p.sync_energy + flits * p.bus_beat_energy
        } else {
            let routers = f64::from(manhattan_dist(a, b) + 1);
            p.sync_energy
                + p.packet_header_energy
                + flits
                    * (p.ni_in_flit_energy
                        + p.ni_out_flit_energy
                        + routers * (p.router_flit_energy + p.link_flit_energy))
        }
    }

    pub fn run(&self, program: &Program) -> Result<(Trace, EnergyLedger)> {
        program.validate(&self.config, &self.catalog)?;
        Run::new(self, program).execute()
    }
}

/// Runs `program` on a fresh oracle.
pub fn run_program(
    config: &SystemConfig,
    isa: &Isa,
    params: &OracleParams,
    program: &Program,
) -> Result<(Trace, EnergyLedger)> {
    Oracle::new(config, isa, params).run(program)
}

struct CpuState<'p> {
    id: u32,
    ops: &'p [Op],
    pc: usize,
    ready: u64,
    active: Vec<bool>,
}

impl CpuState<'_> {
    fn done(&self) -> bool {
        self.pc >= self.ops.len()
    }

    fn mark_active(&mut self, cycle: u64) {
        let c = cycle as usize;
        if self.active.len() <= c {
            self.active.resize(c + 1, false);
        }
        self.active[c] = true;
    }
}

struct Run<'o, 'p> {
    oracle: &'o Oracle,
    cpus: Vec<CpuState<'p>>,
    channels: HashMap<(u32, u32), VecDeque<(u64, u32)>>,
    events: Vec<StateEvent>,
    energy: Vec<LedgerEntry>,
}

impl<'o, 'p> Run<'o, 'p> {
    fn new(oracle: &'o Oracle, program: &'p Program) -> Self {
        let cpus = program
            .cpus
            .iter()
            .filter(|(_, ops)| !ops.is_empty())
            .map(|(&id, ops)| CpuState {
                id,
                ops,
                pc: 0,
                ready: 0,
                active: Vec::new(),
            })
            .collect();
        Self {
            oracle,
            cpus,
            channels: HashMap::new(),
            events: Vec::new(),
            energy: Vec::new(),
        }
    }

    fn charge(&mut self, cycle: u64, component: LedgerComponent, pj: f64) {
        if pj != 0.0 {
            self.energy.push(LedgerEntry { cycle, component, pj });
        }
    }

    fn emit(&mut self, cycle: u64, component: ComponentId, kind: EventKind, attrs: Attrs) {
        self.events.push(StateEvent::new(cycle, component, kind, attrs));
    }

    /// Earliest cycle at which CPU `i` can start its next op, if known.
    fn start_time(&self, i: usize) -> Option<u64> {
        let cpu = &self.cpus[i];
        match cpu.ops[cpu.pc] {
            Op::Recv { src, .. } => self
                .channels
                .get(&(src, cpu.id))
                .and_then(|q| q.front())
                .map(|&(deliver, _)| deliver.max(cpu.ready)),
            _ => Some(cpu.ready),
        }
    }

    fn execute(mut self) -> Result<(Trace, EnergyLedger)> {
        loop {
            let pending: Vec<usize> = (0..self.cpus.len()).filter(|&i| !self.cpus[i].done()).collect();
            if pending.is_empty() {
                break;
            }
            let Some(t) = pending.iter().filter_map(|&i| self.start_time(i)).min() else {
                let blocked: Vec<String> = pending.iter().map(|&i| format!("cpu{}", self.cpus[i].id)).collect();
                return Err(Error::Simulation(format!(
                    "deadlock: {} blocked on receive",
                    blocked.join(", ")
                )));
            };
            for i in pending {
                if self.start_time(i) == Some(t) {
                    self.step(i, t);
                }
            }
        }
        Ok(self.finish())
    }

    fn step(&mut self, i: usize, t: u64) {
        let op = self.cpus[i].ops[self.cpus[i].pc];
        let cpu = self.cpus[i].id;
        self.cpus[i].pc += 1;
        let oracle = self.oracle;
        let params = &oracle.params;
        match op {
            Op::Bundle { group, addr, pattern } => {
                let (core, imem, _) = oracle.bundle_energy(group, addr, pattern).expect("validated program");
                self.charge(t, LedgerComponent::Core, core);
                self.charge(t, LedgerComponent::Imem, imem);
                let attrs = Attrs::default()
                    .with("group", group)
                    .with("pattern", pattern.index())
                    .with("addr", addr);
                self.emit(t, ComponentId::Cpu(cpu), EventKind::BundleIssue, attrs);
                for _ in 0..oracle.groups[group as usize].dmem_slots {
                    self.charge(t, LedgerComponent::Dmem, params.dmem(pattern));
                    let a = Attrs::default().with("pattern", pattern.index());
                    self.emit(t, ComponentId::Dmem(cpu), EventKind::DmemAccess, a);
                }
                self.cpus[i].mark_active(t);
                self.cpus[i].ready = t + 1;
            }
            Op::Sync => {
                self.charge(t, LedgerComponent::Sync, params.sync_energy);
                let a = Attrs::default().with("packet", 0);
                self.emit(t, ComponentId::Cpu(cpu), EventKind::Sync, a);
                self.cpus[i].mark_active(t);
                self.cpus[i].ready = t + 1;
            }
            Op::Wait { cycles } => {
                self.cpus[i].ready = t + u64::from(cycles);
            }
            Op::Send { dst, size } => {
                self.charge(t, LedgerComponent::Sync, params.sync_energy);
                let a = Attrs::default().with("packet", 1);
                self.emit(t, ComponentId::Cpu(cpu), EventKind::Sync, a);
                self.cpus[i].mark_active(t);
                let flits = self.oracle.config.flits(size);
                let deliver = self.transfer(t, cpu, dst, size);
                self.channels.entry((cpu, dst)).or_default().push_back((deliver, size));
                self.cpus[i].ready = t + 1 + u64::from(flits);
            }
            Op::Recv { src, size } => {
                let (_, got) = self
                    .channels
                    .get_mut(&(src, cpu))
                    .and_then(VecDeque::pop_front)
                    .expect("start_time saw a packet");
                debug_assert_eq!(got, size, "validated channel sizes");
                self.cpus[i].ready = t + 1;
            }
        }
    }

    /// Emits the flit/beat events of one packet injected after cycle `t` and
    /// returns the cycle from which the receiver may consume it.
    fn transfer(&mut self, t: u64, src: u32, dst: u32, size: u32) -> u64 {
        let oracle = self.oracle;
        let (config, params) = (&oracle.config, &oracle.params);
        let (a, b) = (config.cluster_of(src), config.cluster_of(dst));
        let flits = config.flits(size);
        let base = Attrs::default()
            .with("src_x", a.x)
            .with("src_y", a.y)
            .with("dst_x", b.x)
            .with("dst_y", b.y)
            .with("size", size);
        if a == b {
            let bus = ComponentId::Bus(config.cluster_index(a));
            for f in 0..flits {
                let c = t + 1 + u64::from(f);
                self.emit(c, bus, EventKind::BusTransfer, base.with("flit", f));
                self.charge(c, LedgerComponent::Bus, params.bus_beat_energy);
            }
            return t + 1 + u64::from(flits);
        }
        let route: Vec<u32> = xy_route(a, b).into_iter().map(|c| config.cluster_index(c)).collect();
        let hops = (route.len() - 1) as u64;
        let src_ni = config.cluster_index(a);
        self.charge(t + 1, LedgerComponent::Ni, params.packet_header_energy);
        for f in 0..flits {
            let inject = t + 1 + u64::from(f);
            self.emit(inject, ComponentId::Ni(src_ni), EventKind::NiTransfer, base.with("flit", f));
            self.charge(inject, LedgerComponent::Ni, params.ni_in_flit_energy);
            for (j, &r) in route.iter().enumerate() {
                let c = inject + 1 + j as u64;
                let attrs = base.with("flit", f).with("hop", j as u32);
                self.emit(c, ComponentId::Router(r), EventKind::FlitHop, attrs);
                self.charge(c, LedgerComponent::Router, params.router_flit_energy + params.link_flit_energy);
            }
            self.charge(inject + hops + 2, LedgerComponent::Ni, params.ni_out_flit_energy);
        }
        t + u64::from(flits) + hops + 2
    }

    fn finish(mut self) -> (Trace, EnergyLedger) {
        let duration = self
            .cpus
            .iter()
            .map(|c| c.ready)
            .chain(self.events.iter().map(|e| e.cycle + 1))
            .chain(self.energy.iter().map(|e| e.cycle + 1))
            .max()
            .unwrap_or(0);
        let cpus = std::mem::take(&mut self.cpus);
        for cpu in &cpus {
            for c in 0..duration {
                if !cpu.active.get(c as usize).copied().unwrap_or(false) {
                    self.emit(c, ComponentId::Cpu(cpu.id), EventKind::Idle, Attrs::default());
                }
            }
        }
        let per_cycle = self.oracle.params.static_per_cycle(&self.oracle.config);
        self.energy.reserve(duration as usize);
        for c in 0..duration {
            self.charge(c, LedgerComponent::Static, per_cycle);
        }
        (Trace::new(self.events), EnergyLedger::from_entries(self.energy))
    }
}

#[cfg(test)]
mod tests;
