//! Energy-aware design space exploration: maps a streaming dataflow graph
//! onto the MPSoC with simulated annealing.
//!
//! Partitions are scored analytically from a fitted [`EnergyModel`]:
//! - every firing processes `g` iterations and costs [`FIRING_OVERHEAD_CYCLES`]
//!   on its CPU on top of the actor's work;
//! - a cloned actor's iterations are split evenly over its clones, placed on
//!   consecutive CPUs of the base CPU's cluster;
//! - a channel between different CPUs sends one packet of `bytes * g` per
//!   firing, priced with the model's `bus/s:` or `noc/h:/s:` key;
//! - the sender is busy `1 + flits` cycles per packet, the receiver one cycle;
//! - static energy per iteration is the system static energy per cycle times
//!   the period (the busiest CPU's cycles per iteration).

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::evaluate;
use crate::modelfit::EnergyModel;
use crate::refsim::{manhattan_dist, DataPattern};
use crate::statetrace::StateCountVector;
use crate::sysconfig::{GroupCatalog, Isa, SystemConfig};

/// Cycles spent per firing outside the actor's work (scheduling, buffer
/// management).
pub const FIRING_OVERHEAD_CYCLES: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub id: String,
    /// Model-state counts of one iteration; one bundle per cycle.
    pub work: BTreeMap<String, u64>,
    pub state_bytes: u32,
    #[serde(default)]
    pub stateless: bool,
}

impl Actor {
    pub fn cycles(&self) -> f64 {
        self.work.values().sum::<u64>() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub src: String,
    pub dst: String,
    /// Bytes per iteration.
    pub bytes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataflowGraph {
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub channels: Vec<Channel>,
}

impl DataflowGraph {
    pub fn parse(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text).map_err(|e| Error::syntax("dataflow graph", &e))?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn actor_index(&self, id: &str) -> Option<usize> {
        self.actors.iter().position(|a| a.id == id)
    }

    /// Channel endpoints as actor indices.
    pub fn edges(&self) -> Result<Vec<(usize, usize, u32)>> {
        self.channels
            .iter()
            .map(|c| {
                let end = |id: &str| {
                    self.actor_index(id)
                        .ok_or_else(|| Error::invalid("channels", format!("unknown actor `{id}`")))
                };
                Ok((end(&c.src)?, end(&c.dst)?, c.bytes))
            })
            .collect()
    }

    /// Non-empty, unique ids, existing endpoints, acyclic.
    pub fn validate(&self) -> Result<()> {
        if self.actors.is_empty() {
            return Err(Error::invalid("actors", "graph has no actors"));
        }
        for (i, a) in self.actors.iter().enumerate() {
            if self.actors[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::invalid("actors", format!("duplicate actor id `{}`", a.id)));
            }
        }
        let edges = self.edges()?;
        let n = self.actors.len();
        let mut indeg = vec![0usize; n];
        for &(_, d, _) in &edges {
            indeg[d] += 1;
        }
        let mut ready: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = ready.pop_front() {
            seen += 1;
            for &(s, d, _) in &edges {
                if s == i {
                    indeg[d] -= 1;
                    if indeg[d] == 0 {
                        ready.push_back(d);
                    }
                }
            }
        }
        if seen < n {
            return Err(Error::invalid("channels", "graph has a cycle"));
        }
        Ok(())
    }
}

/// Four-stage streaming pipeline (source, FIR, FFT, sink) with work in the
/// `cpu/g:{group}/p:{pattern}` state space of `isa`.
pub fn example_pipeline(isa: &Isa, config: &SystemConfig) -> Result<DataflowGraph> {
    let catalog = GroupCatalog::new(isa, config.vliw_slots);
    let work = |parts: &[([&str; 2], DataPattern, u64)]| -> Result<BTreeMap<String, u64>> {
        let mut w = BTreeMap::new();
        for (slots, p, n) in parts {
            let g = catalog.encode_mnemonics(isa, slots)?;
            *w.entry(format!("cpu/g:{g}/p:{}", p.index())).or_default() += n;
        }
        Ok(w)
    };
    use DataPattern::*;
    let actor = |id: &str, work, state_bytes| Actor {
        id: id.into(),
        work,
        state_bytes,
        stateless: false,
    };
    Ok(DataflowGraph {
        actors: vec![
            actor("source", work(&[(["ldw", "add"], Zeros, 8), (["stw", ""], Alternating, 4)])?, 512),
            actor(
                "fir",
                work(&[(["mac", "vadd"], Alternating, 24), (["vmac", "vmac"], Ones, 16), (["ldh", "xor"], Ones, 8)])?,
                2048,
            ),
            actor("fft", work(&[(["vmac", "vadd"], Ones, 32), (["vsub", "vsub"], Alternating, 16)])?, 1024),
            actor("sink", work(&[(["stw", "nop"], Zeros, 6)])?, 256),
        ],
        channels: vec![
            Channel {
                src: "source".into(),
                dst: "fir".into(),
                bytes: 64,
            },
            Channel {
                src: "fir".into(),
                dst: "fft".into(),
                bytes: 128,
            },
            Channel {
                src: "fft".into(),
                dst: "sink".into(),
                bytes: 32,
            },
        ],
    })
}

/// Actor placement (indexed like `graph.actors`), clone factors and the
/// granularity multiplier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub cpus: Vec<u32>,
    pub clones: Vec<u32>,
    pub granularity: u32,
}

impl Partition {
    /// Everything on CPU 0, no clones, `g = 1`.
    pub fn trivial(graph: &DataflowGraph) -> Self {
        Self {
            cpus: vec![0; graph.actors.len()],
            clones: vec![1; graph.actors.len()],
            granularity: 1,
        }
    }

    /// Actor `i` on CPU `i mod n`.
    pub fn round_robin(graph: &DataflowGraph, config: &SystemConfig) -> Self {
        Self {
            cpus: (0..graph.actors.len() as u32).map(|i| i % config.cpu_count()).collect(),
            ..Self::trivial(graph)
        }
    }

    pub fn validate(&self, graph: &DataflowGraph, config: &SystemConfig) -> Result<()> {
        let n = graph.actors.len();
        if self.cpus.len() != n || self.clones.len() != n {
            return Err(Error::invalid("partition", format!("expected {n} actors")));
        }
        if self.granularity == 0 {
            return Err(Error::invalid("granularity", "must be at least 1"));
        }
        for (i, a) in graph.actors.iter().enumerate() {
            if self.cpus[i] >= config.cpu_count() {
                return Err(Error::invalid("partition", format!("actor `{}` mapped to unknown CPU", a.id)));
            }
            let c = self.clones[i];
            if c == 0 || c > config.cpus_per_cluster || (c > 1 && !a.stateless) {
                return Err(Error::invalid("clones", format!("invalid clone factor {c} for `{}`", a.id)));
            }
        }
        Ok(())
    }

    /// CPUs of the clones of actor `i`.
    pub fn clone_cpus(&self, i: usize, config: &SystemConfig) -> impl Iterator<Item = u32> {
        let per = config.cpus_per_cluster;
        let base = self.cpus[i];
        let (first, local) = (base - base % per, base % per);
        (0..self.clones[i]).map(move |k| first + (local + k) % per)
    }

    /// JSON with actor ids.
    pub fn to_json(&self, graph: &DataflowGraph) -> String {
        let named = |v: &[u32]| -> BTreeMap<&str, u32> {
            graph.actors.iter().zip(v).map(|(a, &x)| (a.id.as_str(), x)).collect()
        };
        serde_json::to_string_pretty(&serde_json::json!({
            "cpus": named(&self.cpus),
            "clones": named(&self.clones),
            "granularity": self.granularity,
        }))
        .expect("partition serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    /// Energy per iteration, static included.
    pub energy_pj: f64,
    /// Cycles per iteration of the busiest CPU.
    pub period_cycles: f64,
    pub memory_bytes: Vec<u64>,
    pub feasible: bool,
}

/// Scalar objective `energy * energy_weight + period * time_weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub energy: f64,
    pub time: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { energy: 1.0, time: 0.0 }
    }
}

impl PartitionScore {
    pub fn cost(&self, w: Weights) -> f64 {
        w.energy * self.energy_pj + w.time * self.period_cycles
    }
}

/// Model-derived per-actor and per-packet energies, cached for scoring.
pub struct Scorer<'a> {
    graph: &'a DataflowGraph,
    config: &'a SystemConfig,
    model: &'a EnergyModel,
    edges: Vec<(usize, usize, u32)>,
    actor_pj: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(graph: &'a DataflowGraph, config: &'a SystemConfig, model: &'a EnergyModel) -> Result<Self> {
        graph.validate()?;
        let actor_pj = graph
            .actors
            .iter()
            .map(|a| {
                let e = evaluate(&StateCountVector::from_counts(a.work.clone(), 0), model);
                match e.missing.first() {
                    Some(k) => Err(Error::invalid("model", format!("no energy for `{k}` (actor `{}`)", a.id))),
                    None => Ok(e.total),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            graph,
            config,
            model,
            edges: graph.edges()?,
            actor_pj,
        })
    }

    /// Energy of one packet of `size` bytes between two distinct CPUs.
    pub fn packet_pj(&self, src_cpu: u32, dst_cpu: u32, size: u32) -> Result<f64> {
        let (a, b) = (self.config.cluster_of(src_cpu), self.config.cluster_of(dst_cpu));
        let key = if a == b {
            format!("bus/s:{size}")
        } else {
            format!("noc/h:{}/s:{size}", manhattan_dist(a, b))
        };
        self.model
            .key_energy(&key)
            .ok_or_else(|| Error::invalid("model", format!("no energy for `{key}`")))
    }

    pub fn score(&self, p: &Partition) -> Result<PartitionScore> {
        p.validate(self.graph, self.config)?;
        let cfg = self.config;
        let g = f64::from(p.granularity);
        let n = cfg.cpu_count() as usize;
        let mut cycles = vec![0.0; n];
        let mut memory = vec![0u64; n];
        let mut energy = 0.0;
        for (i, a) in self.graph.actors.iter().enumerate() {
            let c = f64::from(p.clones[i]);
            energy += self.actor_pj[i];
            for cpu in p.clone_cpus(i, cfg) {
                cycles[cpu as usize] += (a.cycles() + FIRING_OVERHEAD_CYCLES / g) / c;
                memory[cpu as usize] += u64::from(a.state_bytes);
            }
        }
        for &(s, d, bytes) in &self.edges {
            let size = bytes * p.granularity;
            let buffer = 2 * u64::from(size);
            let share = 1.0 / f64::from(p.clones[s] * p.clones[d]);
            for cs in p.clone_cpus(s, cfg) {
                memory[cs as usize] += buffer;
            }
            for cd in p.clone_cpus(d, cfg) {
                memory[cd as usize] += buffer;
            }
            for cs in p.clone_cpus(s, cfg) {
                for cd in p.clone_cpus(d, cfg).filter(|&cd| cd != cs) {
                    energy += share * self.packet_pj(cs, cd, size)? / g;
                    cycles[cs as usize] += share * f64::from(1 + cfg.flits(size)) / g;
                    cycles[cd as usize] += share / g;
                }
            }
        }
        let period = cycles.iter().cloned().fold(0.0, f64::max);
        energy += period * self.model.static_per_cycle();
        let feasible = memory.iter().all(|&m| m <= u64::from(cfg.dmem_bytes));
        Ok(PartitionScore {
            energy_pj: energy,
            period_cycles: period,
            memory_bytes: memory,
            feasible,
        })
    }
}

pub fn evaluate_partition(
    graph: &DataflowGraph,
    partition: &Partition,
    config: &SystemConfig,
    model: &EnergyModel,
) -> Result<PartitionScore> {
    Scorer::new(graph, config, model)?.score(partition)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mutation {
    Move,
    Clone,
    Granularity,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [Mutation::Move, Mutation::Clone, Mutation::Granularity];
}

/// Search-space bounds for mutations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Largest clone factor; capped at the cluster size.
    pub max_clones: u32,
    /// Largest granularity; a power of two.
    pub max_granularity: u32,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            max_clones: 4,
            max_granularity: 4,
        }
    }
}

fn try_mutation(
    m: Mutation,
    p: &Partition,
    graph: &DataflowGraph,
    config: &SystemConfig,
    bounds: Bounds,
    rng: &mut impl Rng,
) -> Option<Partition> {
    let mut out = p.clone();
    match m {
        Mutation::Move => {
            let n = config.cpu_count();
            if n < 2 {
                return None;
            }
            let i = rng.gen_range(0..p.cpus.len());
            let other = rng.gen_range(0..n - 1);
            out.cpus[i] = if other >= p.cpus[i] { other + 1 } else { other };
        }
        Mutation::Clone => {
            let max = bounds.max_clones.min(config.cpus_per_cluster);
            let candidates: Vec<usize> = (0..graph.actors.len())
                .filter(|&i| graph.actors[i].stateless && max > 1)
                .collect();
            if candidates.is_empty() {
                return None;
            }
            let i = candidates[rng.gen_range(0..candidates.len())];
            let c = p.clones[i];
            out.clones[i] = match (c > 1, c < max) {
                (true, true) => {
                    if rng.gen_bool(0.5) {
                        c + 1
                    } else {
                        c - 1
                    }
                }
                (false, true) => c + 1,
                (true, false) => c - 1,
                (false, false) => return None,
            };
        }
        Mutation::Granularity => {
            let g = p.granularity;
            let up = g * 2 <= bounds.max_granularity;
            let down = g > 1;
            out.granularity = match (up, down) {
                (true, true) => {
                    if rng.gen_bool(0.5) {
                        g * 2
                    } else {
                        g / 2
                    }
                }
                (true, false) => g * 2,
                (false, true) => g / 2,
                (false, false) => return None,
            };
        }
    }
    Some(out)
}

/// Applies one uniformly chosen mutation, resampling inapplicable ones.
/// Returns the partition unchanged and `None` if no mutation applies.
pub fn mutate(
    partition: &Partition,
    graph: &DataflowGraph,
    config: &SystemConfig,
    bounds: Bounds,
    rng: &mut impl Rng,
) -> (Partition, Option<Mutation>) {
    let mut left = Mutation::ALL.to_vec();
    while !left.is_empty() {
        let m = left[rng.gen_range(0..left.len())];
        match try_mutation(m, partition, graph, config, bounds, rng) {
            Some(p) => return (p, Some(m)),
            None => left.retain(|&x| x != m),
        }
    }
    (partition.clone(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Starting temperature as a fraction of the starting cost.
    pub initial_temp: f64,
    /// Geometric cooling factor per step.
    pub cooling: f64,
    pub steps: u32,
    pub seed: u64,
    pub weights: Weights,
    pub bounds: Bounds,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            initial_temp: 0.05,
            cooling: 0.999,
            steps: 10_000,
            seed: 0,
            weights: Weights::default(),
            bounds: Bounds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u32,
    pub temperature: f64,
    pub current_cost: f64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub partition: Partition,
    pub score: PartitionScore,
    pub cost: f64,
    pub history: Vec<HistoryEntry>,
}

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("step,temperature,current_cost,best_cost\n");
    for h in history {
        out.push_str(&format!("{},{},{},{}\n", h.step, h.temperature, h.current_cost, h.best_cost));
    }
    out
}

/// The first feasible of the trivial and the round-robin partition.
fn start(scorer: &Scorer, graph: &DataflowGraph, config: &SystemConfig) -> Result<(Partition, PartitionScore)> {
    for p in [Partition::trivial(graph), Partition::round_robin(graph, config)] {
        let s = scorer.score(&p)?;
        if s.feasible {
            return Ok((p, s));
        }
    }
    Err(Error::Infeasible(
        "neither all actors on CPU 0 nor round-robin placement fits in data memory".into(),
    ))
}

/// One Metropolis chain on RNG stream `chain` of `schedule.seed`.
fn chain(scorer: &Scorer, schedule: &Schedule, chain: u64) -> Result<AnnealResult> {
    let (graph, config) = (scorer.graph, scorer.config);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    rng.set_stream(chain);
    let (mut cur, mut cur_score) = start(scorer, graph, config)?;
    let w = schedule.weights;
    let mut cur_cost = cur_score.cost(w);
    let scale = cur_cost.abs().max(f64::MIN_POSITIVE);
    let (mut best, mut best_score, mut best_cost) = (cur.clone(), cur_score.clone(), cur_cost);
    let mut temp = schedule.initial_temp * scale;
    let mut history = Vec::with_capacity(schedule.steps as usize + 1);
    history.push(HistoryEntry {
        step: 0,
        temperature: temp,
        current_cost: cur_cost,
        best_cost,
    });
    for step in 1..=schedule.steps {
        let (cand, kind) = mutate(&cur, graph, config, schedule.bounds, &mut rng);
        let u: f64 = rng.gen();
        if kind.is_some() {
            let s = scorer.score(&cand)?;
            if s.feasible {
                let c = s.cost(w);
                let delta = c - cur_cost;
                if delta <= 0.0 || (temp > 0.0 && u < (-delta / temp).exp()) {
                    cur = cand;
                    cur_score = s;
                    cur_cost = c;
                    if cur_cost < best_cost {
                        best = cur.clone();
                        best_score = cur_score.clone();
                        best_cost = cur_cost;
                    }
                }
            }
        }
        temp *= schedule.cooling;
        history.push(HistoryEntry {
            step,
            temperature: temp,
            current_cost: cur_cost,
            best_cost,
        });
    }
    Ok(AnnealResult {
        partition: best,
        score: best_score,
        cost: best_cost,
        history,
    })
}

/// A single annealing chain; deterministic for a fixed seed.
pub fn anneal(
    graph: &DataflowGraph,
    config: &SystemConfig,
    model: &EnergyModel,
    schedule: &Schedule,
) -> Result<AnnealResult> {
    chain(&Scorer::new(graph, config, model)?, schedule, 0)
}

/// `chains` independent chains (RNG streams 0.. of the seed) in the current
/// rayon pool; the lowest cost wins, ties to the lowest stream.
pub fn search(
    graph: &DataflowGraph,
    config: &SystemConfig,
    model: &EnergyModel,
    schedule: &Schedule,
    chains: u32,
) -> Result<AnnealResult> {
    let scorer = Scorer::new(graph, config, model)?;
    let results = (0..u64::from(chains.max(1)))
        .into_par_iter()
        .map(|k| chain(&scorer, schedule, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one chain"))
}

/// Best feasible partition by exhaustive enumeration of every mapping, every
/// power-of-two granularity up to the bound and every clone factor of the
/// stateless actors. Ties go to the first in enumeration order.
pub fn brute_force(
    graph: &DataflowGraph,
    config: &SystemConfig,
    model: &EnergyModel,
    weights: Weights,
    bounds: Bounds,
) -> Result<Option<(Partition, PartitionScore)>> {
    let scorer = Scorer::new(graph, config, model)?;
    let n = graph.actors.len();
    let cpus = config.cpu_count();
    let max_c = bounds.max_clones.min(config.cpus_per_cluster).max(1);
    let clone_max: Vec<u32> = graph.actors.iter().map(|a| if a.stateless { max_c } else { 1 }).collect();
    let mut grans = vec![1];
    while grans.last().unwrap() * 2 <= bounds.max_granularity {
        grans.push(grans.last().unwrap() * 2);
    }
    let mappings = u64::from(cpus).pow(n as u32);
    let clone_combos: u64 = clone_max.iter().map(|&c| u64::from(c)).product();
    let best = (0..mappings)
        .into_par_iter()
        .map(|m| -> Result<Option<(u64, f64, Partition, PartitionScore)>> {
            let mut mapping = vec![0; n];
            let mut r = m;
            for slot in mapping.iter_mut() {
                *slot = (r % u64::from(cpus)) as u32;
                r /= u64::from(cpus);
            }
            let mut best: Option<(u64, f64, Partition, PartitionScore)> = None;
            for (gi, &g) in grans.iter().enumerate() {
                for cc in 0..clone_combos {
                    let mut clones = vec![1; n];
                    let mut r = cc;
                    for (i, c) in clones.iter_mut().enumerate() {
                        *c = 1 + (r % u64::from(clone_max[i])) as u32;
                        r /= u64::from(clone_max[i]);
                    }
                    let p = Partition {
                        cpus: mapping.clone(),
                        clones,
                        granularity: g,
                    };
                    let s = scorer.score(&p)?;
                    let order = (m * grans.len() as u64 + gi as u64) * clone_combos + cc;
                    let cost = s.cost(weights);
                    if s.feasible && best.as_ref().is_none_or(|b| cost < b.1) {
                        best = Some((order, cost, p, s));
                    }
                }
            }
            Ok(best)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a }),
                    (a, b) => a.or(b),
                })
            },
        )?;
    Ok(best.map(|(_, _, p, s)| (p, s)))
}
