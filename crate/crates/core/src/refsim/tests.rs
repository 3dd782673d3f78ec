use super::*;
use crate::statetrace::{abstract_trace, builtin};
use crate::sysconfig::{CpuCoord, InstructionClass};

fn setup() -> (SystemConfig, Isa, OracleParams) {
    let cfg = SystemConfig::default();
    let isa = Isa::builtin(cfg.vliw_slots).unwrap();
    (cfg, isa, OracleParams::default())
}

fn group_of(isa: &Isa, cfg: &SystemConfig, slots: &[&str]) -> u32 {
    let catalog = GroupCatalog::new(isa, cfg.vliw_slots);
    let g = crate::sysconfig::InstructionGroup {
        slots: slots
            .iter()
            .map(|m| match *m {
                "" => SlotOp::Empty,
                m => SlotOp::Instr(isa.find(m).unwrap()),
            })
            .collect(),
    };
    catalog.encode(&g).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn bundle_program(group: u32, addr: u32, pattern: DataPattern) -> Program {
    let mut p = Program::default();
    p.push(0, Op::Bundle { group, addr, pattern });
    p
}

#[test]
fn single_nop_bundle_accounting() {
    let (cfg, isa, params) = setup();
    let g = group_of(&isa, &cfg, &["nop", "nop"]);
    for pattern in DataPattern::ALL {
        let (trace, ledger) = run_program(&cfg, &isa, &params, &bundle_program(g, 0, pattern)).unwrap();
        let expect = 2.0 * params.core(InstructionClass::Nop, pattern)
            + params.imem_base_uncompressed
            + imem_spatial(&params, &cfg, 0).unwrap()
            + params.static_per_cycle(&cfg);
        assert!(rel(ledger.total(), expect) < 1e-12, "{} vs {expect}", ledger.total());
        let bundles = trace.events.iter().filter(|e| e.kind == EventKind::BundleIssue).count();
        assert_eq!(bundles, 1);
        assert_eq!(trace.duration(), 1);
    }
}

#[test]
fn dmem_charged_per_access() {
    let (cfg, isa, params) = setup();
    let g = group_of(&isa, &cfg, &["ldw", ""]);
    let p = DataPattern::Ones;
    let (trace, ledger) = run_program(&cfg, &isa, &params, &bundle_program(g, 0, p)).unwrap();
    assert!(rel(ledger.component(LedgerComponent::Dmem), params.dmem(p)) < 1e-12);
    assert!(rel(ledger.component(LedgerComponent::Imem), params.imem_base_compressed) < 1e-12);
    assert_eq!(trace.events.iter().filter(|e| e.kind == EventKind::DmemAccess).count(), 1);
}

fn packet_program(cfg: &SystemConfig, src: CpuCoord, dst: CpuCoord, size: u32) -> (Program, u32, u32) {
    let (s, d) = (cfg.cpu_id(src).unwrap(), cfg.cpu_id(dst).unwrap());
    let mut p = Program::default();
    p.push(s, Op::Send { dst: d, size });
    p.push(d, Op::Recv { src: s, size });
    (p, s, d)
}

fn dynamic(ledger: &EnergyLedger) -> f64 {
    ledger.total() - ledger.component(LedgerComponent::Static)
}

#[test]
fn same_flit_count_same_energy() {
    let (cfg, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let e = |size| {
        let (p, ..) = packet_program(&cfg, CpuCoord::new(0, 0, 0), CpuCoord::new(1, 1, 0), size);
        dynamic(&oracle.run(&p).unwrap().1)
    };
    assert_eq!(e(4), e(8));
    assert!(e(9) > e(8));
}

#[test]
fn staircase_zoom_window() {
    let (cfg, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let sizes: Vec<u32> = (374..=446).step_by(2).collect();
    assert_eq!(sizes.len(), 37);
    let energies: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            let (p, ..) = packet_program(&cfg, CpuCoord::new(0, 0, 0), CpuCoord::new(1, 1, 0), s);
            dynamic(&oracle.run(&p).unwrap().1)
        })
        .collect();
    for i in 1..sizes.len() {
        let stepped = sizes[i].div_ceil(8) != sizes[i - 1].div_ceil(8);
        assert!(energies[i] >= energies[i - 1]);
        assert_eq!(energies[i] > energies[i - 1], stepped, "size {}", sizes[i]);
        // with 2-byte increments the step follows each multiple of 8
        assert_eq!(stepped, sizes[i - 1].is_multiple_of(8));
    }
}

#[test]
fn imem_spatial_examples() {
    let (cfg, _, params) = setup();
    assert_eq!(imem_spatial(&params, &cfg, 0).unwrap(), 0.0);
    assert!(rel(imem_spatial(&params, &cfg, 7).unwrap(), 3.0 * params.imem_spatial_coeff) < 1e-12);
    assert!(imem_spatial(&params, &cfg, cfg.imem_words()).is_err());
    let values: Vec<f64> = (0..800).map(|a| imem_spatial(&params, &cfg, a).unwrap()).collect();
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let max_pop = (0u32..800).map(u32::count_ones).max().unwrap();
    assert!(rel(max - min, params.imem_spatial_coeff * f64::from(max_pop)) < 1e-12);
}

#[test]
fn spatial_range_compressed_at_least_uncompressed() {
    let (cfg, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let one = group_of(&isa, &cfg, &["nop", ""]);
    let two = group_of(&isa, &cfg, &["nop", "nop"]);
    let range = |g: u32, wpb: u32| {
        let v: Vec<f64> = (0..cfg.imem_words() / wpb)
            .map(|pos| oracle.bundle_energy(g, pos * wpb, DataPattern::Zeros).unwrap().1)
            .collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    assert!(range(one, cfg.words_per_bundle(true)) >= range(two, cfg.words_per_bundle(false)));
}

#[test]
fn manhattan_matches_route_on_3x3() {
    let cfg = SystemConfig {
        mesh_cols: 3,
        mesh_rows: 3,
        ..SystemConfig::default()
    };
    assert_eq!(manhattan_dist(ClusterCoord::new(0, 0), ClusterCoord::new(0, 0)), 0);
    assert_eq!(manhattan_dist(ClusterCoord::new(0, 0), ClusterCoord::new(2, 1)), 3);
    for a in cfg.clusters() {
        for b in cfg.clusters() {
            let route = xy_route(a, b);
            assert_eq!(route.len() as u32 - 1, manhattan_dist(a, b));
            assert_eq!((route[0], *route.last().unwrap()), (a, b));
            for w in route.windows(2) {
                assert_eq!(manhattan_dist(w[0], w[1]), 1);
            }
        }
    }
}

#[test]
fn path_additivity_all_pairs_3x3() {
    let cfg = SystemConfig {
        mesh_cols: 3,
        mesh_rows: 3,
        ..SystemConfig::default()
    };
    let (_, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let size = 40;
    for a in cfg.clusters() {
        for b in cfg.clusters() {
            if a == b {
                continue;
            }
            let (p, s, d) = packet_program(&cfg, CpuCoord::new(a.x, a.y, 0), CpuCoord::new(b.x, b.y, 1), size);
            let (trace, ledger) = oracle.run(&p).unwrap();
            let flits = f64::from(cfg.flits(size));
            let per_hop: f64 = xy_route(a, b)
                .iter()
                .map(|_| params.router_flit_energy + params.link_flit_energy)
                .sum();
            let expect = params.sync_energy
                + params.packet_header_energy
                + flits * (params.ni_in_flit_energy + params.ni_out_flit_energy + per_hop);
            assert!(rel(dynamic(&ledger), expect) < 1e-12);
            assert!(rel(oracle.packet_energy(s, d, size), expect) < 1e-12);
            let hops = trace.events.iter().filter(|e| e.kind == EventKind::FlitHop).count();
            assert_eq!(hops as u32, cfg.flits(size) * (manhattan_dist(a, b) + 1));
        }
    }
}

#[test]
fn local_transfer_uses_bus() {
    let (cfg, isa, params) = setup();
    let (p, s, d) = packet_program(&cfg, CpuCoord::new(0, 0, 0), CpuCoord::new(0, 0, 3), 20);
    let (trace, ledger) = run_program(&cfg, &isa, &params, &p).unwrap();
    assert!(rel(dynamic(&ledger), params.sync_energy + 3.0 * params.bus_beat_energy) < 1e-12);
    assert_eq!(ledger.component(LedgerComponent::Router), 0.0);
    assert!(trace.events.iter().all(|e| e.kind != EventKind::FlitHop));
    let oracle = Oracle::new(&cfg, &isa, &params);
    assert!(rel(oracle.packet_energy(s, d, 20), dynamic(&ledger)) < 1e-12);
}

#[test]
fn monotone_in_size() {
    let (cfg, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let mut last = 0.0;
    for size in 1..=200 {
        let e = oracle.packet_energy(0, 15, size);
        let stepped = size == 1 || size.div_ceil(8) != (size - 1).div_ceil(8);
        assert!(e >= last);
        assert_eq!(e > last, stepped);
        last = e;
    }
}

#[test]
fn simd_bundle_above_nop_bundle() {
    let (cfg, isa, params) = setup();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let simd = group_of(&isa, &cfg, &["vadd", "vmac"]);
    let nop = group_of(&isa, &cfg, &["nop", "nop"]);
    for p in DataPattern::ALL {
        let e = |g| {
            let (c, i, d) = oracle.bundle_energy(g, 0, p).unwrap();
            c + i + d
        };
        assert!(e(simd) > e(nop));
    }
}

fn mixed_program(cfg: &SystemConfig, isa: &Isa) -> Program {
    let catalog = GroupCatalog::new(isa, cfg.vliw_slots);
    let mut p = Program::default();
    for i in 0..50u32 {
        let pattern = DataPattern::from_index(i % 3).unwrap();
        p.push(0, Op::Bundle { group: (i * 37) % catalog.len(), addr: i * 2, pattern });
        p.push(5, Op::Bundle { group: (i * 11) % catalog.len(), addr: i * 2 + 100, pattern });
    }
    p.push(0, Op::Send { dst: 5, size: 64 });
    p.push(5, Op::Recv { src: 0, size: 64 });
    p.push(5, Op::Send { dst: 6, size: 12 });
    p.push(6, Op::Recv { src: 5, size: 12 });
    p.push(6, Op::Sync);
    p.push(6, Op::Wait { cycles: 5 });
    p
}

#[test]
fn deterministic_and_conserving() {
    let (cfg, isa, params) = setup();
    let p = mixed_program(&cfg, &isa);
    let a = run_program(&cfg, &isa, &params, &p).unwrap();
    let b = run_program(&cfg, &isa, &params, &p).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let sum: f64 = a.1.breakdown().values().sum();
    assert!(rel(sum, a.1.total()) < 1e-9);
    let entries: f64 = a.1.entries().iter().map(|e| e.pj).sum();
    assert!(rel(entries, a.1.total()) < 1e-9);
    assert!(a.1.entries().iter().all(|e| e.pj >= 0.0));
    assert_eq!(a.1.component(LedgerComponent::Unclassified), 0.0);
    for w in a.0.events.windows(2) {
        assert!(w[0].cycle <= w[1].cycle);
    }
}

#[test]
fn idle_cycles_are_explicit() {
    let (cfg, isa, params) = setup();
    let p = mixed_program(&cfg, &isa);
    let (trace, _) = run_program(&cfg, &isa, &params, &p).unwrap();
    let v = abstract_trace(&trace, &builtin::active_idle()).unwrap();
    for cpu in [0, 5, 6] {
        let a = v.get(&format!("cpu{cpu}/active"));
        let i = v.get(&format!("cpu{cpu}/idle"));
        assert_eq!(a + i, trace.duration(), "cpu{cpu}");
    }
    assert_eq!(v.get("cpu1/idle"), 0);
}

#[test]
fn receive_waits_for_delivery() {
    let (cfg, isa, params) = setup();
    let (mut p, s, d) = packet_program(&cfg, CpuCoord::new(0, 0, 0), CpuCoord::new(1, 1, 0), 16);
    let nop = group_of(&isa, &cfg, &["nop", "nop"]);
    p.push(d, Op::Bundle { group: nop, addr: 0, pattern: DataPattern::Zeros });
    let (trace, _) = run_program(&cfg, &isa, &params, &p).unwrap();
    let bundle = trace.events.iter().find(|e| e.kind == EventKind::BundleIssue).unwrap();
    // 2 flits, 2 hops: delivered at t + flits + hops + 2, then one cycle of receive
    assert_eq!(bundle.cycle, 2 + 2 + 2 + 1);
    let _ = s;
}

#[test]
fn rejects_invalid_programs() {
    let (cfg, isa, params) = setup();
    let mut p = Program::default();
    p.push(0, Op::Send { dst: 1, size: 8 });
    assert!(matches!(run_program(&cfg, &isa, &params, &p), Err(Error::Invalid { .. })));
    let p = bundle_program(0, cfg.imem_words(), DataPattern::Zeros);
    assert!(run_program(&cfg, &isa, &params, &p).is_err());
    let p = bundle_program(10_000, 0, DataPattern::Zeros);
    assert!(run_program(&cfg, &isa, &params, &p).is_err());
    let mut p = Program::default();
    p.push(99, Op::Sync);
    assert!(run_program(&cfg, &isa, &params, &p).is_err());
    let wide = group_of(&isa, &cfg, &["nop", "nop"]);
    let narrow = group_of(&isa, &cfg, &["nop", ""]);
    let p = bundle_program(wide, 7, DataPattern::Zeros);
    assert!(matches!(run_program(&cfg, &isa, &params, &p), Err(Error::Invalid { .. })));
    assert!(run_program(&cfg, &isa, &params, &bundle_program(narrow, 7, DataPattern::Zeros)).is_ok());
}

#[test]
fn crossed_receives_deadlock() {
    let (cfg, isa, params) = setup();
    let mut p = Program::default();
    p.push(0, Op::Recv { src: 1, size: 4 });
    p.push(0, Op::Send { dst: 1, size: 4 });
    p.push(1, Op::Recv { src: 0, size: 4 });
    p.push(1, Op::Send { dst: 0, size: 4 });
    assert!(matches!(run_program(&cfg, &isa, &params, &p), Err(Error::Simulation(_))));
}
