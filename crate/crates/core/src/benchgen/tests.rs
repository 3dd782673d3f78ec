use super::apps::{applications, APP_NAMES};
use super::*;
use crate::refsim::{imem_spatial, Oracle, OracleParams};
use crate::sysconfig::{enumerate_instruction_groups, InstructionDef};

fn setup() -> (SystemConfig, Isa) {
    let cfg = SystemConfig::default();
    let isa = Isa::builtin(cfg.vliw_slots).unwrap();
    (cfg, isa)
}

fn toy_isa() -> Isa {
    Isa::new(
        vec![InstructionDef {
            mnemonic: "nop".into(),
            iclass: InstructionClass::Nop,
            allowed_slots: [0, 1].into(),
            reads_dmem: false,
            writes_dmem: false,
        }],
        2,
    )
    .unwrap()
}

/// Independent recount: cartesian product of per-slot options.
fn brute_force_groups(isa: &Isa, slots: u32) -> usize {
    let mut combos: Vec<Vec<Option<usize>>> = vec![vec![]];
    for s in 0..slots {
        let mut options: Vec<Option<usize>> = vec![None];
        options.extend((0..isa.len()).filter(|&i| isa.get(i).allowed_slots.contains(&s)).map(Some));
        combos = combos
            .into_iter()
            .flat_map(|c| {
                options.iter().map(move |o| {
                    let mut c = c.clone();
                    c.push(*o);
                    c
                })
            })
            .collect();
    }
    combos.iter().filter(|c| c.iter().any(Option::is_some)).count()
}

#[test]
fn toy_isa_product_count() {
    let cfg = SystemConfig::default();
    let b = gen_instruction_benchmarks(&toy_isa(), &cfg, &DataPattern::ALL, 4).unwrap();
    assert_eq!(b.len(), 9);
}

#[test]
fn shipped_isa_count_matches_brute_force() {
    let (cfg, isa) = setup();
    let b = gen_instruction_benchmarks(&isa, &cfg, &DataPattern::ALL, DEFAULT_REPS).unwrap();
    assert_eq!(b.len(), brute_force_groups(&isa, cfg.vliw_slots) * 3);
    assert_eq!(b.len(), enumerate_instruction_groups(&isa, cfg.vliw_slots).len() * 3);
    assert_eq!(REFERENCE_ISA_TESTS, 60_279);
}

#[test]
fn instruction_benchmark_shape() {
    let (cfg, isa) = setup();
    let b = gen_instruction_benchmarks(&isa, &cfg, &[DataPattern::Ones], 8).unwrap();
    let ops = &b[5].program.cpus[&0];
    assert_eq!(ops.len(), 9);
    let catalog = GroupCatalog::new(&isa, cfg.vliw_slots);
    let setup = setup_group(&isa, &catalog);
    assert!(catalog.decode(setup).compressed());
    assert_eq!(ops[0], Op::Bundle { group: setup, addr: 0, pattern: DataPattern::Ones });
    assert!(ops[1..]
        .iter()
        .all(|o| *o == Op::Bundle { group: 5, addr: BODY_ADDR, pattern: DataPattern::Ones }));
}

/// Ops that differ between two programs, as (cpu, index, a, b).
fn diff(a: &Program, b: &Program) -> Vec<(Op, Op)> {
    assert_eq!(a.cpus.keys().collect::<Vec<_>>(), b.cpus.keys().collect::<Vec<_>>());
    let mut out = Vec::new();
    for (cpu, ops) in &a.cpus {
        let other = &b.cpus[cpu];
        assert_eq!(ops.len(), other.len());
        out.extend(ops.iter().zip(other).filter(|(x, y)| x != y).map(|(x, y)| (*x, *y)));
    }
    out
}

#[test]
fn sweeps_isolate_their_variable() {
    let (cfg, isa) = setup();
    let instr = gen_instruction_benchmarks(&isa, &cfg, &[DataPattern::Zeros], 16).unwrap();
    for w in instr.windows(2) {
        for (x, y) in diff(&w[0].program, &w[1].program) {
            match (x, y) {
                (Op::Bundle { group: g1, addr: a1, pattern: p1 }, Op::Bundle { group: g2, addr: a2, pattern: p2 }) => {
                    assert_ne!(g1, g2);
                    assert_eq!((a1, p1), (a2, p2));
                }
                other => panic!("unexpected difference {other:?}"),
            }
        }
    }
    let pos = gen_position_benchmarks(&cfg, &isa, 3, 10, 30, 4).unwrap();
    for w in pos.windows(2) {
        for (x, y) in diff(&w[0].program, &w[1].program) {
            match (x, y) {
                (Op::Bundle { group: g1, addr: a1, pattern: p1 }, Op::Bundle { group: g2, addr: a2, pattern: p2 }) => {
                    assert_ne!(a1, a2);
                    assert_eq!((g1, p1), (g2, p2));
                }
                other => panic!("unexpected difference {other:?}"),
            }
        }
    }
    let api = ApiDescription::builtin(&cfg).unwrap();
    let comm = gen_comm_benchmarks(&api, &cfg, ClusterCoord::new(0, 0), ClusterCoord::new(1, 1), 2).unwrap();
    for w in comm.windows(2) {
        for (x, y) in diff(&w[0].program, &w[1].program) {
            match (x, y) {
                (Op::Send { dst: d1, size: s1 }, Op::Send { dst: d2, size: s2 }) => {
                    assert_eq!(d1, d2);
                    assert_ne!(s1, s2);
                }
                (Op::Recv { src: d1, size: s1 }, Op::Recv { src: d2, size: s2 }) => {
                    assert_eq!(d1, d2);
                    assert_ne!(s1, s2);
                }
                other => panic!("unexpected difference {other:?}"),
            }
        }
    }
}

#[test]
fn generation_is_reproducible() {
    let (cfg, isa) = setup();
    let a = gen_instruction_benchmarks(&isa, &cfg, &DataPattern::ALL, 4).unwrap();
    let b = gen_instruction_benchmarks(&isa, &cfg, &DataPattern::ALL, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(applications(&isa, &cfg).unwrap(), applications(&isa, &cfg).unwrap());
    let names: std::collections::BTreeSet<_> = a.iter().map(|m| &m.name).collect();
    assert_eq!(names.len(), a.len());
}

#[test]
fn position_sweep_counts_and_errors() {
    let (cfg, isa) = setup();
    let catalog = GroupCatalog::new(&isa, cfg.vliw_slots);
    let nop = isa.find("nop").unwrap();
    let nopnop = catalog.encode(&InstructionGroup { slots: vec![SlotOp::Instr(nop); 2] }).unwrap();
    let one = catalog.encode(&InstructionGroup { slots: vec![SlotOp::Instr(nop), SlotOp::Empty] }).unwrap();
    assert_eq!(gen_position_benchmarks(&cfg, &isa, one, 0, 799, 1).unwrap().len(), 800);
    assert_eq!(gen_position_benchmarks(&cfg, &isa, one, 5, 5, 1).unwrap().len(), 1);
    // The full bundle occupies two words and must start on an even word.
    let wide = gen_position_benchmarks(&cfg, &isa, nopnop, 0, 799, 1).unwrap();
    assert_eq!(wide.len(), 400);
    assert!(wide.iter().all(|b| matches!(b.swept, Swept::Position { addr } if addr % 2 == 0)));
    assert_eq!(gen_position_benchmarks(&cfg, &isa, nopnop, 5, 6, 1).unwrap().len(), 1);
    assert!(gen_position_benchmarks(&cfg, &isa, nopnop, 5, 5, 1).is_err());
    assert!(gen_position_benchmarks(&cfg, &isa, nopnop, 9, 3, 1).is_err());
    assert!(gen_position_benchmarks(&cfg, &isa, nopnop, 0, cfg.imem_words(), 1).is_err());
}

#[test]
fn position_sweep_reproduces_spatial_term() {
    let (cfg, isa) = setup();
    let params = OracleParams::default();
    let oracle = Oracle::new(&cfg, &isa, &params);
    let catalog = GroupCatalog::new(&isa, cfg.vliw_slots);
    let nop = isa.find("nop").unwrap();
    let nopnop = catalog.encode(&InstructionGroup { slots: vec![SlotOp::Instr(nop); 2] }).unwrap();
    let reps = 4;
    let benches = gen_position_benchmarks(&cfg, &isa, nopnop, 0, 199, reps).unwrap();
    let energies: Vec<f64> = benches.iter().map(|b| oracle.run(&b.program).unwrap().1.total()).collect();
    for (b, e) in benches.iter().zip(&energies) {
        let Swept::Position { addr: a } = b.swept else { panic!() };
        let extra = (e - energies[0]) / f64::from(reps);
        let expect = imem_spatial(&params, &cfg, a).unwrap();
        assert!((extra - expect).abs() < 1e-9, "addr {a}");
    }
}

#[test]
fn pair_sweep_covers_every_ordered_pair() {
    let cfg = SystemConfig { mesh_cols: 3, mesh_rows: 3, ..SystemConfig::default() };
    let api = ApiDescription::builtin(&cfg).unwrap();
    let sizes = send_range(&api).unwrap().values().count();
    let b = gen_pair_benchmarks(&api, &cfg, 1).unwrap();
    assert_eq!(b.len(), 72 * sizes);
    let names: std::collections::BTreeSet<_> = b.iter().map(|m| &m.name).collect();
    assert_eq!(names.len(), b.len());
    assert!(names.contains(&"comm/2.2-0.0/s4".to_string()));
    let single = SystemConfig { mesh_cols: 1, mesh_rows: 1, ..SystemConfig::default() };
    assert!(gen_pair_benchmarks(&api, &single, 1).unwrap().is_empty());
}

#[test]
fn comm_sweep_defaults() {
    let (cfg, _) = setup();
    let api = ApiDescription::builtin(&cfg).unwrap();
    let b = gen_comm_benchmarks(&api, &cfg, ClusterCoord::new(0, 0), ClusterCoord::new(1, 1), 1).unwrap();
    assert_eq!(b.len(), 256);
    assert_eq!(b[0].swept, Swept::PacketSize { size: 4 });
    assert_eq!(b[255].swept, Swept::PacketSize { size: 1024 });
    let window = center_window(&b, CENTER_WINDOW);
    assert_eq!(window.len(), 16);
    assert_eq!(window[0].swept, Swept::PacketSize { size: 484 });
    assert_eq!(window[15].swept, Swept::PacketSize { size: 544 });

    let narrow = ApiDescription::new(
        vec![crate::sysconfig::CommOpDesc {
            name: CommOpName::Send,
            params: Some(SizeRange { min: 8, max: 8, step: 4 }),
        }],
        &cfg,
    )
    .unwrap();
    assert_eq!(gen_comm_benchmarks(&narrow, &cfg, ClusterCoord::new(0, 0), ClusterCoord::new(1, 0), 1).unwrap().len(), 1);
    assert!(gen_comm_benchmarks(&api, &cfg, ClusterCoord::new(0, 0), ClusterCoord::new(5, 0), 1).is_err());
    assert!(gen_comm_benchmarks(&api, &cfg, ClusterCoord::new(1, 0), ClusterCoord::new(1, 0), 1).is_err());
    assert_eq!(gen_local_comm_benchmarks(&api, &cfg, ClusterCoord::new(0, 1), 1).unwrap().len(), 256);
}

#[test]
fn transition_benchmarks_cover_pairs() {
    let t = gen_transition_benchmarks(&TransitionComponent::new(4));
    assert_eq!(t.len(), 16);
    assert_eq!(t[6].sequence, vec![1, 2]);
}

#[test]
fn applications_run_on_the_oracle() {
    let (cfg, isa) = setup();
    let oracle = Oracle::new(&cfg, &isa, &OracleParams::default());
    let apps = applications(&isa, &cfg).unwrap();
    assert_eq!(apps.len(), APP_NAMES.len());
    for app in &apps {
        let (trace, ledger) = oracle.run(&app.program).unwrap();
        assert!(trace.duration() > 50, "{}", app.name);
        assert!(ledger.total() > 0.0);
    }
    let small = SystemConfig { mesh_cols: 1, mesh_rows: 1, ..cfg };
    assert!(applications(&isa, &small).is_err());
}

#[test]
fn benchmark_json_roundtrip() {
    let (cfg, isa) = setup();
    let b = &gen_calibration_benchmarks(&isa, &cfg, &DataPattern::ALL, 8)[1];
    assert_eq!(&Microbenchmark::parse(&b.to_json()).unwrap(), b);
    let csv = manifest_csv(std::slice::from_ref(b), |m| format!("{}.json", m.name.replace('/', "_")));
    assert_eq!(csv.lines().nth(1).unwrap(), "cal/prologue/zeros,prologue,zeros,cal_prologue_zeros.json");
}
