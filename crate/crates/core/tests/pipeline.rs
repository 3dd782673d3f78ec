use enermod::benchgen::apps::applications;
use enermod::campaign::{fit, run_campaign, simplified_model, training_benchmarks, with_workers};
use enermod::estimator::validate;
use enermod::refsim::{Oracle, OracleParams};
use enermod::statetrace::builtin;
use enermod::sysconfig::{ApiDescription, Isa, SystemConfig};

struct Platform {
    cfg: SystemConfig,
    isa: Isa,
    params: OracleParams,
    api: ApiDescription,
}

fn platform() -> Platform {
    let cfg = SystemConfig::default();
    let isa = Isa::builtin(cfg.vliw_slots).unwrap();
    let api = ApiDescription::builtin(&cfg).unwrap();
    Platform { cfg, isa, params: OracleParams::default(), api }
}

#[test]
fn simplified_model_generalizes_to_applications() {
    let p = platform();
    let oracle = Oracle::new(&p.cfg, &p.isa, &p.params);
    let benches = training_benchmarks(&oracle, &p.isa, &p.api, 16).unwrap();
    let measured = run_campaign(&oracle, &benches).unwrap();
    let (model, report) = simplified_model(&measured, &oracle).unwrap();
    assert!(!report.rank_deficient);
    let apps = applications(&p.isa, &p.cfg).unwrap();
    let v = validate(&model, &apps, &oracle).unwrap();
    assert_eq!(v.rows.len(), apps.len());
    assert!(v.mean_rel_error <= 0.05 && v.max_rel_error <= 0.10, "{v:?}");
}

#[test]
fn coarser_models_are_less_accurate() {
    let p = platform();
    let oracle = Oracle::new(&p.cfg, &p.isa, &p.params);
    let benches = training_benchmarks(&oracle, &p.isa, &p.api, 16).unwrap();
    let measured = run_campaign(&oracle, &benches).unwrap();
    let apps = applications(&p.isa, &p.cfg).unwrap();
    let errors: Vec<f64> = [builtin::fine(), builtin::active_idle_by_class(), builtin::binary_by_class()]
        .iter()
        .map(|f| {
            let (model, _) = fit(&measured, f, p.cfg.clock_hz).unwrap();
            validate(&model, &apps, &oracle).unwrap().mean_rel_error
        })
        .collect();
    assert!(errors[0] < errors[1] && errors[1] < errors[2], "{errors:?}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = platform();
    let oracle = Oracle::new(&p.cfg, &p.isa, &p.params);
    let benches = training_benchmarks(&oracle, &p.isa, &p.api, 4).unwrap();
    let run = |workers| {
        with_workers(workers, || {
            let measured = run_campaign(&oracle, &benches).unwrap();
            let (model, _) = simplified_model(&measured, &oracle).unwrap();
            (measured, model.to_json())
        })
        .unwrap()
    };
    let (m1, j1) = run(1);
    let (m4, j4) = run(4);
    assert_eq!(m1, m4);
    assert_eq!(j1, j4);
}
