//! System-state events, abstraction levels and model functions.
//!
//! A simulation emits a [`Trace`] of fine-grained [`StateEvent`]s. A
//! [`ModelFunction`] maps each event to a model-state key (or discards it);
//! [`abstract_trace`] turns a trace into the [`StateCountVector`] that energy
//! models are fitted on and evaluated against. Keys are flat `/`-separated
//! strings such as `cpu0/active` or `cpu/g:17/p:2`.

mod event;
mod function;

pub use event::{Attrs, ComponentId, EventKind, StateEvent, Trace, ATTR_NAMES};
pub use function::{
    abstract_trace, builtin, component_class, compose, AbstractionLevel, Emit, MatchValue,
    ModelFunction, Rule, RuleStage, Stage, State, StateCountVector, Template,
};

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::error::Error;

    fn ev(cycle: u64, component: ComponentId, kind: EventKind, attrs: Attrs) -> StateEvent {
        StateEvent::new(cycle, component, kind, attrs)
    }

    fn bundle(cycle: u64, cpu: u32, group: u32, pattern: u32) -> StateEvent {
        ev(
            cycle,
            ComponentId::Cpu(cpu),
            EventKind::BundleIssue,
            Attrs::default().with("group", group).with("pattern", pattern).with("addr", 0),
        )
    }

    #[test]
    fn identity_counts_distinct_states() {
        let t = Trace::new(vec![
            bundle(0, 0, 3, 1),
            bundle(1, 0, 3, 1),
            bundle(2, 0, 4, 1),
            ev(3, ComponentId::Cpu(0), EventKind::Idle, Attrs::default()),
        ]);
        let v = abstract_trace(&t, &builtin::identity()).unwrap();
        assert_eq!(v.counts.len(), 3);
        assert_eq!(v.get("cpu0/bundle/group:3/pattern:1/addr:0"), 2);
        assert_eq!(v.get("cpu0/bundle/group:4/pattern:1/addr:0"), 1);
        assert_eq!(v.get("cpu0/idle"), 1);
        assert_eq!(v.duration, 4);
        assert_eq!(v.source_events, 4);
    }

    #[test]
    fn active_idle_hundred_cycles() {
        let events = (0..100)
            .map(|c| {
                if c < 60 {
                    bundle(c, 0, 1, 0)
                } else {
                    ev(c, ComponentId::Cpu(0), EventKind::Idle, Attrs::default())
                }
            })
            .collect();
        let v = abstract_trace(&Trace::new(events), &builtin::active_idle()).unwrap();
        let expect: BTreeMap<String, u64> =
            [("cpu0/active".to_string(), 60), ("cpu0/idle".to_string(), 40)].into();
        assert_eq!(v.counts, expect);
        assert_eq!(v.duration, 100);
    }

    #[test]
    fn unmapped_kind_is_an_error() {
        let f = ModelFunction::parse(r#"[{"match": {"kind": "bundle"}, "emit": "g{group}"}]"#)
            .unwrap();
        let t = Trace::new(vec![ev(0, ComponentId::Cpu(0), EventKind::Idle, Attrs::default())]);
        assert!(matches!(abstract_trace(&t, &f), Err(Error::Unmapped(_))));
    }

    #[test]
    fn rule_file_forms() {
        let bare = ModelFunction::parse(
            r#"[{"match": {"kind": "bundle", "pattern": 2}, "emit": "p2/g:{group}"},
                {"match": {}, "emit": "discard"}]"#,
        )
        .unwrap();
        let t = Trace::new(vec![bundle(0, 0, 5, 2), bundle(1, 0, 5, 1)]);
        let v = abstract_trace(&t, &bare).unwrap();
        assert_eq!(v.counts, [("p2/g:5".to_string(), 1)].into());

        let f = builtin::fine_exact(2048);
        assert_eq!(ModelFunction::parse(&f.to_json()).unwrap(), f);
        assert!(ModelFunction::parse(r#"[{"match": {}, "emit": "a/{oops"}]"#).is_err());
    }

    #[test]
    fn derived_variables() {
        let e = ev(
            0,
            ComponentId::Ni(0),
            EventKind::NiTransfer,
            Attrs::default()
                .with("src_x", 0)
                .with("src_y", 0)
                .with("dst_x", 2)
                .with("dst_y", 1)
                .with("size", 64)
                .with("flit", 0),
        );
        assert_eq!(
            builtin::noc_hops().map_event(&e).unwrap().as_deref(),
            Some("noc/h:3/s:64")
        );
        let b = ev(
            0,
            ComponentId::Cpu(0),
            EventKind::BundleIssue,
            Attrs::default().with("group", 1).with("pattern", 0).with("addr", 2048 + 7),
        );
        assert_eq!(
            builtin::fine_exact(2048).map_event(&b).unwrap().as_deref(),
            Some("cpu/g:1/p:0/d:3")
        );
    }

    #[test]
    fn compose_identity_and_discard() {
        let t = Trace::new(vec![
            bundle(0, 0, 3, 1),
            ev(1, ComponentId::Cpu(1), EventKind::Idle, Attrs::default()),
        ]);
        let f = builtin::active_idle();
        let composed = compose(&builtin::identity(), &f).unwrap();
        assert_eq!(
            abstract_trace(&t, &composed).unwrap(),
            abstract_trace(&t, &f).unwrap()
        );
        let after_identity = compose(&f, &builtin::identity()).unwrap();
        assert_eq!(
            abstract_trace(&t, &after_identity).unwrap().counts,
            abstract_trace(&t, &f).unwrap().counts
        );
        let none = compose(&builtin::discard_all(), &f).unwrap();
        assert!(abstract_trace(&t, &none).unwrap().counts.is_empty());
    }

    #[test]
    fn compose_rejects_refinement() {
        let err = compose(&builtin::fine(), &builtin::binary_usage()).unwrap_err();
        assert!(matches!(err, Error::DomainMismatch(_)));
    }

    #[test]
    fn class_merge_counts_used_instances() {
        let t = Trace::new(vec![
            bundle(0, 0, 3, 1),
            bundle(1, 0, 3, 1),
            bundle(0, 5, 3, 1),
            ev(2, ComponentId::Cpu(5), EventKind::Idle, Attrs::default()),
        ]);
        let b = abstract_trace(&t, &builtin::binary_by_class()).unwrap();
        assert_eq!(b.counts, [("cpu/used".to_string(), 2)].into());
        let a = abstract_trace(&t, &builtin::active_idle_by_class()).unwrap();
        assert_eq!(a.get("cpu/active"), 3);
        assert_eq!(a.get("cpu/idle"), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_event() -> impl Strategy<Value = StateEvent> {
            (0u64..50, 0u32..4, 0usize..7, 0u32..3, 0u32..2, 0u32..3).prop_map(
                |(cycle, idx, kind, group, pattern, flit)| {
                    let kind = EventKind::ALL[kind];
                    let component = match kind {
                        EventKind::FlitHop => ComponentId::Router(idx),
                        EventKind::NiTransfer => ComponentId::Ni(idx),
                        EventKind::BusTransfer => ComponentId::Bus(idx),
                        EventKind::DmemAccess => ComponentId::Dmem(idx),
                        _ => ComponentId::Cpu(idx),
                    };
                    let attrs = match kind {
                        EventKind::BundleIssue => Attrs::default()
                            .with("group", group)
                            .with("pattern", pattern)
                            .with("addr", group * 3),
                        EventKind::NiTransfer | EventKind::FlitHop | EventKind::BusTransfer => {
                            Attrs::default()
                                .with("src_x", idx % 2)
                                .with("src_y", 0)
                                .with("dst_x", group)
                                .with("dst_y", pattern)
                                .with("size", 8 * (group + 1))
                                .with("flit", flit)
                        }
                        EventKind::Sync => Attrs::default().with("packet", pattern),
                        _ => Attrs::default(),
                    };
                    StateEvent::new(cycle, component, kind, attrs)
                },
            )
        }

        fn arb_trace() -> impl Strategy<Value = Trace> {
            proptest::collection::vec(arb_event(), 0..80).prop_map(Trace::new)
        }

        fn per_component(v: &StateCountVector) -> BTreeMap<String, u64> {
            let mut m = BTreeMap::new();
            for (k, c) in &v.counts {
                let comp = k.split('/').next().unwrap().to_string();
                *m.entry(comp).or_default() += c;
            }
            m
        }

        proptest! {
            #[test]
            fn two_stage_coarsening_equals_direct(t in arb_trace()) {
                let two = compose(&builtin::active_to_binary(), &builtin::active_idle()).unwrap();
                prop_assert_eq!(
                    abstract_trace(&t, &two).unwrap().counts,
                    abstract_trace(&t, &builtin::binary_usage()).unwrap().counts
                );
            }

            #[test]
            fn compose_equals_staged_application(t in arb_trace()) {
                // Apply active_idle, then re-key the resulting counts by hand.
                let ai = abstract_trace(&t, &builtin::active_idle()).unwrap();
                let mut staged: BTreeMap<String, u64> = BTreeMap::new();
                for (k, c) in &ai.counts {
                    let class = component_class(k.split('/').next().unwrap());
                    let kind = k.split('/').nth(1).unwrap();
                    *staged.entry(format!("{class}/{kind}")).or_default() += c;
                }
                let direct = abstract_trace(&t, &builtin::active_idle_by_class()).unwrap();
                prop_assert_eq!(direct.counts, staged);
            }

            #[test]
            fn coarsening_refinement(t in arb_trace()) {
                let fine = abstract_trace(&t, &builtin::identity()).unwrap();
                let ai = abstract_trace(&t, &builtin::active_idle()).unwrap();
                let bin = abstract_trace(&t, &builtin::binary_usage()).unwrap();
                prop_assert_eq!(per_component(&fine), per_component(&ai));
                let recovered: BTreeMap<String, u64> = ai
                    .counts
                    .iter()
                    .filter(|(k, c)| k.ends_with("/active") && **c > 0)
                    .map(|(k, _)| (k.replace("/active", "/used"), 1))
                    .collect();
                prop_assert_eq!(bin.counts.clone(), recovered);
                prop_assert!(fine.total() <= fine.source_events);
                prop_assert!(bin.total() <= bin.source_events);
            }

            #[test]
            fn abstraction_is_linear(a in arb_trace(), b in arb_trace()) {
                let f = builtin::fine();
                let ab = abstract_trace(&a.concat(&b), &f).unwrap();
                let mut sum = abstract_trace(&a, &f).unwrap().counts;
                for (k, c) in abstract_trace(&b, &f).unwrap().counts {
                    *sum.entry(k).or_default() += c;
                }
                prop_assert_eq!(ab.counts, sum);
                prop_assert_eq!(ab.duration, a.duration() + b.duration());
            }

            #[test]
            fn trace_text_roundtrip(t in arb_trace()) {
                prop_assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
            }
        }
    }
}
