use proptest::prelude::*;
use tc_sizer::cli::{emit_system_spec, parse_system_spec, SpecOptions, SystemSpec};
use tc_sizer::model::{Analytic, Cluster, CompositionExpr, Core, Priority, Stage, System};
use tc_sizer::{ratio, Duration, InterArrival};

fn duration() -> impl Strategy<Value = Duration> {
    prop_oneof![
        (1u64..10_000).prop_map(Duration::from_nanos),
        (1u64..10_000).prop_map(Duration::from_micros),
        (1u64..10_000).prop_map(Duration::from_millis),
        (1u64..100).prop_map(Duration::from_hours),
    ]
}

fn stage(id: String) -> impl Strategy<Value = Stage> {
    (
        duration(),
        prop::option::of(duration()),
        duration(),
        prop_oneof![Just(Duration::ZERO), duration()],
        prop::option::of(1u32..10),
        prop::option::of(0usize..3),
    )
        .prop_map(move |(c, t, d, b, p, core)| {
            let mut s = Stage::new(id.clone(), c, t.map_or(InterArrival::Infinite, InterArrival::Finite), d)
                .with_blocking(b);
            s.priority = p.map(Priority);
            s.core = core.map(|k| format!("core{k}"));
            s
        })
}

fn analytic(index: usize) -> impl Strategy<Value = Analytic> {
    (1usize..5, duration(), any::<bool>()).prop_flat_map(move |(n, deadline, parallel)| {
        let ids: Vec<String> = (0..n).map(|j| format!("a{index}/s {j}")).collect();
        let stages: Vec<_> = ids.iter().cloned().map(stage).collect();
        (stages, Just(ids), Just(deadline), Just(parallel)).prop_map(move |(stages, ids, deadline, parallel)| {
            let leaves: Vec<CompositionExpr> = ids.iter().map(CompositionExpr::leaf).collect();
            let topology = match (leaves.len(), parallel) {
                (1, _) => leaves[0].clone(),
                (_, true) => CompositionExpr::Seq(vec![leaves[0].clone(), CompositionExpr::Par(leaves[1..].to_vec())]),
                (_, false) => CompositionExpr::Seq(leaves),
            };
            Analytic {
                id: format!("analytic~{index}"),
                stages,
                topology,
                end_to_end_deadline: deadline,
            }
        })
    })
}

fn system_spec() -> impl Strategy<Value = SystemSpec> {
    (1usize..4)
        .prop_flat_map(|n| (0..n).map(analytic).collect::<Vec<_>>())
        .prop_flat_map(|analytics| {
            (Just(analytics), 1u64..=100, 0u64..1000, prop::option::of(1u64..=100))
        })
        .prop_map(|(analytics, cap, blocking, u_max)| {
            let mut cluster = Cluster::uniform(3, ratio(cap, 100));
            cluster.cores[1] = Core::new("core1");
            cluster.cores[2].platform_blocking = Duration::from_nanos(blocking);
            SystemSpec {
                system: System::new(analytics),
                cluster,
                options: SpecOptions {
                    u_max: u_max.map(|u| ratio(u, 7)),
                    ..Default::default()
                },
            }
        })
}

proptest! {
    #[test]
    fn parse_inverts_emit(spec in system_spec()) {
        let text = emit_system_spec(&spec);
        let parsed = parse_system_spec(&text).unwrap();
        prop_assert_eq!(&parsed, &spec);
        prop_assert_eq!(emit_system_spec(&parsed), text);
    }
}
