use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use jobrec::bench::{
    gen_world, hit_at_k, map_at_k, ndcg_at_k, run_ab, simulate_dialogues, synthetic_scripts, welch_t_test, AbDesign,
    DialogueScript, TargetPredicate, WorldConfig, MAX_ROUNDS,
};
use jobrec::demo::DemoWorld;
use jobrec::service::{InMemoryStore, ManualClock, ServiceConfig, SystemClock};
use proptest::prelude::*;

fn small() -> WorldConfig {
    WorldConfig {
        titles: 8,
        users: 30,
        ..WorldConfig::default()
    }
}

fn ranking() -> impl Strategy<Value = (Vec<u32>, BTreeSet<u32>, usize)> {
    (1usize..40).prop_flat_map(|n| {
        (
            Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle(),
            proptest::collection::btree_set(0u32..(n as u32 + 5), 0..n + 2),
            1usize..n + 5,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metrics_are_bounded((ranked, relevant, k) in ranking()) {
        let hit = hit_at_k(&ranked, &relevant, k).unwrap();
        let ndcg = ndcg_at_k(&ranked, &relevant, k).unwrap();
        let map = map_at_k(&ranked, &relevant, k).unwrap();
        prop_assert!(hit == 0.0 || hit == 1.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ndcg), "ndcg {ndcg}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&map), "map {map}");
        let any_hit = ranked.iter().take(k).any(|x| relevant.contains(x));
        prop_assert_eq!(hit == 1.0, any_hit);
        prop_assert_eq!(ndcg > 0.0, any_hit);
        prop_assert_eq!(map > 0.0, any_hit);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn welch_is_antisymmetric(
        a in proptest::collection::vec(-100.0f64..100.0, 2..30),
        b in proptest::collection::vec(-100.0f64..100.0, 2..30),
    ) {
        let ab = welch_t_test(&a, &b);
        let ba = welch_t_test(&b, &a);
        match (ab, ba) {
            (Ok(ab), Ok(ba)) => {
                prop_assert!((ab.t + ba.t).abs() <= 1e-9 * (1.0 + ab.t.abs()));
                prop_assert!((ab.p - ba.p).abs() <= 1e-12);
                prop_assert!((ab.df - ba.df).abs() <= 1e-9 * ab.df);
                prop_assert!((0.0..=1.0).contains(&ab.p));
                prop_assert!(ab.df > 0.0);
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }
}

#[test]
fn welch_needs_two_samples_per_group() {
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    assert!(welch_t_test(&[1.0, 2.0], &[]).is_err());
}

#[test]
fn worlds_are_determined_by_seed() {
    for seed in 0..10u64 {
        let a = gen_world(seed, small()).unwrap().files();
        let b = gen_world(seed, small()).unwrap().files();
        let c = gen_world(seed + 100, small()).unwrap().files();
        assert_eq!(a, b, "seed {seed}");
        assert_ne!(a, c, "seeds {seed} and {}", seed + 100);
    }
}

#[test]
fn world_references_resolve() {
    let world = gen_world(8, small()).unwrap();
    for p in world.profiles.values() {
        assert!(world.graph.node(&p.current_title).is_some(), "{}", p.current_title);
    }
    for r in world.clicks.records() {
        assert!(world.profiles.contains_key(&r.user));
        assert!(r.shown.iter().all(|o| world.graph.contains(o.as_str())));
        assert!(r.clicked.iter().all(|c| r.shown.contains(c)));
    }
    for t in &world.transitions {
        assert!(world.graph.contains(&t.from) && world.graph.contains(&t.to), "{t:?}");
    }
}

#[test]
fn unmet_targets_are_capped() {
    let world = DemoWorld::load();
    let service = world
        .service(
            ServiceConfig::default(),
            Arc::new(ManualClock::new(0)),
            Arc::new(InMemoryStore::new()),
        )
        .unwrap();
    let script = DialogueScript {
        id: "never".into(),
        user: "u:alex".into(),
        template: String::new(),
        messages: vec!["what skills does a cashier need".into()],
        target: TargetPredicate {
            all_of: vec!["a phrase no answer contains".into()],
            any_of: Vec::new(),
        },
        max_rounds: MAX_ROUNDS,
    };
    let run = simulate_dialogues(&service, &[script]).unwrap();
    assert_eq!(run.outcomes[0].rounds, MAX_ROUNDS);
}

#[test]
fn reported_rounds_never_exceed_the_cap() {
    let world = gen_world(5, small()).unwrap();
    let scripts = synthetic_scripts(&world, 40, 0.5, 9);
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    let report = run_ab(
        &["adapt", "plan_execute", "react_like", "rag_like"],
        &deps,
        &ServiceConfig::default(),
        &scripts,
        AbDesign::Blocked,
        2,
    )
    .unwrap();
    assert_eq!(report.outcomes.len(), scripts.len());
    assert!(report.outcomes.iter().all(|o| (1..=MAX_ROUNDS).contains(&o.rounds)));
    assert!(report.variants.iter().all(|v| v.mean_rounds <= MAX_ROUNDS as f64));
    assert_eq!(report.tests.len(), 6);
}

#[test]
fn blocked_design_balances_script_shapes() {
    let world = gen_world(5, small()).unwrap();
    let scripts = synthetic_scripts(&world, 60, 0.5, 4);
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    let report = run_ab(
        &["adapt", "plan_execute"],
        &deps,
        &ServiceConfig::default(),
        &scripts,
        AbDesign::Blocked,
        11,
    )
    .unwrap();

    let shape: BTreeMap<&str, (&str, usize)> = scripts
        .iter()
        .map(|s| (s.id.as_str(), (s.template.as_str(), s.messages.len())))
        .collect();
    let mut per_block: BTreeMap<(&str, usize), [usize; 2]> = BTreeMap::new();
    for o in &report.outcomes {
        let slot = usize::from(o.variant == "plan_execute");
        per_block.entry(shape[o.id.as_str()]).or_default()[slot] += 1;
    }
    for (block, [a, b]) in per_block {
        assert!(a.abs_diff(b) <= 1, "block {block:?}: {a} vs {b}");
    }
    let ids: BTreeSet<&str> = report.outcomes.iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids.len(), scripts.len());
}

#[test]
fn identical_variants_do_not_differ_in_rounds() {
    let world = gen_world(6, small()).unwrap();
    let scripts = synthetic_scripts(&world, 60, 0.5, 3);
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    let report = run_ab(
        &["adapt", "adapt"],
        &deps,
        &ServiceConfig::default(),
        &scripts,
        AbDesign::Blocked,
        5,
    )
    .unwrap();
    let test = &report.tests[0];
    assert!(test.rounds.p > 0.01, "null comparison p = {}", test.rounds.p);
}

#[test]
fn crossover_plays_every_script_under_every_variant() {
    let world = gen_world(6, small()).unwrap();
    let scripts = synthetic_scripts(&world, 10, 0.5, 3);
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    let report = run_ab(
        &["adapt", "no_memory"],
        &deps,
        &ServiceConfig::default(),
        &scripts,
        AbDesign::Crossover,
        5,
    )
    .unwrap();
    assert_eq!(report.outcomes.len(), 20);
    assert!(report.variants.iter().all(|v| v.scripts == 10));
}

#[test]
fn fewer_than_two_variants_is_rejected() {
    let world = gen_world(6, small()).unwrap();
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    assert!(run_ab(&["adapt"], &deps, &ServiceConfig::default(), &[], AbDesign::Blocked, 0).is_err());
}
