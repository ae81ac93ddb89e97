//! One line per acceptance criterion. Exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::convert::Infallible;
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use jobrec::agent::{parse_plan, Args, Plan, SubTask, ToolHint, Verdict};
use jobrec::bench::{
    gen_world, map_at_k, modal_recovery, ndcg_at_k, run_ab, synthetic_scripts, welch_t_test, AbDesign, WorldConfig,
};
use jobrec::demo::{routing_set, DemoWorld};
use jobrec::exec::{Executor, OrchestratorConfig, SessionContext, Status, Strategy, ToolContext, ToolRegistry};
use jobrec::kgraph::{KnowledgeGraph, Label, Record, Relation, Value};
use jobrec::par::Mode;
use jobrec::service::{EventKind, InMemoryStore, ManualClock, ResponseEvent, ServiceConfig, SystemClock};
use jobrec::tools::{
    candidate_pool, rank_candidates, recommend_jobs, InteractionKind, InterestState, RecommendOptions, ScoringWeights,
};
use jobrec::tuning::{compare_to_random, optimize, ParamSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const PATH_GRAPHS: usize = 100;
const PATH_WEIGHT_TOL: f64 = 1e-9;
const PATH_BUDGET: Duration = Duration::from_secs(5);

const ROUTING_BUDGET: Duration = Duration::from_secs(1);

const TOOL_SLEEP: Duration = Duration::from_millis(100);
const CONCURRENT_GROUP_MAX_MS: f64 = 180.0;
const SEQUENTIAL_GROUP_MIN_MS: f64 = 200.0;
const LATENCY_REPS: usize = 10;
const LATENCY_MIN_PASSES: usize = 9;
const PARALLEL_BUDGET: Duration = Duration::from_secs(10);

const FUZZED_PLANS: usize = 50;

const METRIC_TOL: f64 = 1e-9;

const WELCH_T_TOL: f64 = 1e-6;
const WELCH_P_TOL: f64 = 1e-4;
/// Two-sided Student t tail at |t| = 1 with 8 degrees of freedom.
const WELCH_P_ORACLE: f64 = 0.3465935070873342;

const BOWL_SEEDS: u64 = 20;
const BOWL_MIN_HITS: usize = 18;
const BOWL_TOL: f64 = 0.05;
const TUNER_BUDGET: Duration = Duration::from_secs(60);

const MONOTONE_TRIPLES: usize = 1000;
const ARGMAX_TIE_TOL: f64 = 1e-12;

const AB_SCRIPTS: usize = 200;
const AB_SIMPLE_FRACTION: f64 = 0.5;
const AB_MAX_P: f64 = 0.01;
const AB_LM_LATENCY_MS: f64 = 1.0;
const AB_LM_TOKEN_LATENCY_MS: f64 = 0.1;
const AB_BUDGET: Duration = Duration::from_secs(300);

const MODAL_MIN_SUPPORT: usize = 20;
const MODAL_MIN_RATE: f64 = 0.95;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("path oracle", path_oracle),
        ("routing exclusivity", routing_exclusivity),
        ("parallel latency", parallel_latency),
        ("executor equivalence", executor_equivalence),
        ("metric oracles", metric_oracles),
        ("welch test", welch_test),
        ("tuner", tuner),
        ("interest monotonicity", interest_monotonicity),
        ("a/b direction", ab_direction),
        ("cache", cache),
        ("hit real transitions harness", hit_real_transitions_harness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<30} {secs:>7.2}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<30} {secs:>7.2}s  {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn within(start: Instant, budget: Duration, detail: String) -> Outcome {
    if start.elapsed() < budget {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {:?}, budget {budget:?}", start.elapsed()))
    }
}

fn random_title_graph(rng: &mut ChaCha8Rng) -> (KnowledgeGraph, usize) {
    let n = rng.random_range(2..=10);
    let mut recs: Vec<Record> = (0..n)
        .map(|i| {
            Record::node(
                &format!("t{i}"),
                Label::JobTitle,
                [("title", Value::from(format!("T{i}")))],
            )
        })
        .collect();
    let mut pairs = BTreeSet::new();
    let target = rng.random_range(0..=20.min(n * (n - 1)));
    while pairs.len() < target {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && pairs.insert((a, b)) {
            // coarse weights so equal-cost alternatives occur
            let w = f64::from(rng.random_range(0..8u32)) * 0.25;
            recs.push(Record::edge(
                &format!("t{a}"),
                &format!("t{b}"),
                Relation::TransitionsTo,
                w,
            ));
        }
    }
    (KnowledgeGraph::from_records(recs).expect("valid random graph"), n)
}

/// Cheapest simple path by exhaustive enumeration.
fn brute_force_cost(graph: &KnowledgeGraph, src: &str, dst: &str) -> Option<f64> {
    fn walk(graph: &KnowledgeGraph, at: &str, dst: &str, cost: f64, seen: &mut Vec<String>, best: &mut Option<f64>) {
        if at == dst {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for e in graph.out_edges(at, Relation::TransitionsTo) {
            let next = e.dst.to_string();
            if !seen.contains(&next) {
                seen.push(next.clone());
                walk(graph, &next, dst, cost + e.weight, seen, best);
                seen.pop();
            }
        }
    }
    let mut best = None;
    walk(graph, src, dst, 0.0, &mut vec![src.to_string()], &mut best);
    best
}

fn path_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce);
    let (mut pairs, mut mismatches) = (0, Vec::new());
    for g in 0..PATH_GRAPHS {
        let (graph, n) = random_title_graph(&mut rng);
        for a in 0..n {
            for b in (0..n).filter(|b| *b != a) {
                let (src, dst) = (format!("t{a}"), format!("t{b}"));
                pairs += 1;
                let fast = graph.weighted_shortest_path(&src, &dst).ok();
                let slow = brute_force_cost(&graph, &src, &dst);
                let ok = match (&fast, slow) {
                    (None, None) => true,
                    (Some(p), Some(c)) => {
                        let summed: f64 = p
                            .nodes
                            .windows(2)
                            .map(|w| {
                                graph
                                    .out_edges(w[0].as_str(), Relation::TransitionsTo)
                                    .find(|e| e.dst == w[1])
                                    .map_or(f64::INFINITY, |e| e.weight)
                            })
                            .sum();
                        (p.total_weight - c).abs() < PATH_WEIGHT_TOL
                            && (summed - p.total_weight).abs() < PATH_WEIGHT_TOL
                            && p.nodes.first().map(|n| n.as_str()) == Some(src.as_str())
                            && p.nodes.last().map(|n| n.as_str()) == Some(dst.as_str())
                    }
                    _ => false,
                };
                if !ok {
                    mismatches.push(format!("graph {g} {src}->{dst}"));
                }
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(format!("{} mismatches, first {}", mismatches.len(), mismatches[0]));
    }
    within(
        start,
        PATH_BUDGET,
        format!("{PATH_GRAPHS} graphs, {pairs} pairs, 0 mismatches"),
    )
}

fn routing_exclusivity() -> Outcome {
    let start = Instant::now();
    let world = DemoWorld::load();
    let orch = world.orchestrator(world.stub_lm(), OrchestratorConfig::adapt());
    let profile = world.profile("u:alex");
    let interest = InterestState::default();
    let set = routing_set();
    let (mut correct, mut leaks) = (0, 0);
    for q in &set {
        let ctx = SessionContext {
            history: &[],
            profile,
            interest: &interest,
        };
        let out = orch
            .run(&q.query, ctx, None, &mut ())
            .map_err(|e| format!("{:?}: {e}", q.query))?;
        correct += usize::from(out.complexity.verdict == q.label);
        if out.complexity.verdict == Verdict::Simple && (out.trace.planner_calls > 0 || out.plan.is_some()) {
            leaks += 1;
        }
    }
    let detail = format!("accuracy {correct}/{}, planner calls on simple path {leaks}", set.len());
    if correct != set.len() || leaks != 0 || set.len() != 40 {
        return Err(detail);
    }
    within(start, ROUTING_BUDGET, detail)
}

fn sleeping_registry() -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for hint in [ToolHint::GraphTemplate, ToolHint::Compare] {
        reg.register(hint, |args: &Args, _: &ToolContext| {
            thread::sleep(TOOL_SLEEP);
            Ok(Some(json!({"key": args.get("v").cloned().unwrap_or_default()})))
        });
    }
    reg
}

fn demo_context() -> ToolContext {
    let world = DemoWorld::load();
    ToolContext::new(
        world.graph.clone(),
        world.profile("u:alex").clone(),
        InterestState::default(),
    )
}

fn parallel_latency() -> Outcome {
    let start = Instant::now();
    let plan = parse_plan(
        r#"[[{"d":"A","tool":"graph_template","args":{"v":"a"}},{"d":"B","tool":"graph_template","args":{"v":"b"}}],[{"d":"C","tool":"compare","args":{"v":"@0.0"}}]]"#,
    )
    .map_err(|e| e.to_string())?;
    let registry = Arc::new(sleeping_registry());
    let ctx = demo_context();
    let concurrent = Executor::new(registry.clone(), Strategy::Concurrent);
    let sequential = Executor::new(registry, Strategy::Sequential);
    let (mut passes, mut worst_c, mut best_s) = (0, 0.0f64, f64::INFINITY);
    for _ in 0..LATENCY_REPS {
        let (_, tc) = concurrent.execute(&plan, &ctx).map_err(|e| e.to_string())?;
        let (_, ts) = sequential.execute(&plan, &ctx).map_err(|e| e.to_string())?;
        let (c, s) = (tc.groups[0].wall_ms, ts.groups[0].wall_ms);
        worst_c = worst_c.max(c);
        best_s = best_s.min(s);
        passes += usize::from(c < CONCURRENT_GROUP_MAX_MS && s >= SEQUENTIAL_GROUP_MIN_MS);
    }
    let detail =
        format!("{passes}/{LATENCY_REPS} reps; group-1 concurrent max {worst_c:.1} ms, sequential min {best_s:.1} ms");
    if passes < LATENCY_MIN_PASSES {
        return Err(detail);
    }
    within(start, PARALLEL_BUDGET, detail)
}

fn random_task(rng: &mut ChaCha8Rng, earlier: &[(usize, usize)]) -> SubTask {
    const TITLES: [&str; 6] = ["t:swe", "t:sr_swe", "t:data_sci", "t:mle", "t:cashier", "t:store_mgr"];
    const CITIES: [&str; 3] = ["Seattle", "Sunnyvale", "Hoboken"];
    let title = TITLES[rng.random_range(0..TITLES.len())];
    let city = CITIES[rng.random_range(0..CITIES.len())];
    let reference = (!earlier.is_empty() && rng.random_bool(0.5)).then(|| {
        let (g, p) = earlier[rng.random_range(0..earlier.len())];
        format!("@{g}.{p}")
    });
    let r = reference.as_deref();
    match rng.random_range(0..9) {
        0 => SubTask::new("path", ToolHint::CareerPath, [("destination", title)]),
        1 => SubTask::new(
            "skills",
            ToolHint::GraphTemplate,
            [("template", "skills_for_title"), ("title", title)],
        ),
        2 => SubTask::new(
            "next",
            ToolHint::GraphTemplate,
            [("template", "next_titles"), ("title", r.unwrap_or(title))],
        ),
        3 => SubTask::new(
            "count",
            ToolHint::GraphTemplate,
            [
                ("template", "openings_count_by_title_city"),
                ("title", title),
                ("city", city),
            ],
        ),
        4 => SubTask::new("recommend", ToolHint::JobRecommend, [("city", city), ("title", title)]),
        5 => SubTask::new("gap", ToolHint::SkillGap, [("title", r.unwrap_or(title))]),
        6 => SubTask::new(
            "learn",
            ToolHint::LearningResources,
            [("skills", r.unwrap_or("python"))],
        ),
        7 => SubTask::new(
            "mentor",
            ToolHint::Mentor,
            [("skills", r.unwrap_or("machine learning")), ("title", title)],
        ),
        _ => SubTask::new(
            "compare",
            ToolHint::Compare,
            [
                ("a", r.unwrap_or("3")),
                ("b", "2"),
                ("a_label", "x"),
                ("b_label", "y"),
                ("metric", "m"),
                ("prefer", "higher"),
            ],
        ),
    }
}

fn executor_equivalence() -> Outcome {
    let world = DemoWorld::load();
    let registry = Arc::new(world.registry(&world.stub_lm()));
    let ctx = demo_context();
    let concurrent = Executor::new(registry.clone(), Strategy::Concurrent);
    let sequential = Executor::new(registry, Strategy::Sequential);
    let mut rng = ChaCha8Rng::seed_from_u64(0xe9);
    let (mut mismatches, mut tasks) = (0, 0);
    for _ in 0..FUZZED_PLANS {
        let mut groups: Vec<Vec<SubTask>> = Vec::new();
        let mut earlier = Vec::new();
        for g in 0..rng.random_range(1..=3) {
            let members: Vec<SubTask> = (0..rng.random_range(1..=3))
                .map(|_| random_task(&mut rng, &earlier))
                .collect();
            earlier.extend((0..members.len()).map(|p| (g, p)));
            groups.push(members);
        }
        let plan = Plan::new(groups).map_err(|e| e.to_string())?;
        tasks += plan.len();
        let (a, _) = concurrent.execute(&plan, &ctx).map_err(|e| e.to_string())?;
        let (b, _) = sequential.execute(&plan, &ctx).map_err(|e| e.to_string())?;
        let view = |x: &jobrec::exec::Execution| -> Vec<(Status, Option<serde_json::Value>, Option<String>)> {
            x.flat()
                .into_iter()
                .map(|r| (r.status, r.payload.clone(), r.error.clone()))
                .collect()
        };
        if view(&a) != view(&b) || a.resolved != b.resolved {
            mismatches += 1;
        }
    }
    let detail = format!("{FUZZED_PLANS} plans, {tasks} sub-tasks, {mismatches} mismatches");
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// DCG/IDCG and AP written out term by term.
fn reference_metrics(ranking: &[u8], relevant: &BTreeSet<u8>, k: usize) -> (f64, f64) {
    let top = &ranking[..k.min(ranking.len())];
    let mut dcg = 0.0;
    for (i, item) in top.iter().enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 0..relevant.len().min(k) {
        idcg += 1.0 / ((i + 2) as f64).log2();
    }
    let mut hits = 0.0;
    let mut ap = 0.0;
    for (i, item) in top.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1.0;
            ap += hits / (i + 1) as f64;
        }
    }
    let denom = relevant.len().min(k);
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
    let map = if denom > 0 { ap / denom as f64 } else { 0.0 };
    (ndcg, map)
}

fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut cases = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=6u8 {
        let items: Vec<u8> = (0..n).collect();
        let perms = permutations(&items);
        for mask in 0u32..(1 << n) {
            let relevant: BTreeSet<u8> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            for k in 1..=usize::from(n) + 1 {
                for p in &perms {
                    let (rn, rm) = reference_metrics(p, &relevant, k);
                    let ndcg = ndcg_at_k(p, &relevant, k).map_err(|e| e.to_string())?;
                    let map = map_at_k(p, &relevant, k).map_err(|e| e.to_string())?;
                    worst = worst.max((ndcg - rn).abs()).max((map - rm).abs());
                    cases += 1;
                }
            }
        }
    }
    let ranking = ["a", "b", "c"];
    let relevant: BTreeSet<&str> = ["b"].into();
    let ndcg = ndcg_at_k(&ranking, &relevant, 10).map_err(|e| e.to_string())?;
    let map = map_at_k(&ranking, &relevant, 10).map_err(|e| e.to_string())?;
    let worked = (ndcg - 1.0 / 3f64.log2()).abs().max((map - 0.5).abs());
    let detail = format!("{cases} exhaustive cases, max deviation {worst:.1e}; worked case deviation {worked:.1e}");
    if worst <= METRIC_TOL && worked <= METRIC_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn welch_test() -> Outcome {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let r = welch_t_test(&a, &b).map_err(|e| e.to_string())?;
    let same = welch_t_test(&a, &a).map_err(|e| e.to_string())?;
    let detail = format!(
        "t = {:.9}, p = {:.9} (oracle {WELCH_P_ORACLE:.9}), identical p = {}",
        r.t, r.p, same.p
    );
    if (r.t + 1.0).abs() < WELCH_T_TOL && (r.p - WELCH_P_ORACLE).abs() < WELCH_P_TOL && same.p == 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tuner() -> Outcome {
    let start = Instant::now();
    let unit = |d: usize| ParamSpace::new((0..d).map(|i| (format!("x{i}"), 0.0, 1.0))).expect("unit cube");
    let bowl_1d = |x: &[f64]| -> Result<f64, Infallible> { Ok(-(x[0] - 0.3).powi(2)) };
    let bowl_2d = |x: &[f64]| -> Result<f64, Infallible> { Ok(-(x[0] - 0.3).powi(2) - (x[1] - 0.7).powi(2)) };
    let mut hits = 0;
    for seed in 0..BOWL_SEEDS {
        let opt = optimize(&bowl_1d, &unit(1), 30, seed).map_err(|e| e.to_string())?;
        hits += usize::from((opt.best[0] - 0.3).abs() < BOWL_TOL);
    }
    let seeds: Vec<u64> = (0..20).collect();
    let cmp = compare_to_random(&bowl_2d, &unit(2), 40, &seeds).map_err(|e| e.to_string())?;
    let detail = format!(
        "1-D bowl {hits}/{BOWL_SEEDS} seeds within {BOWL_TOL}; 2-D median best {:.2e} vs random {:.2e}",
        cmp.optimizer_median, cmp.random_median
    );
    if hits < BOWL_MIN_HITS || cmp.optimizer_median < cmp.random_median {
        return Err(detail);
    }
    within(start, TUNER_BUDGET, detail)
}

fn interest_monotonicity() -> Outcome {
    let world = gen_world(
        17,
        WorldConfig {
            users: 60,
            ..WorldConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let families: Vec<String> = world
        .graph
        .nodes_with_label(Label::JobFamily)
        .map(|f| f.display_name().to_string())
        .collect();
    let users: Vec<&String> = world.profiles.keys().collect();
    let kinds = [InteractionKind::Click, InteractionKind::Save, InteractionKind::Like];
    let mut rng = ChaCha8Rng::seed_from_u64(0x17e7);
    let (mut violations, mut argmax_flips, mut compared) = (0, 0, 0usize);
    for _ in 0..MONOTONE_TRIPLES {
        let profile = &world.profiles[users[rng.random_range(0..users.len())]];
        let mut interest = InterestState::default();
        for _ in 0..rng.random_range(0..8) {
            let f = &families[rng.random_range(0..families.len())];
            let kind = if rng.random_bool(0.3) {
                InteractionKind::Dislike
            } else {
                kinds[rng.random_range(0..3)]
            };
            interest.record(f, kind);
        }
        let mut w: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        w[rng.random_range(0..4)] += 0.05;
        w.extend([rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]);
        let weights = ScoringWeights::from_vector(&w);
        let pool = candidate_pool(profile, &world.graph, true).map_err(|e| e.to_string())?;
        let family = &families[rng.random_range(0..families.len())];
        let scores = |state: &InterestState| -> BTreeMap<String, f64> {
            rank_candidates(profile, state, &world.graph, &weights, &pool, Mode::Sequential)
                .into_iter()
                .filter(|s| s.family.as_deref() == Some(family.as_str()))
                .map(|s| (s.opening.to_string(), s.adjusted))
                .collect()
        };
        let before = scores(&interest);
        let mut up = interest.clone();
        up.record(family, kinds[rng.random_range(0..3)]);
        let mut down = interest.clone();
        down.record(family, InteractionKind::Dislike);
        let (after_up, after_down) = (scores(&up), scores(&down));
        for (id, s) in &before {
            compared += 1;
            violations += usize::from(after_up[id] < *s) + usize::from(after_down[id] > *s);
        }

        let options = RecommendOptions {
            k: 1,
            mode: Mode::Sequential,
            ..RecommendOptions::default()
        };
        let factor = rng.random_range(0.1..10.0);
        let top = recommend_jobs(profile, &interest, &world.graph, &weights, &options).map_err(|e| e.to_string())?;
        let scaled = recommend_jobs(profile, &interest, &world.graph, &weights.scaled(factor), &options)
            .map_err(|e| e.to_string())?;
        if let (Some(a), Some(b)) = (top.first(), scaled.first()) {
            if a.opening != b.opening && (a.adjusted - b.adjusted).abs() > ARGMAX_TIE_TOL {
                argmax_flips += 1;
            }
        }
    }
    let detail = format!(
        "{MONOTONE_TRIPLES} triples, {compared} family scores checked, {violations} monotonicity violations, {argmax_flips} argmax changes under scaling"
    );
    if violations == 0 && argmax_flips == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ab_direction() -> Outcome {
    let start = Instant::now();
    let world = gen_world(42, WorldConfig::default()).map_err(|e| e.to_string())?;
    let scripts = synthetic_scripts(&world, AB_SCRIPTS, AB_SIMPLE_FRACTION, 7);
    let deps = world.service_deps(Arc::new(SystemClock), Arc::new(InMemoryStore::new()));
    let mut config = ServiceConfig::default();
    config.lm.latency_ms = AB_LM_LATENCY_MS;
    config.lm.token_latency_ms = AB_LM_TOKEN_LATENCY_MS;
    let report = run_ab(
        &["adapt", "plan_execute"],
        &deps,
        &config,
        &scripts,
        AbDesign::Crossover,
        7,
    )
    .map_err(|e| e.to_string())?;
    let (routed, always) = (&report.variants[0], &report.variants[1]);
    let test = &report.tests[0];
    let detail = format!(
        "latency {:.2} vs {:.2} ms (Welch p = {:.2e}), rounds {:.3} vs {:.3}, {} scripts",
        routed.latency_ms.mean,
        always.latency_ms.mean,
        test.latency.p,
        routed.mean_rounds,
        always.mean_rounds,
        routed.scripts
    );
    if routed.latency_ms.mean < always.latency_ms.mean
        && test.latency.p < AB_MAX_P
        && routed.mean_rounds <= always.mean_rounds
    {
        within(start, AB_BUDGET, detail)
    } else {
        Err(detail)
    }
}

fn final_text(events: &[ResponseEvent]) -> Option<String> {
    events
        .iter()
        .find(|e| e.kind == EventKind::Final)
        .and_then(|e| e.payload["text"].as_str())
        .map(str::to_string)
}

fn cached_flag(events: &[ResponseEvent]) -> Option<bool> {
    events
        .iter()
        .find(|e| e.kind == EventKind::ToolTrace)
        .and_then(|e| e.payload["cached"].as_bool())
}

fn cache() -> Outcome {
    let world = DemoWorld::load();
    let clock = Arc::new(ManualClock::new(1_000));
    let service = world
        .service(ServiceConfig::default(), clock.clone(), Arc::new(InMemoryStore::new()))
        .map_err(|e| e.to_string())?;
    let session = service.open_session("u:alex").map_err(|e| e.to_string())?;
    let query = "what skills does a data scientist need";
    let post = || {
        service
            .post_message(&session.session_id, query)
            .map_err(|e| e.to_string())
    };
    let cold = post()?;
    let warm = post()?;
    clock.advance(service.config().cache.ttl_s * 1000 + 1);
    let expired = post()?;
    let detail = format!(
        "cached flags cold {:?}, warm {:?}, after ttl {:?}; warm text equal {}",
        cached_flag(&cold),
        cached_flag(&warm),
        cached_flag(&expired),
        final_text(&warm) == final_text(&cold)
    );
    let ok = cached_flag(&cold) == Some(false)
        && cached_flag(&warm) == Some(true)
        && cached_flag(&expired) == Some(false)
        && final_text(&cold).is_some()
        && final_text(&warm).map(String::into_bytes) == final_text(&cold).map(String::into_bytes);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hit_real_transitions_harness() -> Outcome {
    let world = gen_world(2024, WorldConfig::default()).map_err(|e| e.to_string())?;
    let (recovered, eligible) = modal_recovery(&world, MODAL_MIN_SUPPORT);
    let rate = recovered as f64 / eligible.max(1) as f64;
    let detail =
        format!("{recovered}/{eligible} titles with >= {MODAL_MIN_SUPPORT} records recover the planted transition");
    if eligible > 0 && rate >= MODAL_MIN_RATE {
        Ok(detail)
    } else {
        Err(detail)
    }
}
