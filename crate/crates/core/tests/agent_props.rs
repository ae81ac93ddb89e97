use std::sync::Arc;

use jobrec::agent::{
    decompose, integrate_memory, parse_plan, AgentError, ChatTurn, IntegratedQuery, Plan, SubTask, TaskRef, ToolHint,
};
use jobrec::demo::DemoWorld;
use jobrec::exec::{
    Executor, Orchestrator, OrchestratorConfig, SessionContext, Strategy as ExecStrategy, ToolRegistry,
};
use jobrec::lm::{Backend, BackendLabel, LanguageModel, LmError, LmRequest, Rendered, TaskTag};
use jobrec::tools::{InterestState, ToolError};
use proptest::prelude::*;
use serde_json::{json, Value};

/// Replies to planner prompts with fixed text and to everything else with
/// whatever the stub would say.
struct CannedPlanner {
    plan: String,
    fallback: Arc<dyn Backend>,
}

impl Backend for CannedPlanner {
    fn label(&self) -> BackendLabel {
        BackendLabel::Stub
    }

    fn generate(&self, task: TaskTag, prompt: &Rendered, request: &LmRequest) -> Result<String, LmError> {
        match task {
            TaskTag::Plan | TaskTag::Replan => Ok(self.plan.clone()),
            _ => self.fallback.generate(task, prompt, request),
        }
    }
}

fn canned_lm(plan: String) -> LanguageModel {
    let world = DemoWorld::load();
    let fallback: Arc<dyn Backend> = Arc::new(jobrec::lm::StubBackend::for_graph(&world.graph));
    LanguageModel::with_backend(Arc::new(CannedPlanner { plan, fallback }))
}

fn check_invariants(plan: &Plan) {
    assert!(!plan.groups().is_empty());
    for (g, group) in plan.groups().iter().enumerate() {
        assert!(!group.is_empty());
        for task in group {
            assert!(!task.description.trim().is_empty());
            for r in task.refs() {
                assert!(r.group < g, "reference {r} in group {g}");
                assert!(r.position < plan.groups()[r.group].len());
            }
        }
    }
}

fn tool_name() -> impl Strategy<Value = String> {
    prop_oneof![
        8 => proptest::sample::select(ToolHint::ALL.to_vec()).prop_map(|t| t.as_str().to_string()),
        1 => "[a-z_]{1,12}",
    ]
}

fn arg_value() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[A-Za-z ]{0,10}",
        2 => (0usize..4, 0usize..4).prop_map(|(g, p)| TaskRef { group: g, position: p, field: None }.to_string()),
        1 => (0usize..4, 0usize..4, "[a-z]{1,6}").prop_map(|(g, p, f)| TaskRef { group: g, position: p, field: Some(f) }.to_string()),
    ]
}

fn wire_task() -> impl Strategy<Value = Value> {
    (
        prop_oneof![4 => "[a-z ]{1,16}", 1 => Just(String::new()), 1 => Just("   ".to_string())],
        tool_name(),
        proptest::collection::btree_map("[a-z]{1,6}", arg_value(), 0..3),
    )
        .prop_map(|(d, tool, args)| json!({"d": d, "tool": tool, "args": args}))
}

fn wire_plan() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::collection::vec(wire_task(), 0..4), 0..4).prop_map(|g| json!(g).to_string())
}

fn planner_text() -> impl Strategy<Value = String> {
    prop_oneof![
        6 => wire_plan(),
        1 => wire_plan().prop_map(|p| format!("Plan:\n{p}\nDone.")),
        1 => wire_plan().prop_map(|p| p[..p.len() / 2].to_string()),
        1 => ".{0,40}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn parse_plan_yields_valid_plans_or_errors(text in planner_text()) {
        match parse_plan(&text) {
            Ok(plan) => {
                check_invariants(&plan);
                let again = parse_plan(&plan.to_wire()).unwrap();
                prop_assert_eq!(&again, &plan);
                prop_assert_eq!(again.to_wire(), plan.to_wire());
            }
            Err(e) => prop_assert!(matches!(e, AgentError::PlanParse(_) | AgentError::PlanInvalid(_)), "{e:?}"),
        }
    }

    #[test]
    fn decompose_never_truncates(text in planner_text()) {
        let lm = canned_lm(text.clone());
        let integrated = IntegratedQuery::passthrough("help me grow my career");
        match (decompose(&integrated, &lm), parse_plan(&text)) {
            (Ok(plan), Ok(direct)) => {
                check_invariants(&plan);
                prop_assert_eq!(plan, direct);
            }
            (Err(_), Err(_)) => {}
            (got, direct) => prop_assert!(false, "decompose {got:?} but parse_plan {direct:?}"),
        }
    }
}

#[test]
fn memory_without_relevant_turns_is_the_bare_query() {
    let world = DemoWorld::load();
    let lm = world.stub_lm();
    let profile = world.profile("u:alex");
    let history = [
        ChatTurn::user("what is the weather like", 1),
        ChatTurn::assistant("I can only help with careers.", 2),
    ];
    for query in [
        "what skills does a data scientist need",
        "  compare Seattle and Sunnyvale  ",
        "hello",
    ] {
        for turns in [&history[..0], &history[..]] {
            let out = integrate_memory(query, turns, profile, &lm).unwrap();
            if out.source_turn_indices.is_empty() {
                assert_eq!(out.text, query);
            }
            assert!(out.source_turn_indices.iter().all(|i| *i < turns.len()));
        }
    }
}

#[test]
fn replanning_stops_within_budget() {
    let world = DemoWorld::load();
    let mut registry = ToolRegistry::new();
    for hint in ToolHint::ALL {
        registry.register(hint, |_: &jobrec::agent::Args, _: &jobrec::exec::ToolContext| {
            Err::<Option<Value>, _>(ToolError::MissingArgument("always down".into()))
        });
    }
    let registry = Arc::new(registry);
    let plan = Plan::new(vec![
        vec![SubTask::new("a", ToolHint::CareerPath, [("to", "t:data_scientist")])],
        vec![
            SubTask::new("b", ToolHint::SkillGap, [("path", "@0.0")]),
            SubTask::new("c", ToolHint::Mentor, [("skill", "python")]),
        ],
    ])
    .unwrap();
    let profile = world.profile("u:alex").clone();
    let interest = InterestState::default();
    for budget in 0..=4 {
        let lm = canned_lm(plan.to_wire());
        let config = OrchestratorConfig {
            routing: false,
            replan_budget: budget,
            ..OrchestratorConfig::default()
        };
        let executor = Executor::new(registry.clone(), ExecStrategy::Concurrent);
        let orchestrator = Orchestrator::new(world.graph.clone(), lm, executor, config);
        let session = SessionContext {
            history: &[],
            profile: &profile,
            interest: &interest,
        };
        let outcome = orchestrator
            .run("plan my move to data science", session, None, &mut ())
            .unwrap();
        assert!(outcome.degraded);
        assert_eq!(outcome.trace.replans, budget);
    }
}
