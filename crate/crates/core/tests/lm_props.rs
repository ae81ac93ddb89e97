use std::collections::BTreeMap;

use jobrec::demo::DemoWorld;
use jobrec::lm::{default_prompts, render_prompt, LmRequest, PromptTemplate, TaskTag};
use proptest::prelude::*;

fn template() -> PromptTemplate {
    PromptTemplate {
        id: "t".into(),
        task: TaskTag::Plan,
        system_text: "Plan for {profile}. Keep it short.".into(),
        few_shot: Vec::new(),
        input_text: "History:\n{history}\nQuery: {query}".into(),
        placeholders: vec!["profile".into(), "history".into(), "query".into()],
    }
}

fn value() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 {}\n:]{0,24}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rendering_is_injective_per_binding(
        values in proptest::array::uniform3(value()),
        which in 0usize..3,
        replacement in value(),
    ) {
        prop_assume!(replacement != values[which]);
        let t = template();
        let bind = |vals: &[String; 3]| -> BTreeMap<String, String> {
            t.placeholders.iter().cloned().zip(vals.iter().cloned()).collect()
        };
        let mut changed = values.clone();
        changed[which] = replacement;
        let a = render_prompt(&t, &bind(&values)).unwrap();
        let b = render_prompt(&t, &bind(&changed)).unwrap();
        prop_assert_ne!(a, b);
    }

    #[test]
    fn default_prompts_render_any_bindings(query in value(), history in value()) {
        let prompts = default_prompts();
        let t = prompts.get("plan").unwrap();
        let bindings: BTreeMap<String, String> = t
            .placeholders
            .iter()
            .map(|p| (p.clone(), if p == "query" { query.clone() } else { history.clone() }))
            .collect();
        let text = render_prompt(t, &bindings).unwrap();
        prop_assert!(text.contains(&query));
    }
}

#[test]
fn stub_answers_are_byte_stable() {
    let lm = DemoWorld::load().stub_lm();
    let requests = [
        LmRequest::new(
            "classify",
            [
                ("query", "what skills does a data scientist need".to_string()),
                ("history", String::new()),
            ],
        ),
        LmRequest::new(
            "plan",
            [("query", "can you create a career development plan for me?".to_string())],
        ),
    ];
    for req in &requests {
        let req = LmRequest {
            bindings: lm
                .prompts()
                .get(&req.template_id)
                .unwrap()
                .placeholders
                .iter()
                .map(|p| (p.clone(), req.bindings.get(p).cloned().unwrap_or_default()))
                .collect(),
            ..req.clone()
        };
        let first = lm.complete(&req).unwrap().text;
        for _ in 0..1000 {
            assert_eq!(lm.complete(&req).unwrap().text, first);
        }
    }
}
