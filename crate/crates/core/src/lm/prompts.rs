use super::{FewShot, PromptRegistry, PromptTemplate, TaskTag};

fn shot(input: &str, output: &str) -> FewShot {
    FewShot {
        input: input.to_string(),
        output: output.to_string(),
    }
}

fn template(
    id: &str,
    task: TaskTag,
    system: &str,
    few_shot: Vec<FewShot>,
    input: &str,
    placeholders: &[&str],
) -> PromptTemplate {
    PromptTemplate {
        id: id.to_string(),
        task,
        system_text: system.to_string(),
        few_shot,
        input_text: input.to_string(),
        placeholders: placeholders.iter().map(|p| p.to_string()).collect(),
    }
}

/// The prompt set used by the agent.
pub fn default_prompts() -> PromptRegistry {
    let mut reg = PromptRegistry::new();
    let templates = [
        template(
            "classify",
            TaskTag::Classify,
            "You route questions sent to a career assistant.\n\
             Reply SIMPLE when the question is clear and can be answered by one direct tool call \
             (application status, interview time, a single count or lookup in the job graph).\n\
             Reply COMPLEX when it is ambiguous, needs several steps, comparisons, or planning.\n\
             The first line of your reply must be exactly SIMPLE or COMPLEX. For SIMPLE, put the tool \
             call on the second line as JSON: {\"tool\": <tool>, \"args\": {...}}.\n\
             User profile: {profile}",
            vec![
                shot("help me check job application status", "SIMPLE\n{\"tool\":\"application_status\",\"args\":{}}"),
                shot("can you create a career development plan for me?", "COMPLEX"),
            ],
            "[HISTORY]\n{history}\n[QUERY]\n{query}",
            &["profile", "history", "query"],
        ),
        template(
            "memory",
            TaskTag::Memory,
            "You prepare the user's latest question for a planner. From the chat history, keep only \
             the segments that matter for the current question and merge them with it. Drop everything \
             unrelated. If nothing in the history is relevant, return the question unchanged.\n\
             Answer with two lines:\nIntegrated User Query: <merged text>\nRelevant Turns: <comma-separated turn numbers>\n\
             User profile: {profile}",
            vec![
                shot(
                    "[HISTORY]\n[0] user: I have 6 years of Java experience\n[1] user: what's the weather like\n[QUERY]\nfind me lead engineer roles",
                    "Integrated User Query: find me lead engineer roles [Context: I have 6 years of Java experience]\nRelevant Turns: 0",
                ),
                shot(
                    "[HISTORY]\n[0] user: will it rain tomorrow\n[QUERY]\nhow many openings are there for cashiers",
                    "Integrated User Query: how many openings are there for cashiers\nRelevant Turns: ",
                ),
            ],
            "[HISTORY]\n{history}\n[QUERY]\n{query}",
            &["profile", "history", "query"],
        ),
        template(
            "plan",
            TaskTag::Plan,
            "Break the user's request into sub-tasks and output them as a nested JSON list. Each inner \
             list is a group; put sub-tasks that can run at the same time in the same group, and order \
             groups so that a group only depends on earlier ones. A sub-task is \
             {\"d\": description, \"tool\": tool, \"args\": {...}}; an argument of the form \"@g.p\" refers \
             to the output of sub-task p in earlier group g.",
            vec![
                shot(
                    "Which city has more machine learning engineer job openings, Seattle or Sunnyvale?",
                    "[[{\"d\":\"Count machine learning engineer openings in Seattle\",\"tool\":\"graph_template\",\"args\":{...}},\
                     {\"d\":\"Count machine learning engineer openings in Sunnyvale\",\"tool\":\"graph_template\",\"args\":{...}}],\
                     [{\"d\":\"Compare the opening counts of Seattle and Sunnyvale\",\"tool\":\"compare\",\"args\":{\"a\":\"@0.0\",\"b\":\"@0.1\"}}]]",
                ),
                shot(
                    "plan my path to principal 3D designer",
                    "[[{\"d\":\"Find a career path to principal 3D designer\",\"tool\":\"career_path\",\"args\":{...}}]]",
                ),
            ],
            "[TEXT]\n{query}",
            &["query"],
        ),
        template(
            "replan",
            TaskTag::Replan,
            "Some sub-tasks did not return enough information. Rewrite only those sub-tasks so they can \
             succeed, for example by relaxing filters, and output them in the same nested JSON format.",
            vec![],
            "[FAILED]\n{failed_plan}\n[FEEDBACK]\n{feedback}",
            &["failed_plan", "feedback"],
        ),
        template(
            "sufficiency",
            TaskTag::Sufficiency,
            "Decide whether the tool results answer the user's question. Reply SUFFICIENT or INSUFFICIENT \
             on the first line.",
            vec![],
            "[QUERY]\n{query}\n[RESULTS]\n{results}",
            &["query", "results"],
        ),
        template(
            "text_to_query",
            TaskTag::Query,
            "Translate the question into a graph query. You may only use these templates:\n{schema}\n\
             Reply with JSON {\"template\": id, \"bindings\": {...}} or NONE.",
            vec![shot(
                "how many ML engineer openings in Seattle",
                "{\"template\":\"openings_count_by_title_city\",\"bindings\":{\"title\":\"ML Engineer\",\"city\":\"Seattle\"}}",
            )],
            "[QUESTION]\n{query}",
            &["schema", "query"],
        ),
    ];
    for t in templates {
        reg.register(t).expect("default prompts are valid");
    }
    reg
}
