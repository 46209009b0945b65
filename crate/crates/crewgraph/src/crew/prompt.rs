//! Deterministic prompt rendering for task execution.

use std::collections::BTreeMap;

use crate::gateway::{ChatMessage, ToolSchema};

use super::spec::{AgentSpec, TaskOutput, TaskSpec};
use super::CrewError;

/// Render the message list for one task execution.
///
/// Pure function: identical inputs give identical messages. The system
/// message carries the agent's role, goal, backstory, and tool descriptions;
/// the user message carries the task description (with `{placeholder}`
/// tokens substituted from `inputs`), the expected output, and each context
/// output labeled by its task id.
pub fn render_prompt(
    agent: &AgentSpec,
    task: &TaskSpec,
    context_outputs: &[TaskOutput],
    inputs: &BTreeMap<String, String>,
    tools: &[ToolSchema],
) -> Result<Vec<ChatMessage>, CrewError> {
    let mut system = format!("You are {}.\nGoal: {}", agent.role, agent.goal);
    if !agent.backstory.is_empty() {
        system.push_str("\nBackstory: ");
        system.push_str(&agent.backstory);
    }
    if !tools.is_empty() {
        system.push_str("\n\nAvailable tools:");
        for tool in tools {
            system.push_str(&format!("\n- {}: {}", tool.name, tool.description));
            if !tool.parameters.is_empty() {
                let params: Vec<String> = tool
                    .parameters
                    .iter()
                    .map(|p| {
                        let req = if p.required { ", required" } else { "" };
                        format!("{} ({}{req})", p.name, p.ty.as_str())
                    })
                    .collect();
                system.push_str(&format!(" [{}]", params.join(", ")));
            }
        }
        system.push_str(
            "\nTo call a tool, reply with exactly one fenced JSON object: \
             ```json\n{\"tool\": \"<name>\", \"args\": {...}}\n```",
        );
    }

    let mut user = substitute_placeholders(&task.description, inputs)?;
    user.push_str("\n\nExpected output: ");
    user.push_str(&task.expected_output);
    if !context_outputs.is_empty() {
        user.push_str("\n\nContext from earlier tasks:");
        for output in context_outputs {
            user.push_str(&format!("\n[{}]\n{}", output.task_id, output.raw));
        }
    }

    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

/// Replace `{name}` tokens (identifier-like names only) from `inputs`.
/// No escaping; an identifier-like token missing from `inputs` is a hard
/// error, any other braced text passes through literally.
pub fn substitute_placeholders(
    template: &str,
    inputs: &BTreeMap<String, String>,
) -> Result<String, CrewError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find(['{', '}']) {
            Some(close) if after.as_bytes()[close] == b'}' => {
                let name = &after[..close];
                if is_identifier(name) {
                    match inputs.get(name) {
                        Some(value) => out.push_str(value),
                        None => return Err(CrewError::UnresolvedPlaceholder(name.to_string())),
                    }
                } else {
                    out.push('{');
                    out.push_str(name);
                    out.push('}');
                }
                rest = &after[close + 1..];
            }
            _ => {
                // No closing brace (or a nested open): literal '{'.
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ModelRef, ParamType, Role, ToolParam};

    fn email_agent() -> AgentSpec {
        AgentSpec::new(
            "Email Action Specialist",
            "Identify the action every email needs",
            ModelRef::mock("m"),
        )
        .with_backstory("Years of triaging busy inboxes.")
    }

    #[test]
    fn system_message_contains_role_verbatim() {
        let task = TaskSpec::new("t1", "identify the action needed", "a short action plan");
        let messages = render_prompt(&email_agent(), &task, &[], &BTreeMap::new(), &[]).unwrap();
        assert_eq!(messages[0].role, Role::System);
        assert!(messages[0].content.contains("Email Action Specialist"));
        assert!(messages[0].content.contains("Identify the action"));
    }

    #[test]
    fn no_context_no_placeholders_gives_exactly_two_messages() {
        let task = TaskSpec::new("t1", "do it", "done");
        let messages = render_prompt(&email_agent(), &task, &[], &BTreeMap::new(), &[]).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[1].role, Role::User);
        assert!(!messages[1].content.contains("Context from earlier tasks"));
    }

    #[test]
    fn missing_placeholder_is_a_hard_error() {
        let task = TaskSpec::new("t1", "Review {ticket}", "a verdict");
        let err = render_prompt(&email_agent(), &task, &[], &BTreeMap::new(), &[]).unwrap_err();
        assert!(matches!(err, CrewError::UnresolvedPlaceholder(name) if name == "ticket"));
    }

    #[test]
    fn placeholders_substitute_from_inputs() {
        let inputs = BTreeMap::from([("ticket".to_string(), "router down".to_string())]);
        assert_eq!(
            substitute_placeholders("Review {ticket} now", &inputs).unwrap(),
            "Review router down now"
        );
    }

    #[test]
    fn non_identifier_braces_pass_through() {
        let inputs = BTreeMap::new();
        assert_eq!(
            substitute_placeholders("JSON looks like {\"k\": 1} ok", &inputs).unwrap(),
            "JSON looks like {\"k\": 1} ok"
        );
        assert_eq!(
            substitute_placeholders("dangling {", &inputs).unwrap(),
            "dangling {"
        );
    }

    #[test]
    fn context_outputs_are_labeled_by_task_id() {
        let task = TaskSpec::new("t3", "summarize", "summary").with_context(["t1", "t2"]);
        let context = vec![
            TaskOutput {
                task_id: "t1".to_string(),
                agent_role: "a".to_string(),
                raw: "first answer".to_string(),
                tool_invocations: vec![],
            },
            TaskOutput {
                task_id: "t2".to_string(),
                agent_role: "a".to_string(),
                raw: "second answer".to_string(),
                tool_invocations: vec![],
            },
        ];
        let messages =
            render_prompt(&email_agent(), &task, &context, &BTreeMap::new(), &[]).unwrap();
        let user = &messages[1].content;
        assert!(user.contains("[t1]\nfirst answer"));
        assert!(user.contains("[t2]\nsecond answer"));
        let t1 = user.find("[t1]").unwrap();
        let t2 = user.find("[t2]").unwrap();
        assert!(t1 < t2, "context order follows the given list");
    }

    #[test]
    fn tool_descriptions_appear_in_system_message() {
        let tools = vec![ToolSchema {
            name: "search".to_string(),
            description: "Search the ticket archive".to_string(),
            parameters: vec![ToolParam::required("q", ParamType::String)],
        }];
        let task = TaskSpec::new("t1", "do it", "done");
        let messages = render_prompt(&email_agent(), &task, &[], &BTreeMap::new(), &tools).unwrap();
        assert!(messages[0]
            .content
            .contains("search: Search the ticket archive"));
        assert!(messages[0].content.contains("q (string, required)"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let task = TaskSpec::new("t1", "Handle {subject}", "a reply").with_context(["t0"]);
        let inputs = BTreeMap::from([("subject".to_string(), "refund".to_string())]);
        let context = vec![TaskOutput {
            task_id: "t0".to_string(),
            agent_role: "a".to_string(),
            raw: "prior".to_string(),
            tool_invocations: vec![],
        }];
        let a = render_prompt(&email_agent(), &task, &context, &inputs, &[]).unwrap();
        let b = render_prompt(&email_agent(), &task, &context, &inputs, &[]).unwrap();
        assert_eq!(a, b);
    }
}
