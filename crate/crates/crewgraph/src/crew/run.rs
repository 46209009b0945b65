//! Task execution and the sequential / hierarchical kickoff processes.

use std::collections::BTreeMap;

use crate::gateway::{ChatMessage, ChatRequest, ModelGateway, ModelRef};
use crate::trace::{SpanKind, TraceCtx};

use super::prompt::render_prompt;
use super::spec::{CrewOutput, CrewSpec, Process, TaskOutput, TaskSpec, ToolSpec};
use super::tool_loop::run_tool_loop;
use super::CrewError;

/// Execute one task with its declared agent.
///
/// Renders the prompt (context outputs drawn from `prior` by task id), runs
/// the tool loop, and returns the completed [`TaskOutput`].
pub fn execute_task(
    crew: &CrewSpec,
    task: &TaskSpec,
    prior: &[TaskOutput],
    inputs: &BTreeMap<String, String>,
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<TaskOutput, CrewError> {
    let role = task
        .agent
        .as_deref()
        .ok_or_else(|| CrewError::UnknownAgent("(unassigned)".to_string()))?;
    execute_task_as(crew, task, role, prior, inputs, gateway, trace)
}

/// Like [`execute_task`] with an explicit executing agent (hierarchical
/// delegation may assign a different agent than the task declares).
pub fn execute_task_as(
    crew: &CrewSpec,
    task: &TaskSpec,
    role: &str,
    prior: &[TaskOutput],
    inputs: &BTreeMap<String, String>,
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<TaskOutput, CrewError> {
    let agent = crew
        .agent(role)
        .ok_or_else(|| CrewError::UnknownAgent(role.to_string()))?;

    let tool_names = task.tools.as_ref().unwrap_or(&agent.tools);
    let tools: Vec<ToolSpec> = tool_names
        .iter()
        .map(|name| {
            crew.tool(name)
                .cloned()
                .ok_or_else(|| CrewError::UnknownTool(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let schemas: Vec<_> = tools.iter().map(|t| t.schema.clone()).collect();

    // Outputs for the declared context ids. Under hierarchical delegation a
    // context task may not have run yet; only available outputs are included.
    let context: Vec<TaskOutput> = task
        .context
        .iter()
        .filter_map(|id| prior.iter().find(|o| &o.task_id == id).cloned())
        .collect();

    let messages = render_prompt(agent, task, &context, inputs, &schemas)?;

    let span = trace.open(SpanKind::CrewTask, &task.id);
    trace.attr(span, "agent", role);
    let result = run_tool_loop(
        agent,
        messages,
        &tools,
        gateway,
        crew.max_tool_iterations,
        trace.child(span),
    );
    match result {
        Ok(mut output) => {
            trace.close(span, None);
            output.task_id = task.id.clone();
            Ok(output)
        }
        Err(e) => {
            trace.close(span, Some(&e.to_string()));
            Err(e)
        }
    }
}

/// Run the crew under whichever process it declares.
pub fn kickoff(
    crew: &CrewSpec,
    inputs: &BTreeMap<String, String>,
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<CrewOutput, CrewError> {
    match crew.process {
        Process::Sequential => kickoff_sequential(crew, inputs, gateway, trace),
        Process::Hierarchical => kickoff_hierarchical(crew, inputs, gateway, trace),
    }
}

/// Tasks execute in list order; each sees the prior outputs its context
/// names. The first failure aborts the run with the failing task id.
pub fn kickoff_sequential(
    crew: &CrewSpec,
    inputs: &BTreeMap<String, String>,
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<CrewOutput, CrewError> {
    if crew.process != Process::Sequential {
        return Err(CrewError::InvalidCrew(
            "kickoff_sequential requires a sequential crew".to_string(),
        ));
    }
    let mut outputs: Vec<TaskOutput> = Vec::new();
    for task in &crew.tasks {
        let output = execute_task(crew, task, &outputs, inputs, gateway, trace).map_err(|e| {
            CrewError::TaskFailed {
                task_id: task.id.clone(),
                source: Box::new(e),
            }
        })?;
        outputs.push(output);
    }
    Ok(CrewOutput {
        final_output: outputs.last().map(|o| o.raw.clone()).unwrap_or_default(),
        task_outputs: outputs,
    })
}

/// One manager delegation decision: which pending task runs, and by whom.
struct Delegation {
    task_index: usize,
    role: String,
}

/// A synthesized manager picks the next (task, agent) pair each round.
///
/// The manager is prompted with the roster and the pending task list and
/// must answer a single line `DELEGATE <task_id> TO <role>`. An unparseable
/// or out-of-roster reply is retried once with a corrective message, then
/// the round falls back to deterministic order: first pending task, its
/// declared agent (the crew's first agent if unassigned). The run consumes
/// at most `max_delegation_rounds x task-count` decisions before
/// [`CrewError::DelegationExhausted`].
pub fn kickoff_hierarchical(
    crew: &CrewSpec,
    inputs: &BTreeMap<String, String>,
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<CrewOutput, CrewError> {
    if crew.process != Process::Hierarchical {
        return Err(CrewError::InvalidCrew(
            "kickoff_hierarchical requires a hierarchical crew".to_string(),
        ));
    }
    let manager_model = crew
        .manager_model
        .clone()
        .ok_or(CrewError::MissingManager)?;

    let mut pending: Vec<usize> = (0..crew.tasks.len()).collect();
    let mut outputs: Vec<TaskOutput> = Vec::new();
    if pending.is_empty() {
        return Ok(CrewOutput {
            task_outputs: outputs,
            final_output: String::new(),
        });
    }

    let budget = crew.max_delegation_rounds * crew.tasks.len();
    let mut decisions = 0usize;
    while !pending.is_empty() {
        if decisions >= budget {
            return Err(CrewError::DelegationExhausted { budget });
        }
        decisions += 1;

        let choice = consult_manager(crew, &manager_model, &pending, gateway, trace)?
            .or_else(|| fallback_delegation(crew, &pending));
        let Some(delegation) = choice else {
            // No agents to fall back to; burn the decision and try again
            // (ends in DelegationExhausted).
            continue;
        };

        let task = &crew.tasks[delegation.task_index];
        let output = execute_task_as(
            crew,
            task,
            &delegation.role,
            &outputs,
            inputs,
            gateway,
            trace,
        )
        .map_err(|e| CrewError::TaskFailed {
            task_id: task.id.clone(),
            source: Box::new(e),
        })?;
        outputs.push(output);
        pending.retain(|i| *i != delegation.task_index);
    }

    Ok(CrewOutput {
        final_output: outputs.last().map(|o| o.raw.clone()).unwrap_or_default(),
        task_outputs: outputs,
    })
}

fn manager_messages(crew: &CrewSpec, pending: &[usize]) -> Vec<ChatMessage> {
    let mut roster = String::new();
    for agent in &crew.agents {
        roster.push_str(&format!("\n- {}: {}", agent.role, agent.goal));
    }
    let mut tasks = String::new();
    for index in pending {
        let task = &crew.tasks[*index];
        tasks.push_str(&format!("\n- {}: {}", task.id, task.description));
    }
    let system = format!(
        "You are the crew manager. You decide which pending task runs next \
         and which agent runs it.\n\nAgents:{roster}"
    );
    let user = format!(
        "Pending tasks:{tasks}\n\nReply with exactly one line: \
         DELEGATE <task_id> TO <role>"
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Ask the manager, retry once on an invalid reply, `None` if both fail.
fn consult_manager(
    crew: &CrewSpec,
    manager_model: &ModelRef,
    pending: &[usize],
    gateway: &dyn ModelGateway,
    trace: TraceCtx<'_>,
) -> Result<Option<Delegation>, CrewError> {
    let mut messages = manager_messages(crew, pending);
    for attempt in 0..2 {
        let request = ChatRequest::new(manager_model.clone(), messages.clone());
        let span = trace.open(SpanKind::LlmCall, "manager");
        trace.attr(span, "attempt", &(attempt + 1).to_string());
        let response = match gateway.chat(&request) {
            Ok(response) => {
                trace.close(span, None);
                response
            }
            Err(e) => {
                trace.close(span, Some(&e.to_string()));
                return Err(e.into());
            }
        };
        let reply = response.message.content;
        if let Some(delegation) = parse_delegation(crew, pending, &reply) {
            return Ok(Some(delegation));
        }
        let ids: Vec<&str> = pending.iter().map(|i| crew.tasks[*i].id.as_str()).collect();
        let roles: Vec<&str> = crew.agents.iter().map(|a| a.role.as_str()).collect();
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(format!(
            "That was not a valid delegation. Reply with exactly one line: \
             DELEGATE <task_id> TO <role>. Pending task ids: {}. Roles: {}.",
            ids.join(", "),
            roles.join(", ")
        )));
    }
    Ok(None)
}

/// Accepts only a `DELEGATE <task_id> TO <role>` line naming a pending task
/// and a registered agent.
fn parse_delegation(crew: &CrewSpec, pending: &[usize], reply: &str) -> Option<Delegation> {
    for line in reply.lines() {
        let Some(rest) = line.trim().strip_prefix("DELEGATE ") else {
            continue;
        };
        let Some((task_id, role)) = rest.split_once(" TO ") else {
            continue;
        };
        let (task_id, role) = (task_id.trim(), role.trim());
        let task_index = pending
            .iter()
            .copied()
            .find(|i| crew.tasks[*i].id == task_id)?;
        crew.agent(role)?;
        return Some(Delegation {
            task_index,
            role: role.to_string(),
        });
    }
    None
}

/// First pending task, its declared agent, else the crew's first agent.
fn fallback_delegation(crew: &CrewSpec, pending: &[usize]) -> Option<Delegation> {
    let task_index = *pending.first()?;
    let task = &crew.tasks[task_index];
    let role = task
        .agent
        .clone()
        .filter(|role| crew.agent(role).is_some())
        .or_else(|| crew.agents.first().map(|a| a.role.clone()))?;
    Some(Delegation { task_index, role })
}
