//! The chat/tool-call loop at the heart of task execution.

use crate::gateway::{parse_tool_call, ChatMessage, ChatRequest, ModelGateway, ToolSchema};
use crate::trace::{SpanKind, TraceCtx};

use super::spec::{AgentSpec, TaskOutput, ToolInvocation, ToolSpec};
use super::CrewError;

/// Drive one agent against the gateway until it answers in plain text.
///
/// Each round sends the conversation; a tool-call reply executes the named
/// tool, appends the call and its result to the conversation, and loops. A
/// plain-text reply terminates. At most `max_iterations` tool rounds run, so
/// chat calls are bounded by `max_iterations + 1`; hitting the limit without
/// a final text is [`CrewError::ToolLoopExhausted`].
///
/// The returned [`TaskOutput`] records every tool invocation. Its `task_id`
/// is left empty here; task-level callers fill it in.
pub fn run_tool_loop(
    agent: &AgentSpec,
    messages: Vec<ChatMessage>,
    tools: &[ToolSpec],
    gateway: &dyn ModelGateway,
    max_iterations: usize,
    trace: TraceCtx<'_>,
) -> Result<TaskOutput, CrewError> {
    if max_iterations == 0 {
        return Err(CrewError::InvalidCrew(
            "max_iterations must be at least 1".to_string(),
        ));
    }
    let schemas: Vec<ToolSchema> = tools.iter().map(|t| t.schema.clone()).collect();
    let mut conversation = messages;
    let mut invocations: Vec<ToolInvocation> = Vec::new();

    for round in 0..=max_iterations {
        let request =
            ChatRequest::new(agent.model.clone(), conversation.clone()).with_tools(schemas.clone());
        let span = trace.open(SpanKind::LlmCall, &agent.model.model);
        trace.attr(span, "provider", &agent.model.provider.to_string());
        let response = match gateway.chat(&request) {
            Ok(response) => {
                trace.attr(span, "finish_reason", &response.finish_reason);
                trace.close(span, None);
                response
            }
            Err(e) => {
                trace.close(span, Some(&e.to_string()));
                return Err(e.into());
            }
        };

        match parse_tool_call(&response, &schemas)? {
            Some(call) => {
                if round == max_iterations {
                    return Err(CrewError::ToolLoopExhausted {
                        iterations: max_iterations,
                    });
                }
                let tool = tools
                    .iter()
                    .find(|t| t.name() == call.name)
                    .expect("parse_tool_call validated the name");
                let tool_span = trace.open(SpanKind::ToolCall, &call.name);
                let result = match (tool.executor)(&call.args) {
                    Ok(result) => {
                        trace.close(tool_span, None);
                        result
                    }
                    Err(message) => {
                        trace.close(tool_span, Some(&message));
                        return Err(CrewError::ToolFailed {
                            tool: call.name,
                            message,
                        });
                    }
                };
                conversation.push(ChatMessage::assistant_tool_call(call.clone()));
                conversation.push(ChatMessage::tool(&call.name, &result));
                invocations.push(ToolInvocation {
                    tool: call.name,
                    args: call.args,
                    result,
                });
            }
            None => {
                if response.message.content.is_empty() {
                    return Err(CrewError::EmptyFinalReply {
                        agent: agent.role.clone(),
                    });
                }
                return Ok(TaskOutput {
                    task_id: String::new(),
                    agent_role: agent.role.clone(),
                    raw: response.message.content,
                    tool_invocations: invocations,
                });
            }
        }
    }
    unreachable!("loop returns or errors within max_iterations + 1 rounds")
}
