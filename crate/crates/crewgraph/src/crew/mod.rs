//! Role-based agent crews: agents, tasks, tools, and their orchestration.
//!
//! A [`CrewSpec`] bundles agents (role, goal, backstory, tools, model),
//! tasks (description, expected output, context wiring), and a tool
//! registry, executed under a [`Process`]: sequential (declared task order)
//! or hierarchical (a synthesized manager delegates). [`as_graph_node`]
//! mounts a whole crew as a single graph node, which is how crews and graph
//! routing compose: crews inside nodes, routing between nodes.

mod node;
mod prompt;
mod run;
mod spec;
mod tool_loop;

pub use node::as_graph_node;
pub use prompt::{render_prompt, substitute_placeholders};
pub use run::{execute_task, execute_task_as, kickoff, kickoff_hierarchical, kickoff_sequential};
pub use spec::{
    AgentSpec, CrewOutput, CrewSpec, Process, TaskOutput, TaskSpec, ToolExecutor, ToolInvocation,
    ToolSpec, DEFAULT_MAX_DELEGATION_ROUNDS, DEFAULT_MAX_TOOL_ITERATIONS,
};
pub use tool_loop::run_tool_loop;

use thiserror::Error;

use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum CrewError {
    #[error("unresolved placeholder {0:?}")]
    UnresolvedPlaceholder(String),
    #[error("unknown agent role {0:?}")]
    UnknownAgent(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool {tool:?} failed: {message}")]
    ToolFailed { tool: String, message: String },
    #[error("tool loop hit its limit of {iterations} iterations without a final text reply")]
    ToolLoopExhausted { iterations: usize },
    #[error("agent {agent:?} returned an empty final reply")]
    EmptyFinalReply { agent: String },
    #[error("task {task_id:?} failed: {source}")]
    TaskFailed {
        task_id: String,
        #[source]
        source: Box<CrewError>,
    },
    #[error("delegation budget of {budget} decisions exhausted with tasks still pending")]
    DelegationExhausted { budget: usize },
    #[error("hierarchical process requires a manager model")]
    MissingManager,
    #[error("invalid crew: {0}")]
    InvalidCrew(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
