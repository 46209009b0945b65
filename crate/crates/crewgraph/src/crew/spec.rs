//! Agent, task, tool, and crew definitions.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{ModelRef, ToolParam, ToolSchema};

use super::CrewError;

/// Role-customized autonomous unit: who the agent is, what it pursues, and
/// which tools it may call.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub role: String,
    pub goal: String,
    pub backstory: String,
    /// Names resolved against the crew's tool registry.
    pub tools: Vec<String>,
    pub allow_delegation: bool,
    pub model: ModelRef,
}

impl AgentSpec {
    pub fn new(role: impl Into<String>, goal: impl Into<String>, model: ModelRef) -> Self {
        Self {
            role: role.into(),
            goal: goal.into(),
            backstory: String::new(),
            tools: Vec::new(),
            allow_delegation: false,
            model,
        }
    }

    pub fn with_backstory(mut self, backstory: impl Into<String>) -> Self {
        self.backstory = backstory.into();
        self
    }

    pub fn with_tools<I: IntoIterator<Item = S>, S: Into<String>>(mut self, tools: I) -> Self {
        self.tools = tools.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_delegation(mut self) -> Self {
        self.allow_delegation = true;
        self
    }
}

/// A unit of work: what to do, what a good answer looks like, who does it,
/// and which earlier task outputs it needs as context.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub id: String,
    /// May contain `{placeholder}` tokens resolved from kickoff inputs.
    pub description: String,
    pub expected_output: String,
    /// Executing agent's role. `None` only under the hierarchical process,
    /// where the manager (or fallback) assigns one.
    pub agent: Option<String>,
    /// Overrides the agent's tool list when set.
    pub tools: Option<Vec<String>>,
    /// Ids of earlier tasks whose outputs feed this one.
    pub context: Vec<String>,
}

impl TaskSpec {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        expected_output: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            expected_output: expected_output.into(),
            agent: None,
            tools: None,
            context: Vec::new(),
        }
    }

    pub fn with_agent(mut self, role: impl Into<String>) -> Self {
        self.agent = Some(role.into());
        self
    }

    pub fn with_tools<I: IntoIterator<Item = S>, S: Into<String>>(mut self, tools: I) -> Self {
        self.tools = Some(tools.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_context<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.context = ids.into_iter().map(Into::into).collect();
        self
    }
}

/// Executes a validated argument map, returning the tool's text result.
pub type ToolExecutor = Arc<
    dyn Fn(&serde_json::Map<String, serde_json::Value>) -> Result<String, String> + Send + Sync,
>;

/// A named, typed function agents may invoke mid-task.
#[derive(Clone)]
pub struct ToolSpec {
    pub schema: ToolSchema,
    pub executor: ToolExecutor,
}

impl ToolSpec {
    pub fn new<F>(
        name: impl Into<String>,
        description: impl Into<String>,
        parameters: Vec<ToolParam>,
        executor: F,
    ) -> Self
    where
        F: Fn(&serde_json::Map<String, serde_json::Value>) -> Result<String, String>
            + Send
            + Sync
            + 'static,
    {
        Self {
            schema: ToolSchema {
                name: name.into(),
                description: description.into(),
                parameters,
            },
            executor: Arc::new(executor),
        }
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec")
            .field("schema", &self.schema)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Sequential,
    Hierarchical,
}

pub const DEFAULT_MAX_DELEGATION_ROUNDS: usize = 3;
pub const DEFAULT_MAX_TOOL_ITERATIONS: usize = 5;

/// Orchestrated collection of agents and tasks.
///
/// [`CrewSpec::new`] validates the whole structure; a constructed crew is
/// immutable and safe to share across concurrent kickoffs.
#[derive(Debug, Clone)]
pub struct CrewSpec {
    pub agents: Vec<AgentSpec>,
    pub tasks: Vec<TaskSpec>,
    pub tools: Vec<ToolSpec>,
    pub process: Process,
    /// Required by the hierarchical process: the synthesized manager's model.
    pub manager_model: Option<ModelRef>,
    pub max_delegation_rounds: usize,
    /// Chat calls per task are bounded by this plus one.
    pub max_tool_iterations: usize,
}

impl CrewSpec {
    pub fn new(
        agents: Vec<AgentSpec>,
        tasks: Vec<TaskSpec>,
        tools: Vec<ToolSpec>,
        process: Process,
    ) -> Result<Self, CrewError> {
        let crew = Self {
            agents,
            tasks,
            tools,
            process,
            manager_model: None,
            max_delegation_rounds: DEFAULT_MAX_DELEGATION_ROUNDS,
            max_tool_iterations: DEFAULT_MAX_TOOL_ITERATIONS,
        };
        crew.validate()?;
        Ok(crew)
    }

    pub fn with_manager(mut self, model: ModelRef) -> Self {
        self.manager_model = Some(model);
        self
    }

    pub fn with_max_delegation_rounds(mut self, rounds: usize) -> Self {
        assert!(rounds >= 1, "max_delegation_rounds must be at least 1");
        self.max_delegation_rounds = rounds;
        self
    }

    pub fn with_max_tool_iterations(mut self, iterations: usize) -> Self {
        assert!(iterations >= 1, "max_tool_iterations must be at least 1");
        self.max_tool_iterations = iterations;
        self
    }

    pub fn agent(&self, role: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.role == role)
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name() == name)
    }

    fn validate(&self) -> Result<(), CrewError> {
        let invalid = |message: String| Err(CrewError::InvalidCrew(message));

        let mut roles = BTreeSet::new();
        for agent in &self.agents {
            if agent.role.is_empty() || agent.goal.is_empty() {
                return invalid(format!(
                    "agent {:?} must have a non-empty role and goal",
                    agent.role
                ));
            }
            if !roles.insert(agent.role.as_str()) {
                return invalid(format!("duplicate agent role {:?}", agent.role));
            }
        }

        let mut tool_names = BTreeSet::new();
        for tool in &self.tools {
            if !tool_names.insert(tool.name()) {
                return invalid(format!("duplicate tool name {:?}", tool.name()));
            }
            let mut params = BTreeSet::new();
            for param in &tool.schema.parameters {
                if !params.insert(param.name.as_str()) {
                    return invalid(format!(
                        "tool {:?} has duplicate parameter {:?}",
                        tool.name(),
                        param.name
                    ));
                }
            }
        }
        for agent in &self.agents {
            for name in &agent.tools {
                if !tool_names.contains(name.as_str()) {
                    return invalid(format!(
                        "agent {:?} references unknown tool {:?}",
                        agent.role, name
                    ));
                }
            }
        }

        let mut task_ids: BTreeSet<&str> = BTreeSet::new();
        for task in &self.tasks {
            if task.id.is_empty() {
                return invalid("task ids must be non-empty".to_string());
            }
            if !task_ids.insert(task.id.as_str()) {
                return invalid(format!("duplicate task id {:?}", task.id));
            }
        }
        // Context references must point at strictly earlier tasks.
        let mut earlier: BTreeSet<&str> = BTreeSet::new();
        for task in &self.tasks {
            for ctx in &task.context {
                if !earlier.contains(ctx.as_str()) {
                    return invalid(format!(
                        "task {:?} references context {:?} which is not an earlier task",
                        task.id, ctx
                    ));
                }
            }
            earlier.insert(task.id.as_str());
        }
        for task in &self.tasks {
            match (&task.agent, self.process) {
                (Some(role), _) if self.agent(role).is_none() => {
                    return invalid(format!("task {:?} names unknown agent {:?}", task.id, role));
                }
                (None, Process::Sequential) => {
                    return invalid(format!(
                        "task {:?} has no agent; the sequential process requires one",
                        task.id
                    ));
                }
                _ => {}
            }
            if let Some(tools) = &task.tools {
                for name in tools {
                    if !tool_names.contains(name.as_str()) {
                        return invalid(format!(
                            "task {:?} references unknown tool {:?}",
                            task.id, name
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Record of one executed task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskOutput {
    pub task_id: String,
    pub agent_role: String,
    /// Final plain-text answer; non-empty on success.
    pub raw: String,
    pub tool_invocations: Vec<ToolInvocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInvocation {
    pub tool: String,
    pub args: serde_json::Map<String, serde_json::Value>,
    pub result: String,
}

/// All task outputs of one kickoff, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrewOutput {
    pub task_outputs: Vec<TaskOutput>,
    /// Raw text of the last completed task; empty for a crew with no tasks.
    pub final_output: String,
}
