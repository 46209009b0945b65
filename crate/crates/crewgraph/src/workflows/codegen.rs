//! Code generation workflow with a review feedback loop.
//!
//! The loop is the feedback mechanism: `review` appends its feedback to the
//! shared `feedback_history` channel, and `generate`'s prompt always carries
//! the full history, so every revision addresses everything raised so far.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::crew::{as_graph_node, kickoff_sequential, AgentSpec, CrewSpec, Process, TaskSpec};
use crate::gateway::{ModelGateway, ModelRef};
use crate::graph::{
    ChannelSpec, ChannelValue, CompiledGraph, GraphBuilder, GraphState, NodeError, StateDelta, END,
};

use super::WorkflowBuildError;

pub const GENERATOR_ROLE: &str = "Code Generator";
pub const REVIEWER_ROLE: &str = "Code Reviewer";

/// Values of the `outcome` channel written by `decide`.
pub const OUTCOME_APPROVED: &str = "approved";
pub const OUTCOME_REVISE: &str = "revise";
pub const OUTCOME_REVISION_LIMIT: &str = "revision_limit";

pub const DEFAULT_MAX_REVISIONS: usize = 3;

/// Reviewer decision parsed from a reply that must start with `APPROVE` or
/// `REJECT:`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewVerdict {
    pub approved: bool,
    /// Non-empty whenever not approved.
    pub feedback: String,
}

/// Strict reply protocol: anything else is a workflow error, so scripted and
/// live reviewers are held to the same contract.
pub fn parse_review_reply(raw: &str) -> Result<ReviewVerdict, String> {
    let trimmed = raw.trim();
    if trimmed.starts_with("APPROVE") {
        return Ok(ReviewVerdict {
            approved: true,
            feedback: String::new(),
        });
    }
    if let Some(feedback) = trimmed.strip_prefix("REJECT:") {
        let feedback = feedback.trim();
        if feedback.is_empty() {
            return Err("REJECT must carry non-empty feedback".to_string());
        }
        return Ok(ReviewVerdict {
            approved: false,
            feedback: feedback.to_string(),
        });
    }
    Err(format!(
        "reviewer reply must start with APPROVE or REJECT:, got {trimmed:?}"
    ))
}

#[derive(Debug, Clone)]
pub struct CodegenConfig {
    pub generator: AgentSpec,
    pub reviewer: AgentSpec,
    pub requirement: String,
    pub max_revisions: usize,
}

impl CodegenConfig {
    pub fn new(generator: AgentSpec, reviewer: AgentSpec, requirement: impl Into<String>) -> Self {
        Self {
            generator,
            reviewer,
            requirement: requirement.into(),
            max_revisions: DEFAULT_MAX_REVISIONS,
        }
    }

    pub fn with_max_revisions(mut self, max_revisions: usize) -> Self {
        assert!(max_revisions >= 1, "max_revisions must be at least 1");
        self.max_revisions = max_revisions;
        self
    }
}

pub fn default_generator(model: ModelRef) -> AgentSpec {
    AgentSpec::new(
        GENERATOR_ROLE,
        "Write code that satisfies the requirement and every piece of review feedback",
        model,
    )
    .with_backstory("A pragmatic engineer who ships small, correct changes.")
}

pub fn default_reviewer(model: ModelRef) -> AgentSpec {
    AgentSpec::new(
        REVIEWER_ROLE,
        "Review generated code and either approve it or reject it with actionable feedback",
        model,
    )
    .with_backstory("A strict reviewer with an eye for missing tests and edge cases.")
}

fn generator_crew(agent: AgentSpec) -> Result<CrewSpec, WorkflowBuildError> {
    let role = agent.role.clone();
    CrewSpec::new(
        vec![agent],
        vec![TaskSpec::new(
            "generate_code",
            "Write code that satisfies this requirement:\n{requirement}\n\nReviewer feedback so far, address every point (may be empty):\n{feedback_history}",
            "The complete code, nothing else.",
        )
        .with_agent(role)],
        vec![],
        Process::Sequential,
    )
    .map_err(|e| WorkflowBuildError::Invalid(e.to_string()))
}

fn reviewer_crew(agent: AgentSpec) -> Result<CrewSpec, WorkflowBuildError> {
    let role = agent.role.clone();
    CrewSpec::new(
        vec![agent],
        vec![TaskSpec::new(
            "review_code",
            "Review the following code against the requirement it was written for.\n\nCode:\n{code}\n\nReply with exactly APPROVE, or REJECT: <what must change>.",
            "APPROVE or REJECT: <feedback>",
        )
        .with_agent(role)],
        vec![],
        Process::Sequential,
    )
    .map_err(|e| WorkflowBuildError::Invalid(e.to_string()))
}

/// Graph: `generate` (a crew node) writes `code`; `review` writes `verdict`
/// and appends rejection feedback to `feedback_history`; `decide` writes
/// `outcome` and routes back to `generate` until approval or the revision
/// limit. Hitting the limit is a recorded outcome, not an engine error.
pub fn build_codegen_graph(
    cfg: &CodegenConfig,
    gateway: Arc<dyn ModelGateway>,
) -> Result<CompiledGraph, WorkflowBuildError> {
    let generate = as_graph_node(
        Arc::new(generator_crew(cfg.generator.clone())?),
        vec!["requirement".to_string(), "feedback_history".to_string()],
        "code".to_string(),
        gateway.clone(),
    );

    let review_crew = Arc::new(reviewer_crew(cfg.reviewer.clone())?);
    let review_gateway = gateway;
    let review = move |state: &GraphState, ctx: &crate::graph::NodeCtx<'_>| {
        let code = state
            .text("code")
            .ok_or_else(|| NodeError::msg("missing channel \"code\""))?;
        let inputs = BTreeMap::from([("code".to_string(), code.to_string())]);
        let out = kickoff_sequential(&review_crew, &inputs, review_gateway.as_ref(), ctx.trace)
            .map_err(|e| NodeError::msg(format!("review crew failed: {e}")))?;
        let verdict = parse_review_reply(&out.final_output).map_err(NodeError::msg)?;
        let mut delta = StateDelta::new();
        delta.insert(
            "verdict".into(),
            ChannelValue::text(if verdict.approved {
                "approved"
            } else {
                "rejected"
            }),
        );
        if !verdict.approved {
            delta.insert(
                "feedback_history".into(),
                ChannelValue::TextList(vec![verdict.feedback]),
            );
        }
        Ok(delta)
    };

    let max_revisions = cfg.max_revisions;
    let decide = move |state: &GraphState, _ctx: &crate::graph::NodeCtx<'_>| {
        let approved = state.text("verdict") == Some("approved");
        let rejections = state
            .text_list("feedback_history")
            .map_or(0, <[String]>::len);
        let outcome = if approved {
            OUTCOME_APPROVED
        } else if rejections >= max_revisions {
            OUTCOME_REVISION_LIMIT
        } else {
            OUTCOME_REVISE
        };
        let mut delta = StateDelta::new();
        delta.insert("outcome".into(), ChannelValue::text(outcome));
        Ok(delta)
    };

    let requirement = cfg.requirement.clone();
    let graph = GraphBuilder::new()
        .declare_channel(
            ChannelSpec::replace("requirement").with_default(ChannelValue::Text(requirement)),
        )?
        .declare_channel(ChannelSpec::replace("code"))?
        .declare_channel(ChannelSpec::replace("verdict"))?
        .declare_channel(ChannelSpec::append_list("feedback_history"))?
        .declare_channel(ChannelSpec::replace("outcome"))?
        .add_node_handler("generate", generate)?
        .add_node("review", review)?
        .add_node("decide", decide)?
        .add_edge("generate", "review")?
        .add_edge("review", "decide")?
        .add_conditional_edge(
            "decide",
            |state: &GraphState| {
                if state.text("outcome") == Some(OUTCOME_REVISE) {
                    "generate".to_string()
                } else {
                    END.to_string()
                }
            },
            ["generate", END],
        )?
        .set_entry("generate")
        .compile()?;
    Ok(graph)
}
