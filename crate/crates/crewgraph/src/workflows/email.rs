//! Email triage workflow: check new emails, compose replies, wait.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crew::{kickoff_sequential, AgentSpec, CrewSpec, Process, TaskSpec};
use crate::gateway::{ModelGateway, ModelRef};
use crate::graph::{
    ChannelSpec, ChannelValue, CompiledGraph, GraphBuilder, GraphState, NodeError, StateDelta, END,
};
use crate::trace::Clock;

use super::files::{append_jsonl, read_jsonl};
use super::WorkflowBuildError;

pub const DRAFTER_ROLE: &str = "Email Action Specialist";

/// Default wait between runs when the config does not set one.
pub const DEFAULT_WAIT_MS: u64 = 300_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmailStatus {
    New,
    Drafted,
    Sent,
}

/// One inbox or outbox record. In an outbox record `from` keeps the original
/// correspondent so the draft knows whom it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailRecord {
    pub id: String,
    pub from: String,
    pub subject: String,
    pub body: String,
    pub status: EmailStatus,
}

#[derive(Debug, Clone)]
pub struct EmailConfig {
    pub inbox: PathBuf,
    pub outbox: PathBuf,
    pub drafter: AgentSpec,
    pub wait_ms: u64,
}

impl EmailConfig {
    pub fn new(inbox: impl Into<PathBuf>, outbox: impl Into<PathBuf>, drafter: AgentSpec) -> Self {
        Self {
            inbox: inbox.into(),
            outbox: outbox.into(),
            drafter,
            wait_ms: DEFAULT_WAIT_MS,
        }
    }
}

pub fn default_drafter(model: ModelRef) -> AgentSpec {
    AgentSpec::new(
        DRAFTER_ROLE,
        "Identify the action each incoming email needs and draft a complete reply",
        model,
    )
    .with_backstory("A meticulous correspondent who answers every email promptly and precisely.")
}

fn drafting_crew(drafter: AgentSpec) -> Result<CrewSpec, WorkflowBuildError> {
    let role = drafter.role.clone();
    CrewSpec::new(
        vec![drafter],
        vec![TaskSpec::new(
            "draft_reply",
            "An email needs attention.\nFrom: {email_from}\nSubject: {email_subject}\nBody:\n{email_body}\n\nIdentify the action needed and draft the reply email body.",
            "A complete, ready-to-send reply email body.",
        )
        .with_agent(role)],
        vec![],
        Process::Sequential,
    )
    .map_err(|e| WorkflowBuildError::Invalid(e.to_string()))
}

/// Graph: `check_new_emails` reads the inbox and writes `pending_ids`; a
/// conditional edge routes to `compose` iff any are pending, else `wait`;
/// `compose` drains the pending list through the drafting crew, appending
/// one drafted record per email to the outbox and writing the last draft to
/// `draft`; `wait` writes `next_run_at` and ends the run (scheduling the
/// next run belongs to the operator).
pub fn build_email_graph(
    cfg: &EmailConfig,
    gateway: Arc<dyn ModelGateway>,
    clock: Arc<dyn Clock>,
) -> Result<CompiledGraph, WorkflowBuildError> {
    let crew = Arc::new(drafting_crew(cfg.drafter.clone())?);

    let inbox = cfg.inbox.clone();
    let check = move |_state: &GraphState, _ctx: &crate::graph::NodeCtx<'_>| {
        let records = read_inbox(&inbox)?;
        let pending: Vec<String> = records
            .iter()
            .filter(|r| r.status == EmailStatus::New)
            .map(|r| r.id.clone())
            .collect();
        let mut delta = StateDelta::new();
        delta.insert("pending_ids".into(), ChannelValue::TextList(pending));
        Ok(delta)
    };

    let inbox = cfg.inbox.clone();
    let outbox = cfg.outbox.clone();
    let compose_crew = crew.clone();
    let compose_gateway = gateway.clone();
    let compose = move |state: &GraphState, ctx: &crate::graph::NodeCtx<'_>| {
        let pending = state
            .text_list("pending_ids")
            .ok_or_else(|| NodeError::msg("missing channel \"pending_ids\""))?;
        let records = read_inbox(&inbox)?;
        let by_id: BTreeMap<&str, &EmailRecord> =
            records.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut drafted: Vec<EmailRecord> = Vec::new();
        let mut last_draft = String::new();
        for id in pending {
            let record = by_id
                .get(id.as_str())
                .ok_or_else(|| NodeError::msg(format!("pending email {id:?} not in inbox")))?;
            let inputs = BTreeMap::from([
                ("email_from".to_string(), record.from.clone()),
                ("email_subject".to_string(), record.subject.clone()),
                ("email_body".to_string(), record.body.clone()),
            ]);
            let out =
                kickoff_sequential(&compose_crew, &inputs, compose_gateway.as_ref(), ctx.trace)
                    .map_err(|e| NodeError::msg(format!("drafting crew failed: {e}")))?;
            last_draft = out.final_output.clone();
            drafted.push(EmailRecord {
                id: record.id.clone(),
                from: record.from.clone(),
                subject: format!("Re: {}", record.subject),
                body: out.final_output,
                status: EmailStatus::Drafted,
            });
        }
        append_jsonl(&outbox, &drafted).map_err(|e| NodeError::msg(e.to_string()))?;
        let mut delta = StateDelta::new();
        delta.insert("draft".into(), ChannelValue::Text(last_draft));
        Ok(delta)
    };

    let wait_ms = cfg.wait_ms;
    let wait = move |_state: &GraphState, _ctx: &crate::graph::NodeCtx<'_>| {
        let mut delta = StateDelta::new();
        delta.insert(
            "next_run_at".into(),
            ChannelValue::Number((clock.now_millis() + wait_ms) as f64),
        );
        Ok(delta)
    };

    let graph = GraphBuilder::new()
        .declare_channel(
            ChannelSpec::replace("pending_ids").with_default(ChannelValue::TextList(Vec::new())),
        )?
        .declare_channel(ChannelSpec::replace("draft"))?
        .declare_channel(ChannelSpec::replace("next_run_at"))?
        .add_node("check_new_emails", check)?
        .add_node("compose", compose)?
        .add_node("wait", wait)?
        .add_conditional_edge(
            "check_new_emails",
            |state: &GraphState| {
                let pending = state.text_list("pending_ids").map_or(0, <[String]>::len);
                if pending > 0 { "compose" } else { "wait" }.to_string()
            },
            ["compose", "wait"],
        )?
        .add_edge("compose", "wait")?
        .add_edge("wait", END)?
        .set_entry("check_new_emails")
        .compile()?;
    Ok(graph)
}

fn read_inbox(path: &std::path::Path) -> Result<Vec<EmailRecord>, NodeError> {
    let records: Vec<EmailRecord> = read_jsonl(path).map_err(|e| NodeError::msg(e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for record in &records {
        if !seen.insert(record.id.as_str()) {
            return Err(NodeError::msg(format!(
                "inbox has duplicate email id {:?}",
                record.id
            )));
        }
    }
    Ok(records)
}
