//! Ticket audit-and-forward workflow backed by vector retrieval.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crew::{render_prompt, run_tool_loop, AgentSpec, TaskSpec};
use crate::gateway::{ChatMessage, ModelGateway, ModelRef};
use crate::graph::{
    ChannelSpec, ChannelValue, CompiledGraph, GraphBuilder, GraphState, NodeError, StateDelta, END,
};
use crate::trace::SpanKind;
use crate::vector::{SearchHit, VectorIndex};

use super::files::append_jsonl;
use super::WorkflowBuildError;

pub const AUDITOR_ROLE: &str = "Ticket Auditor";

/// Hits retrieved per ticket.
pub const DEFAULT_RETRIEVAL_K: usize = 3;

/// Routed outcome appended to the decisions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketDecision {
    pub ticket_id: String,
    pub category: String,
    /// Always a value from the configured routing table.
    pub destination_queue: String,
    pub supporting_hits: Vec<SearchHit>,
    pub rationale: String,
}

#[derive(Debug, Clone)]
pub struct TicketConfig {
    pub auditor: AgentSpec,
    /// Model used to embed the incoming ticket text.
    pub embed_model: ModelRef,
    pub decisions: PathBuf,
    /// category -> destination queue; must be non-empty.
    pub routing: BTreeMap<String, String>,
    pub k: usize,
}

impl TicketConfig {
    pub fn new(
        auditor: AgentSpec,
        embed_model: ModelRef,
        decisions: impl Into<PathBuf>,
        routing: BTreeMap<String, String>,
    ) -> Self {
        Self {
            auditor,
            embed_model,
            decisions: decisions.into(),
            routing,
            k: DEFAULT_RETRIEVAL_K,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        assert!(k >= 1, "k must be at least 1");
        self.k = k;
        self
    }
}

pub fn default_auditor(model: ModelRef) -> AgentSpec {
    AgentSpec::new(
        AUDITOR_ROLE,
        "Read each ticket, weigh similar historical tickets, and assign the correct category",
        model,
    )
    .with_backstory("Has audited work orders long enough to know every queue by heart.")
}

fn audit_task() -> TaskSpec {
    TaskSpec::new(
        "audit_ticket",
        "Classify this support ticket into exactly one category.\n\nTicket:\n{ticket}\n\nSimilar historical tickets:\n{hits}\n\nValid categories: {categories}\n\nReply with exactly one line: CATEGORY: <name>",
        "One line of the form CATEGORY: <name>",
    )
}

/// Graph: `ingest` normalizes the ticket text; `retrieve` embeds it and
/// writes the top-k hits; `audit` asks the auditor for `CATEGORY: <name>`
/// (one retry, then fallback to the majority category among the hits, ties
/// to the lexicographically smallest); `forward` appends a
/// [`TicketDecision`] to the decisions file.
pub fn build_ticket_graph(
    cfg: &TicketConfig,
    gateway: Arc<dyn ModelGateway>,
    index: Arc<VectorIndex>,
) -> Result<CompiledGraph, WorkflowBuildError> {
    if cfg.routing.is_empty() {
        return Err(WorkflowBuildError::Invalid(
            "ticket routing table must be non-empty".to_string(),
        ));
    }

    let ingest = |state: &GraphState, _ctx: &crate::graph::NodeCtx<'_>| {
        let text = state
            .text("ticket_text")
            .ok_or_else(|| NodeError::msg("missing channel \"ticket_text\""))?;
        let normalized = text
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if normalized.is_empty() {
            return Err(NodeError::msg("ticket text is empty"));
        }
        let mut delta = StateDelta::new();
        delta.insert("normalized".into(), ChannelValue::Text(normalized));
        Ok(delta)
    };

    let embed_model = cfg.embed_model.clone();
    let retrieve_gateway = gateway.clone();
    let retrieve_index = index;
    let k = cfg.k;
    let retrieve = move |state: &GraphState, ctx: &crate::graph::NodeCtx<'_>| {
        let normalized = state
            .text("normalized")
            .ok_or_else(|| NodeError::msg("missing channel \"normalized\""))?;
        let span = ctx.trace.open(SpanKind::Retrieval, "embed");
        ctx.trace.attr(span, "model", &embed_model.model);
        ctx.trace.attr(span, "k", &k.to_string());
        let embedded = retrieve_gateway
            .embed(&embed_model, &[normalized.to_string()])
            .map_err(|e| {
                ctx.trace.close(span, Some(&e.to_string()));
                NodeError::msg(format!("embedding failed: {e}"))
            })?;
        let hits = retrieve_index.search(&embedded[0], k).map_err(|e| {
            ctx.trace.close(span, Some(&e.to_string()));
            NodeError::msg(format!("vector search failed: {e}"))
        })?;
        ctx.trace.attr(span, "hits", &hits.len().to_string());
        ctx.trace.close(span, None);
        let encoded = serde_json::to_string(&hits)
            .map_err(|e| NodeError::msg(format!("encode hits: {e}")))?;
        let mut delta = StateDelta::new();
        delta.insert("hits".into(), ChannelValue::Text(encoded));
        Ok(delta)
    };

    let auditor = cfg.auditor.clone();
    let routing = cfg.routing.clone();
    let audit_gateway = gateway;
    let audit = move |state: &GraphState, ctx: &crate::graph::NodeCtx<'_>| {
        let ticket = state
            .text("ticket_text")
            .ok_or_else(|| NodeError::msg("missing channel \"ticket_text\""))?;
        let hits: Vec<SearchHit> = decode_hits(state)?;
        let hits_rendered = if hits.is_empty() {
            "(none)".to_string()
        } else {
            hits.iter()
                .map(|h| {
                    let category = h.payload.get("category").map_or("?", String::as_str);
                    format!("- {} (category={category}, score={:.3})", h.id, h.score)
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        let categories: Vec<&str> = routing.keys().map(String::as_str).collect();
        let inputs = BTreeMap::from([
            ("ticket".to_string(), ticket.to_string()),
            ("hits".to_string(), hits_rendered),
            ("categories".to_string(), categories.join(", ")),
        ]);
        let task = audit_task();
        let messages = render_prompt(&auditor, &task, &[], &inputs, &[])
            .map_err(|e| NodeError::msg(e.to_string()))?;

        let span = ctx.trace.open(SpanKind::CrewTask, &task.id);
        ctx.trace.attr(span, "agent", &auditor.role);
        let child = ctx.trace.child(span);
        let outcome = audit_with_retry(
            &auditor,
            messages,
            &routing,
            &hits,
            audit_gateway.as_ref(),
            child,
        );
        match outcome {
            Ok((category, rationale)) => {
                ctx.trace.attr(span, "category", &category);
                ctx.trace.close(span, None);
                let mut delta = StateDelta::new();
                delta.insert("category".into(), ChannelValue::Text(category));
                delta.insert("rationale".into(), ChannelValue::Text(rationale));
                Ok(delta)
            }
            Err(e) => {
                ctx.trace.close(span, Some(&e.to_string()));
                Err(e)
            }
        }
    };

    let routing = cfg.routing.clone();
    let decisions = cfg.decisions.clone();
    let forward = move |state: &GraphState, _ctx: &crate::graph::NodeCtx<'_>| {
        let category = state
            .text("category")
            .ok_or_else(|| NodeError::msg("missing channel \"category\""))?;
        let queue = routing
            .get(category)
            .ok_or_else(|| NodeError::msg(format!("category {category:?} not in routing table")))?;
        let decision = TicketDecision {
            ticket_id: state.text("ticket_id").unwrap_or_default().to_string(),
            category: category.to_string(),
            destination_queue: queue.clone(),
            supporting_hits: decode_hits(state)?,
            rationale: state.text("rationale").unwrap_or_default().to_string(),
        };
        append_jsonl(&decisions, &[decision]).map_err(|e| NodeError::msg(e.to_string()))?;
        let mut delta = StateDelta::new();
        delta.insert(
            "destination_queue".into(),
            ChannelValue::Text(queue.clone()),
        );
        Ok(delta)
    };

    let graph = GraphBuilder::new()
        .declare_channel(ChannelSpec::replace("ticket_id"))?
        .declare_channel(ChannelSpec::replace("ticket_text"))?
        .declare_channel(ChannelSpec::replace("normalized"))?
        .declare_channel(ChannelSpec::replace("hits"))?
        .declare_channel(ChannelSpec::replace("category"))?
        .declare_channel(ChannelSpec::replace("rationale"))?
        .declare_channel(ChannelSpec::replace("destination_queue"))?
        .add_node("ingest", ingest)?
        .add_node("retrieve", retrieve)?
        .add_node("audit", audit)?
        .add_node("forward", forward)?
        .add_edge("ingest", "retrieve")?
        .add_edge("retrieve", "audit")?
        .add_edge("audit", "forward")?
        .add_edge("forward", END)?
        .set_entry("ingest")
        .compile()?;
    Ok(graph)
}

fn decode_hits(state: &GraphState) -> Result<Vec<SearchHit>, NodeError> {
    let encoded = state
        .text("hits")
        .ok_or_else(|| NodeError::msg("missing channel \"hits\""))?;
    serde_json::from_str(encoded).map_err(|e| NodeError::msg(format!("decode hits: {e}")))
}

/// Ask for `CATEGORY: <name>`, retry once with a corrective message, then
/// fall back to the majority category among the hits. Fails only when both
/// the answers and the fallback are unusable.
fn audit_with_retry(
    auditor: &AgentSpec,
    mut messages: Vec<ChatMessage>,
    routing: &BTreeMap<String, String>,
    hits: &[SearchHit],
    gateway: &dyn ModelGateway,
    trace: crate::trace::TraceCtx<'_>,
) -> Result<(String, String), NodeError> {
    let mut last_reply = String::new();
    for attempt in 0..2 {
        let output = run_tool_loop(auditor, messages.clone(), &[], gateway, 1, trace)
            .map_err(|e| NodeError::msg(format!("audit crew failed: {e}")))?;
        if let Some(category) = parse_category(&output.raw, routing) {
            return Ok((category, output.raw));
        }
        last_reply = output.raw.clone();
        if attempt == 0 {
            let categories: Vec<&str> = routing.keys().map(String::as_str).collect();
            messages.push(ChatMessage::assistant(output.raw));
            messages.push(ChatMessage::user(format!(
                "That was not a valid answer. Reply with exactly one line: \
                 CATEGORY: <name>, where <name> is one of: {}.",
                categories.join(", ")
            )));
        }
    }
    if let Some(category) = majority_category(hits, routing) {
        let rationale =
            format!("fallback: majority category among retrieved hits (model said {last_reply:?})");
        return Ok((category, rationale));
    }
    Err(NodeError::msg(
        "unknown category: no parseable answer and no usable retrieval hits",
    ))
}

/// First `CATEGORY:` line whose name is in the routing table.
fn parse_category(reply: &str, routing: &BTreeMap<String, String>) -> Option<String> {
    for line in reply.lines() {
        if let Some(name) = line.trim().strip_prefix("CATEGORY:") {
            let name = name.trim();
            if routing.contains_key(name) {
                return Some(name.to_string());
            }
        }
    }
    None
}

/// Majority vote over hit payload categories restricted to the routing
/// table; ties break to the lexicographically smallest category.
fn majority_category(hits: &[SearchHit], routing: &BTreeMap<String, String>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for hit in hits {
        if let Some(category) = hit.payload.get("category") {
            if routing.contains_key(category) {
                *counts.entry(category).or_insert(0) += 1;
            }
        }
    }
    // BTreeMap iterates keys ascending, so the first maximum is the
    // lexicographically smallest on ties.
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(category, _)| (*category).to_string())
}
