//! Workflow graph construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::trace::TraceCtx;

use super::compiled::CompiledGraph;
use super::state::{ChannelSpec, ChannelValue, GraphState, MergePolicy, StateDelta};

/// Reserved terminal target. Routing to `END` finishes the run; `END` can
/// never be registered as a node.
pub const END: &str = "END";

/// Failure raised by a node handler, attributed to the node by the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeError {
    message: String,
}

impl NodeError {
    pub fn msg(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

impl fmt::Display for NodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for NodeError {}

impl From<String> for NodeError {
    fn from(message: String) -> Self {
        Self { message }
    }
}

/// Per-step context handed to handlers: the trace context under which the
/// handler's own spans (crew tasks, model calls, retrievals) should nest.
/// All other external effects go through gateways captured at build time.
#[derive(Clone, Copy)]
pub struct NodeCtx<'a> {
    pub trace: TraceCtx<'a>,
}

impl NodeCtx<'_> {
    pub fn untraced() -> NodeCtx<'static> {
        NodeCtx {
            trace: TraceCtx::disabled(),
        }
    }
}

/// A node: pure state-to-delta function (effects only via injected
/// gateways). Handlers may only write channels declared on the builder.
pub type NodeHandler =
    Arc<dyn Fn(&GraphState, &NodeCtx<'_>) -> Result<StateDelta, NodeError> + Send + Sync>;

/// Routing function of a conditional edge. The returned name must be one of
/// the edge's allowed targets; anything else is a run-time `RouterViolation`,
/// never a silent fallback.
pub type RouterFn = Arc<dyn Fn(&GraphState) -> String + Send + Sync>;

#[derive(Clone)]
pub(super) struct ConditionalEdge {
    pub(super) router: RouterFn,
    pub(super) targets: BTreeSet<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("node {0:?} is already registered")]
    DuplicateNode(String),
    #[error("{0:?} is a reserved name and cannot be registered")]
    ReservedName(String),
    #[error("node name must be non-empty")]
    EmptyName,
    #[error("node {0:?} already has an out-routing (exactly one per node)")]
    ConflictingEdge(String),
    #[error("conditional edge from {0:?} has no targets")]
    EmptyTargets(String),
    #[error("channel {0:?} is already declared")]
    DuplicateChannel(String),
    #[error("channel {name:?} is invalid: {reason}")]
    InvalidChannel { name: String, reason: String },
}

/// Builder for workflow graphs.
///
/// Edges may reference names freely at build time; all name resolution
/// happens at [`GraphBuilder::compile`]. Each node has exactly one
/// out-routing (a plain edge or a conditional edge); a node with neither
/// implicitly routes to [`END`].
///
/// ```
/// use crewgraph::graph::{ChannelSpec, ChannelValue, GraphBuilder, StateDelta, END};
///
/// let graph = GraphBuilder::new()
///     .declare_channel(ChannelSpec::replace("greeting")).unwrap()
///     .add_node("hello", |_state, _ctx| {
///         let mut delta = StateDelta::new();
///         delta.insert("greeting".into(), ChannelValue::text("hi"));
///         Ok(delta)
///     })
///     .unwrap()
///     .add_edge("hello", END)
///     .unwrap()
///     .set_entry("hello")
///     .compile()
///     .unwrap();
/// assert_eq!(graph.node_names(), ["hello"]);
/// ```
#[derive(Default)]
pub struct GraphBuilder {
    pub(super) nodes: BTreeMap<String, NodeHandler>,
    pub(super) plain_edges: BTreeMap<String, String>,
    pub(super) conditional_edges: BTreeMap<String, ConditionalEdge>,
    pub(super) entry: Option<String>,
    pub(super) channels: Vec<ChannelSpec>,
}

impl fmt::Debug for GraphBuilder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphBuilder")
            .field("nodes", &self.nodes.keys().collect::<Vec<_>>())
            .field("plain_edges", &self.plain_edges)
            .field(
                "conditional_edges",
                &self.conditional_edges.keys().collect::<Vec<_>>(),
            )
            .field("entry", &self.entry)
            .field("channels", &self.channels.len())
            .finish()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare a state channel. Handlers may only write declared channels.
    pub fn declare_channel(mut self, spec: ChannelSpec) -> Result<Self, BuildError> {
        if spec.name.is_empty() {
            return Err(BuildError::InvalidChannel {
                name: spec.name,
                reason: "name must be non-empty".to_string(),
            });
        }
        if self.channels.iter().any(|c| c.name == spec.name) {
            return Err(BuildError::DuplicateChannel(spec.name));
        }
        if spec.merge_policy == MergePolicy::AppendList {
            if let Some(default) = &spec.default {
                if !matches!(default, ChannelValue::TextList(_)) {
                    return Err(BuildError::InvalidChannel {
                        name: spec.name,
                        reason: "append_list channels must default to a text list".to_string(),
                    });
                }
            }
        }
        self.channels.push(spec);
        Ok(self)
    }

    /// Register a node under a unique, non-reserved name.
    pub fn add_node<F>(self, name: impl Into<String>, handler: F) -> Result<Self, BuildError>
    where
        F: Fn(&GraphState, &NodeCtx<'_>) -> Result<StateDelta, NodeError> + Send + Sync + 'static,
    {
        self.add_node_handler(name, Arc::new(handler))
    }

    /// Same as [`GraphBuilder::add_node`] for an already boxed handler.
    pub fn add_node_handler(
        mut self,
        name: impl Into<String>,
        handler: NodeHandler,
    ) -> Result<Self, BuildError> {
        let name = name.into();
        if name.is_empty() {
            return Err(BuildError::EmptyName);
        }
        if name == END {
            return Err(BuildError::ReservedName(name));
        }
        if self.nodes.contains_key(&name) {
            return Err(BuildError::DuplicateNode(name));
        }
        self.nodes.insert(name, handler);
        Ok(self)
    }

    /// Record a plain edge `from -> to`. `to` may be [`END`].
    pub fn add_edge(
        mut self,
        from: impl Into<String>,
        to: impl Into<String>,
    ) -> Result<Self, BuildError> {
        let from = from.into();
        if self.has_out_routing(&from) {
            return Err(BuildError::ConflictingEdge(from));
        }
        self.plain_edges.insert(from, to.into());
        Ok(self)
    }

    /// Record a conditional edge: at run time `router` picks one of
    /// `targets` (node names or [`END`]).
    pub fn add_conditional_edge<F, I, S>(
        mut self,
        from: impl Into<String>,
        router: F,
        targets: I,
    ) -> Result<Self, BuildError>
    where
        F: Fn(&GraphState) -> String + Send + Sync + 'static,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let from = from.into();
        let targets: BTreeSet<String> = targets.into_iter().map(Into::into).collect();
        if targets.is_empty() {
            return Err(BuildError::EmptyTargets(from));
        }
        if self.has_out_routing(&from) {
            return Err(BuildError::ConflictingEdge(from));
        }
        self.conditional_edges.insert(
            from,
            ConditionalEdge {
                router: Arc::new(router),
                targets,
            },
        );
        Ok(self)
    }

    /// Set the entry node. Calling again replaces the previous entry
    /// (last write wins); validated at compile.
    pub fn set_entry(mut self, name: impl Into<String>) -> Self {
        self.entry = Some(name.into());
        self
    }

    /// Validate and freeze the graph. See [`CompiledGraph`].
    pub fn compile(self) -> Result<CompiledGraph, super::CompileError> {
        CompiledGraph::from_builder(self)
    }

    fn has_out_routing(&self, from: &str) -> bool {
        self.plain_edges.contains_key(from) || self.conditional_edges.contains_key(from)
    }
}
