//! Graph execution: invoke, stream, resume.

use thiserror::Error;

use crate::trace::{RunTracer, SpanKind, TraceCtx};

use super::builder::{NodeCtx, END};
use super::checkpoint::{Checkpoint, CheckpointError, CheckpointStore};
use super::compiled::CompiledGraph;
use super::state::{ChannelSpec, ChannelValue, GraphState, MergePolicy, StateDelta};

/// Per-run execution parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Hard cap on node executions; the only guard on cyclic graphs.
    pub step_budget: usize,
    pub run_id: String,
    /// Persist a checkpoint every N steps (and after the final step).
    pub checkpoint_every: Option<usize>,
}

pub const DEFAULT_STEP_BUDGET: usize = 50;

impl RunConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            step_budget: DEFAULT_STEP_BUDGET,
            run_id: run_id.into(),
            checkpoint_every: None,
        }
    }

    pub fn with_step_budget(mut self, budget: usize) -> Self {
        assert!(budget >= 1, "step_budget must be at least 1");
        self.step_budget = budget;
        self
    }

    pub fn with_checkpoint_every(mut self, every: usize) -> Self {
        assert!(every >= 1, "checkpoint_every must be at least 1");
        self.checkpoint_every = Some(every);
        self
    }
}

/// One executed node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    /// 1-based position in the run (continues across resume).
    pub index: u64,
    pub node: String,
}

/// Final state plus the per-step record of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub state: GraphState,
    pub steps: Vec<StepRecord>,
}

impl RunOutcome {
    pub fn node_sequence(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.node.as_str()).collect()
    }
}

/// Where a run reports to: an optional tracer and an optional checkpoint
/// store. Both default to absent.
#[derive(Default, Clone, Copy)]
pub struct RunSinks<'a> {
    pub tracer: Option<&'a RunTracer<'a>>,
    pub checkpoints: Option<&'a dyn CheckpointStore>,
}

impl<'a> RunSinks<'a> {
    pub fn none() -> RunSinks<'static> {
        RunSinks {
            tracer: None,
            checkpoints: None,
        }
    }

    pub fn with_tracer(tracer: &'a RunTracer<'a>) -> RunSinks<'a> {
        RunSinks {
            tracer: Some(tracer),
            checkpoints: None,
        }
    }

    pub fn with_checkpoints(mut self, store: &'a dyn CheckpointStore) -> RunSinks<'a> {
        self.checkpoints = Some(store);
        self
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    /// The budget ran out mid-graph; carries the state reached so far.
    #[error("step budget exhausted after {steps} steps")]
    StepBudgetExhausted { state: Box<GraphState>, steps: u64 },
    #[error("router at {node:?} returned {returned:?}, not one of its allowed targets")]
    RouterViolation { node: String, returned: String },
    #[error("node {node:?} wrote undeclared channel {channel:?}")]
    HandlerWroteUndeclaredChannel { node: String, channel: String },
    #[error("initial state uses undeclared channel {channel:?}")]
    UndeclaredInitialChannel { channel: String },
    #[error("{context} wrote channel {channel:?} with a value incompatible with its merge policy")]
    ChannelTypeMismatch { context: String, channel: String },
    #[error("node {node:?} failed: {message}")]
    NodeFailed { node: String, message: String },
    #[error("checkpoint for fingerprint {found} cannot resume graph {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Applies one node's delta onto the state under the channel merge policies.
fn apply_delta(
    state: &mut GraphState,
    delta: StateDelta,
    channels: &std::collections::BTreeMap<String, ChannelSpec>,
    node: &str,
) -> Result<(), RunError> {
    for (channel, value) in delta {
        let spec =
            channels
                .get(&channel)
                .ok_or_else(|| RunError::HandlerWroteUndeclaredChannel {
                    node: node.to_string(),
                    channel: channel.clone(),
                })?;
        match spec.merge_policy {
            MergePolicy::Replace => {
                state.set(channel, value);
            }
            MergePolicy::AppendList => {
                let ChannelValue::TextList(mut incoming) = value else {
                    return Err(RunError::ChannelTypeMismatch {
                        context: format!("node {node:?}"),
                        channel,
                    });
                };
                let merged = match state.get(&channel) {
                    Some(ChannelValue::TextList(existing)) => {
                        let mut list = existing.clone();
                        list.append(&mut incoming);
                        list
                    }
                    Some(_) => {
                        return Err(RunError::ChannelTypeMismatch {
                            context: format!("node {node:?}"),
                            channel,
                        })
                    }
                    None => incoming,
                };
                state.set(channel, ChannelValue::TextList(merged));
            }
        }
    }
    Ok(())
}

/// Single-run stepping machine shared by invoke, stream, and resume.
struct Stepper<'g> {
    graph: &'g CompiledGraph,
    state: GraphState,
    /// Node to execute next; `None` once END was routed to.
    current: Option<String>,
    steps_done: u64,
    budget: u64,
}

impl<'g> Stepper<'g> {
    fn start(graph: &'g CompiledGraph, initial: GraphState, budget: u64) -> Result<Self, RunError> {
        let mut state = GraphState::new();
        for spec in graph.channels.values() {
            if let Some(default) = &spec.default {
                state.set(spec.name.clone(), default.clone());
            }
        }
        for (name, value) in initial.channels() {
            let spec =
                graph
                    .channels
                    .get(name)
                    .ok_or_else(|| RunError::UndeclaredInitialChannel {
                        channel: name.to_string(),
                    })?;
            if spec.merge_policy == MergePolicy::AppendList
                && !matches!(value, ChannelValue::TextList(_))
            {
                return Err(RunError::ChannelTypeMismatch {
                    context: "initial state".to_string(),
                    channel: name.to_string(),
                });
            }
            state.set(name.to_string(), value.clone());
        }
        Ok(Self {
            graph,
            state,
            current: Some(graph.entry.clone()),
            steps_done: 0,
            budget,
        })
    }

    fn from_checkpoint(
        graph: &'g CompiledGraph,
        cp: Checkpoint,
        budget: u64,
    ) -> Result<Self, RunError> {
        if cp.graph_fingerprint != graph.fingerprint() {
            return Err(RunError::FingerprintMismatch {
                expected: graph.fingerprint().to_string(),
                found: cp.graph_fingerprint,
            });
        }
        let mut stepper = Self {
            graph,
            state: cp.state,
            current: None,
            steps_done: cp.step_index,
            budget,
        };
        // Continue at the checkpointed node's out-routing: the node itself
        // already ran before the checkpoint was written.
        stepper.current = stepper.route_from(&cp.current_node)?;
        Ok(stepper)
    }

    fn budget_left(&self) -> bool {
        self.steps_done < self.budget
    }

    fn budget_error(&self) -> RunError {
        RunError::StepBudgetExhausted {
            state: Box::new(self.state.clone()),
            steps: self.steps_done,
        }
    }

    /// Execute the pending node and route onward. Returns the executed
    /// node's name, or `None` if the run already finished.
    fn advance(&mut self, ctx: &NodeCtx<'_>) -> Result<Option<String>, RunError> {
        let Some(node) = self.current.clone() else {
            return Ok(None);
        };
        if !self.budget_left() {
            return Err(self.budget_error());
        }
        let handler = &self.graph.nodes[&node];
        let delta = handler(&self.state, ctx).map_err(|e| RunError::NodeFailed {
            node: node.clone(),
            message: e.to_string(),
        })?;
        apply_delta(&mut self.state, delta, &self.graph.channels, &node)?;
        self.steps_done += 1;
        self.current = self.route_from(&node)?;
        Ok(Some(node))
    }

    /// Next node after `node`, or `None` for END. A node with no declared
    /// out-routing implicitly routes to END.
    fn route_from(&self, node: &str) -> Result<Option<String>, RunError> {
        if let Some(to) = self.graph.plain_edges.get(node) {
            return Ok((to != END).then(|| to.clone()));
        }
        if let Some(edge) = self.graph.conditional_edges.get(node) {
            let target = (edge.router)(&self.state);
            if !edge.targets.contains(&target) {
                return Err(RunError::RouterViolation {
                    node: node.to_string(),
                    returned: target,
                });
            }
            return Ok((target != END).then_some(target));
        }
        Ok(None)
    }
}

impl CompiledGraph {
    /// Execute from the entry node until END or budget exhaustion.
    ///
    /// Unset channels take their declared defaults; the initial state may
    /// only use declared channels. Each executed node gets a `graph_node`
    /// span on the tracer, and a checkpoint is persisted every
    /// `checkpoint_every` steps plus after the final step.
    pub fn invoke(
        &self,
        initial: GraphState,
        cfg: &RunConfig,
        sinks: RunSinks<'_>,
    ) -> Result<RunOutcome, RunError> {
        let stepper = Stepper::start(self, initial, cfg.step_budget as u64)?;
        self.run_loop(stepper, cfg, sinks)
    }

    /// Continue a checkpointed run at the checkpoint node's out-routing.
    ///
    /// With identical handler and router behavior the final state equals an
    /// uninterrupted [`CompiledGraph::invoke`]. Step counting continues from
    /// the checkpoint, so the budget covers the whole logical run.
    pub fn resume(
        &self,
        cp: Checkpoint,
        cfg: &RunConfig,
        sinks: RunSinks<'_>,
    ) -> Result<RunOutcome, RunError> {
        let stepper = Stepper::from_checkpoint(self, cp, cfg.step_budget as u64)?;
        self.run_loop(stepper, cfg, sinks)
    }

    /// Lazily yield `(node_name, state_after_step)` per executed node.
    ///
    /// On identical inputs the final yielded state equals
    /// [`CompiledGraph::invoke`]'s final state. Streaming runs are untraced
    /// and uncheckpointed.
    pub fn stream(&self, initial: GraphState, cfg: &RunConfig) -> StreamRun<'_> {
        match Stepper::start(self, initial, cfg.step_budget as u64) {
            Ok(stepper) => StreamRun {
                stepper: Some(stepper),
                failed: None,
            },
            Err(e) => StreamRun {
                stepper: None,
                failed: Some(e),
            },
        }
    }

    fn run_loop(
        &self,
        mut stepper: Stepper<'_>,
        cfg: &RunConfig,
        sinks: RunSinks<'_>,
    ) -> Result<RunOutcome, RunError> {
        let trace = match sinks.tracer {
            Some(t) => TraceCtx::root(t),
            None => TraceCtx::disabled(),
        };
        let mut steps = Vec::new();
        let mut last_saved: Option<u64> = None;
        while let Some(pending) = stepper.current.clone() {
            if !stepper.budget_left() {
                return Err(stepper.budget_error());
            }
            let span = trace.open(SpanKind::GraphNode, &pending);
            let ctx = NodeCtx {
                trace: trace.child(span),
            };
            match stepper.advance(&ctx) {
                Ok(Some(node)) => {
                    trace.close(span, None);
                    steps.push(StepRecord {
                        index: stepper.steps_done,
                        node: node.clone(),
                    });
                    if let (Some(every), Some(store)) = (cfg.checkpoint_every, sinks.checkpoints) {
                        if stepper.steps_done.is_multiple_of(every as u64) {
                            self.save_checkpoint(store, cfg, &stepper, &node)?;
                            last_saved = Some(stepper.steps_done);
                        }
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    trace.close(span, Some(&e.to_string()));
                    return Err(e);
                }
            }
        }
        // Checkpoint after the final step even off-cadence.
        if let (Some(_), Some(store)) = (cfg.checkpoint_every, sinks.checkpoints) {
            if let Some(last) = steps.last() {
                if last_saved != Some(stepper.steps_done) {
                    self.save_checkpoint(store, cfg, &stepper, &last.node)?;
                }
            }
        }
        Ok(RunOutcome {
            state: stepper.state,
            steps,
        })
    }

    fn save_checkpoint(
        &self,
        store: &dyn CheckpointStore,
        cfg: &RunConfig,
        stepper: &Stepper<'_>,
        node: &str,
    ) -> Result<(), RunError> {
        let cp = Checkpoint {
            run_id: cfg.run_id.clone(),
            step_index: stepper.steps_done,
            current_node: node.to_string(),
            state: stepper.state.clone(),
            graph_fingerprint: self.fingerprint().to_string(),
        };
        store.save(&cp)?;
        Ok(())
    }
}

/// Iterator over one streaming execution. See [`CompiledGraph::stream`].
pub struct StreamRun<'g> {
    stepper: Option<Stepper<'g>>,
    failed: Option<RunError>,
}

impl Iterator for StreamRun<'_> {
    type Item = Result<(String, GraphState), RunError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(err) = self.failed.take() {
            self.stepper = None;
            return Some(Err(err));
        }
        let stepper = self.stepper.as_mut()?;
        let ctx = NodeCtx::untraced();
        match stepper.advance(&ctx) {
            Ok(Some(node)) => Some(Ok((node, stepper.state.clone()))),
            Ok(None) => {
                self.stepper = None;
                None
            }
            Err(e) => {
                self.stepper = None;
                Some(Err(e))
            }
        }
    }
}
