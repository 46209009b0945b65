//! Stateful directed workflow graphs: build, validate, execute, checkpoint.
//!
//! A [`GraphBuilder`] collects named nodes, plain and conditional edges, and
//! channel declarations, then [`GraphBuilder::compile`]s into an immutable
//! [`CompiledGraph`]. Execution is strictly sequential per run: each node has
//! exactly one out-routing, cycles are legal, and the step budget is the only
//! loop guard. Runs can persist [`Checkpoint`]s and later
//! [`CompiledGraph::resume`] against the same topology (enforced by
//! fingerprint).

mod builder;
mod checkpoint;
mod compiled;
mod run;
mod state;

pub use builder::{BuildError, GraphBuilder, NodeCtx, NodeError, NodeHandler, RouterFn, END};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, Checkpoint, CheckpointError, CheckpointStore,
    FileCheckpointStore, MemoryCheckpointStore,
};
pub use compiled::{Certificate, CompileError, CompileWarning, CompiledGraph};
pub use run::{
    RunConfig, RunError, RunOutcome, RunSinks, StepRecord, StreamRun, DEFAULT_STEP_BUDGET,
};
pub use state::{ChannelSpec, ChannelValue, GraphState, MergePolicy, StateCodecError, StateDelta};
