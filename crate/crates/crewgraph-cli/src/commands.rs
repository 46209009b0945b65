//! Subcommand implementations and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crewgraph::config::{LoadedConfig, WorkflowKind};
use crewgraph::gateway::{HttpGateway, MockGateway, ModelGateway, Provider, ProviderRouter};
use crewgraph::graph::{
    Checkpoint, CheckpointError, CheckpointStore, CompiledGraph, FileCheckpointStore, GraphState,
    RunConfig, RunError, RunSinks, DEFAULT_STEP_BUDGET,
};
use crewgraph::trace::{Clock, CounterClock, RunStatus, SystemClock, TraceSink};
use crewgraph::vector::VectorIndex;
use crewgraph::workflows::{build_codegen_graph, build_email_graph, build_ticket_graph};

use crate::RunArgs;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_WORKFLOW: u8 = 2;
const EXIT_BUDGET: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

struct Session {
    loaded: LoadedConfig,
    graph: CompiledGraph,
    initial: GraphState,
    workflow: String,
    clock: Arc<dyn Clock>,
    mock: Option<Arc<MockGateway>>,
}

fn prepare(config_path: &Path, deterministic: bool) -> Result<Session, Failure> {
    let loaded = LoadedConfig::load(config_path).map_err(|e| Failure::usage(e.to_string()))?;
    loaded
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;

    let clock: Arc<dyn Clock> = if deterministic {
        Arc::new(CounterClock::starting_at(0))
    } else {
        Arc::new(SystemClock)
    };

    let mock = match loaded.uses_mock() {
        true => {
            let script = loaded
                .mock_script_path()
                .ok_or_else(|| Failure::usage("mock provider requires mock_script"))?;
            Some(Arc::new(
                MockGateway::from_file(&script)
                    .map_err(|e| Failure::usage(format!("mock script: {e}")))?,
            ))
        }
        false => None,
    };
    let needs_http = std::iter::once(&loaded.config.model)
        .chain(loaded.config.models.values())
        .any(|m| m.provider != Provider::Mock);
    let mut router = ProviderRouter::new();
    if let Some(mock) = &mock {
        router = router.with_mock(mock.clone());
    }
    if needs_http {
        router = router.with_http(Arc::new(HttpGateway::new()));
    }
    let gateway: Arc<dyn ModelGateway> = Arc::new(router);

    let (graph, initial) = build_workflow(&loaded, gateway, clock.clone())?;
    Ok(Session {
        workflow: loaded.config.workflow.to_string(),
        loaded,
        graph,
        initial,
        clock,
        mock,
    })
}

fn build_workflow(
    loaded: &LoadedConfig,
    gateway: Arc<dyn ModelGateway>,
    clock: Arc<dyn Clock>,
) -> Result<(CompiledGraph, GraphState), Failure> {
    let usage = |e: &dyn std::fmt::Display| Failure::usage(e.to_string());
    match loaded.config.workflow {
        WorkflowKind::Email => {
            let cfg = loaded.email_config().map_err(|e| usage(&e))?;
            let graph = build_email_graph(&cfg, gateway, clock).map_err(|e| usage(&e))?;
            Ok((graph, GraphState::new()))
        }
        WorkflowKind::Codegen => {
            let cfg = loaded.codegen_config().map_err(|e| usage(&e))?;
            let graph = build_codegen_graph(&cfg, gateway).map_err(|e| usage(&e))?;
            Ok((graph, GraphState::new()))
        }
        WorkflowKind::Ticket => {
            let cfg = loaded.ticket_config().map_err(|e| usage(&e))?;
            let index_path = loaded
                .config
                .paths
                .index
                .as_deref()
                .map(|p| loaded.resolve(p))
                .ok_or_else(|| Failure::usage("config field \"paths.index\": required"))?;
            let index = VectorIndex::load(&index_path)
                .map_err(|e| Failure::usage(format!("index {}: {e}", index_path.display())))?;
            let graph =
                build_ticket_graph(&cfg, gateway, Arc::new(index)).map_err(|e| usage(&e))?;
            let params = &loaded.config.params;
            let initial = GraphState::new()
                .with(
                    "ticket_id",
                    crewgraph::graph::ChannelValue::text(
                        params.ticket_id.clone().unwrap_or_default(),
                    ),
                )
                .with(
                    "ticket_text",
                    crewgraph::graph::ChannelValue::text(
                        params.ticket_text.clone().unwrap_or_default(),
                    ),
                );
            Ok((graph, initial))
        }
    }
}

pub fn validate(config_path: &Path) -> u8 {
    match prepare(config_path, true) {
        Ok(session) => {
            let graph = &session.graph;
            println!("workflow: {}", session.workflow);
            println!("entry: {}", graph.entry());
            let nodes = graph.node_names();
            println!("nodes ({}): {}", nodes.len(), nodes.join(", "));
            println!("edges:");
            for (from, targets) in graph.conditional_edge_list() {
                println!("  {from} -> {{ {} }} (conditional)", targets.join(" | "));
            }
            for (from, to) in graph.plain_edge_list() {
                println!("  {from} -> {to}");
            }
            let channels: Vec<&str> = graph.channel_specs().map(|c| c.name.as_str()).collect();
            println!("channels ({}): {}", channels.len(), channels.join(", "));
            let warnings = &graph.certificate().warnings;
            if warnings.is_empty() {
                println!("warnings: none");
            } else {
                for warning in warnings {
                    let crewgraph::graph::CompileWarning::NoPathToEnd { node } = warning;
                    println!("warning: node {node:?} has no path to END (cyclic by design)");
                }
            }
            println!("config ok");
            EXIT_OK
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

/// Checkpoint store that also records, next to every checkpoint, how many
/// scripted mock responses had been consumed when it was written. Resuming
/// skips exactly that many entries, so a resumed run consumes the same
/// script suffix an uninterrupted run would.
struct CursorStore {
    inner: FileCheckpointStore,
    root: PathBuf,
    mock: Option<Arc<MockGateway>>,
}

impl CursorStore {
    fn cursor_path(root: &Path, run_id: &str, step_index: u64) -> PathBuf {
        root.join(run_id).join(format!("{step_index}.cursor"))
    }

    fn read_cursor(root: &Path, run_id: &str, step_index: u64) -> Option<usize> {
        fs::read_to_string(Self::cursor_path(root, run_id, step_index))
            .ok()
            .and_then(|s| s.trim().parse().ok())
    }
}

impl CheckpointStore for CursorStore {
    fn save(&self, cp: &Checkpoint) -> Result<(), CheckpointError> {
        self.inner.save(cp)?;
        if let Some(mock) = &self.mock {
            fs::write(
                Self::cursor_path(&self.root, &cp.run_id, cp.step_index),
                mock.consumed().to_string(),
            )?;
        }
        Ok(())
    }

    fn load_latest(&self, run_id: &str) -> Result<Checkpoint, CheckpointError> {
        self.inner.load_latest(run_id)
    }

    fn load_at(&self, run_id: &str, step_index: u64) -> Result<Checkpoint, CheckpointError> {
        self.inner.load_at(run_id, step_index)
    }
}

pub fn run(args: &RunArgs, is_resume: bool) -> u8 {
    match run_inner(args, is_resume) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn run_inner(args: &RunArgs, is_resume: bool) -> Result<u8, Failure> {
    let session = prepare(&args.config, args.deterministic)?;

    let run_id = args.run_id.clone().unwrap_or_else(|| {
        if args.deterministic {
            format!("run-{}", session.workflow)
        } else {
            format!("run-{}-{}", session.workflow, SystemClock.now_millis())
        }
    });

    let step_budget = args
        .step_budget
        .or(session.loaded.config.params.step_budget)
        .unwrap_or(DEFAULT_STEP_BUDGET);
    let mut run_cfg = RunConfig::new(run_id.clone()).with_step_budget(step_budget);

    let checkpoint_root = args.checkpoint_dir.clone().or_else(|| {
        session
            .loaded
            .config
            .paths
            .checkpoints
            .as_deref()
            .map(|p| session.loaded.resolve(p))
    });
    let store = checkpoint_root.as_ref().map(|root| CursorStore {
        inner: FileCheckpointStore::new(root.clone()),
        root: root.clone(),
        mock: session.mock.clone(),
    });
    if store.is_some() {
        let every = session.loaded.config.params.checkpoint_every.unwrap_or(1);
        run_cfg = run_cfg.with_checkpoint_every(every);
    }

    let sink = TraceSink::new(session.clock.clone());
    let tracer = sink
        .start_run(&session.workflow, &run_id)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut sinks = RunSinks::with_tracer(&tracer);
    if let Some(store) = &store {
        sinks = sinks.with_checkpoints(store);
    }

    let result = if is_resume {
        let (root, store) =
            match (&checkpoint_root, &store) {
                (Some(root), Some(store)) => (root, store),
                _ => return Err(Failure::usage(
                    "resume needs a checkpoint directory (--checkpoint-dir or paths.checkpoints)",
                )),
            };
        let cp = store.load_latest(&run_id).map_err(|e| match e {
            CheckpointError::NotFound(_) => {
                Failure::usage(format!("no checkpoint found for run {run_id:?}"))
            }
            other => Failure::usage(other.to_string()),
        })?;
        if let Some(mock) = &session.mock {
            let consumed =
                CursorStore::read_cursor(root, &run_id, cp.step_index).ok_or_else(|| {
                    Failure::usage(format!(
                        "no mock-script cursor for run {run_id:?} step {}; cannot resume a \
                         scripted run without it",
                        cp.step_index
                    ))
                })?;
            mock.skip(consumed);
        }
        session.graph.resume(cp, &run_cfg, sinks)
    } else {
        session
            .graph
            .invoke(session.initial.clone(), &run_cfg, sinks)
    };

    let status = if result.is_ok() {
        RunStatus::Ok
    } else {
        RunStatus::Failed
    };
    tracer
        .finish_run(status)
        .map_err(|e| Failure::usage(e.to_string()))?;

    let trace_out = args.trace_out.clone().or_else(|| {
        session
            .loaded
            .config
            .paths
            .trace_out
            .as_deref()
            .map(|p| session.loaded.resolve(p))
    });
    if let Some(path) = trace_out {
        sink.export_jsonl(&path)
            .map_err(|e| Failure::usage(format!("trace export: {e}")))?;
    }

    match result {
        Ok(outcome) => {
            if let Some(path) = &args.state_out {
                let bytes = outcome
                    .state
                    .canonical_bytes()
                    .map_err(|e| Failure::usage(format!("state encode: {e}")))?;
                fs::write(path, bytes).map_err(|e| Failure::usage(format!("state out: {e}")))?;
            }
            println!(
                "run {run_id}: {} completed after {} steps",
                session.workflow,
                outcome.steps.len()
            );
            if let Some(outcome_value) = outcome.state.text("outcome") {
                println!("outcome: {outcome_value}");
            }
            Ok(EXIT_OK)
        }
        Err(e @ RunError::FingerprintMismatch { .. }) => Err(Failure::usage(format!(
            "{e}; the workflow graph changed since the checkpoint was written"
        ))),
        Err(RunError::StepBudgetExhausted { steps, .. }) => {
            eprintln!("error: step budget exhausted after {steps} steps (resume to continue)");
            Ok(EXIT_BUDGET)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_WORKFLOW)
        }
    }
}
