//! Local workflow audit log: run records, nested spans, JSONL export.
//!
//! Fills the role a hosted tracing service would play, but writes plain
//! JSONL so runs can be audited, diffed, and replayed offline. Timestamps
//! come from an injected [`Clock`] so tests and deterministic runs can
//! freeze or script time.
//!
//! # Export format
//!
//! One JSON object per line: first every run record (in start order), then
//! every span (per run, in start order). Field order is fixed, so
//! re-exporting a finished sink is byte-identical.
//!
//! ```text
//! {"record":"run","run_id":"r1","workflow":"email","status":"ok","started_ms":0,"finished_ms":9}
//! {"record":"span","run_id":"r1","span_id":"s1","parent_span_id":null,"kind":"graph_node","name":"compose","started_ms":1,"finished_ms":8,"attributes":{},"error":null}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

/// Millisecond time source for run and span timestamps.
pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;
}

/// Wall-clock time.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Always returns the same instant. Handy for unit tests.
#[derive(Debug)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_millis(&self) -> u64 {
        self.0
    }
}

/// Returns `start, start+1, start+2, ...` across calls.
///
/// Deterministic runs use this: two identical executions observe the same
/// sequence of instants, so trace exports are byte-identical, while parent
/// spans still strictly contain their children.
#[derive(Debug)]
pub struct CounterClock {
    next: AtomicU64,
}

impl CounterClock {
    pub fn starting_at(start_ms: u64) -> Self {
        Self {
            next: AtomicU64::new(start_ms),
        }
    }
}

impl Clock for CounterClock {
    fn now_millis(&self) -> u64 {
        self.next.fetch_add(1, Ordering::SeqCst)
    }
}

/// Run-scoped span identifier, rendered as `"s1"`, `"s2"`, ...
///
/// Ids are sequential per run rather than random so exports stay
/// byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanId(u64);

impl fmt::Display for SpanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl Serialize for SpanId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    GraphNode,
    CrewTask,
    LlmCall,
    ToolCall,
    Retrieval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

/// One timed event inside a run.
#[derive(Debug, Clone, Serialize)]
pub struct Span {
    pub span_id: SpanId,
    pub parent_span_id: Option<SpanId>,
    pub kind: SpanKind,
    pub name: String,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    pub attributes: BTreeMap<String, String>,
    pub error: Option<String>,
}

#[derive(Debug)]
struct RunEntry {
    run_id: String,
    workflow: String,
    status: RunStatus,
    started_ms: u64,
    finished_ms: Option<u64>,
    spans: Vec<Span>,
    next_span: u64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("run id {0:?} already started on this sink")]
    DuplicateRun(String),
    #[error("run {0:?} already finished")]
    RunAlreadyFinished(String),
    #[error("trace io: {0}")]
    Io(#[from] io::Error),
}

/// Collects run records and spans; exports them as JSONL.
///
/// A sink may receive spans from several concurrent runs; within one run,
/// span order is the caller's call order (spans are appended when started,
/// so a parent always precedes its children).
pub struct TraceSink {
    clock: Arc<dyn Clock>,
    runs: Mutex<Vec<RunEntry>>,
}

impl TraceSink {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            runs: Mutex::new(Vec::new()),
        }
    }

    /// Sink on wall-clock time.
    pub fn system() -> Self {
        Self::new(Arc::new(SystemClock))
    }

    /// Begin a run. `run_id` must be unique within this sink.
    pub fn start_run(&self, workflow: &str, run_id: &str) -> Result<RunTracer<'_>, TraceError> {
        let mut runs = self.runs.lock().expect("trace sink poisoned");
        if runs.iter().any(|r| r.run_id == run_id) {
            return Err(TraceError::DuplicateRun(run_id.to_string()));
        }
        let started = self.clock.now_millis();
        runs.push(RunEntry {
            run_id: run_id.to_string(),
            workflow: workflow.to_string(),
            status: RunStatus::Running,
            started_ms: started,
            finished_ms: None,
            spans: Vec::new(),
            next_span: 0,
        });
        Ok(RunTracer {
            sink: self,
            run_index: runs.len() - 1,
        })
    }

    pub fn run_status(&self, run_id: &str) -> Option<RunStatus> {
        let runs = self.runs.lock().expect("trace sink poisoned");
        runs.iter().find(|r| r.run_id == run_id).map(|r| r.status)
    }

    /// Number of spans of `kind` recorded for `run_id`.
    pub fn span_count(&self, run_id: &str, kind: SpanKind) -> usize {
        let runs = self.runs.lock().expect("trace sink poisoned");
        runs.iter()
            .find(|r| r.run_id == run_id)
            .map(|r| r.spans.iter().filter(|s| s.kind == kind).count())
            .unwrap_or(0)
    }

    /// Write the whole sink as JSONL: run lines first, then span lines.
    pub fn export_jsonl_to(&self, out: &mut dyn Write) -> Result<(), TraceError> {
        let runs = self.runs.lock().expect("trace sink poisoned");
        for run in runs.iter() {
            let line = RunLine {
                record: "run",
                run_id: &run.run_id,
                workflow: &run.workflow,
                status: run.status,
                started_ms: run.started_ms,
                finished_ms: run.finished_ms,
            };
            serde_json::to_writer(&mut *out, &line).map_err(io::Error::other)?;
            out.write_all(b"\n")?;
        }
        for run in runs.iter() {
            for span in &run.spans {
                let line = SpanLine {
                    record: "span",
                    run_id: &run.run_id,
                    span_id: span.span_id,
                    parent_span_id: span.parent_span_id,
                    kind: span.kind,
                    name: &span.name,
                    started_ms: span.started_ms,
                    finished_ms: span.finished_ms,
                    attributes: &span.attributes,
                    error: span.error.as_deref(),
                };
                serde_json::to_writer(&mut *out, &line).map_err(io::Error::other)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn export_jsonl(&self, path: &Path) -> Result<(), TraceError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.export_jsonl_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct RunLine<'a> {
    record: &'static str,
    run_id: &'a str,
    workflow: &'a str,
    status: RunStatus,
    started_ms: u64,
    finished_ms: Option<u64>,
}

#[derive(Serialize)]
struct SpanLine<'a> {
    record: &'static str,
    run_id: &'a str,
    span_id: SpanId,
    parent_span_id: Option<SpanId>,
    kind: SpanKind,
    name: &'a str,
    started_ms: u64,
    finished_ms: Option<u64>,
    attributes: &'a BTreeMap<String, String>,
    error: Option<&'a str>,
}

/// Handle for recording into one run of a [`TraceSink`].
pub struct RunTracer<'a> {
    sink: &'a TraceSink,
    run_index: usize,
}

impl fmt::Debug for RunTracer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunTracer")
            .field("run_id", &self.run_id())
            .finish()
    }
}

impl RunTracer<'_> {
    fn with_run<T>(&self, f: impl FnOnce(&mut RunEntry, &dyn Clock) -> T) -> T {
        let mut runs = self.sink.runs.lock().expect("trace sink poisoned");
        f(&mut runs[self.run_index], self.sink.clock.as_ref())
    }

    pub fn run_id(&self) -> String {
        self.with_run(|r, _| r.run_id.clone())
    }

    /// Open a span. The span is appended immediately, so parents always
    /// appear before their children in the export.
    pub fn start_span(
        &self,
        kind: SpanKind,
        name: &str,
        parent: Option<SpanId>,
    ) -> Result<SpanId, TraceError> {
        self.with_run(|run, clock| {
            if run.finished_ms.is_some() {
                return Err(TraceError::RunAlreadyFinished(run.run_id.clone()));
            }
            debug_assert!(
                parent.is_none_or(|p| run.spans.iter().any(|s| s.span_id == p)),
                "parent span must be recorded earlier in the same run"
            );
            run.next_span += 1;
            let id = SpanId(run.next_span);
            run.spans.push(Span {
                span_id: id,
                parent_span_id: parent,
                kind,
                name: name.to_string(),
                started_ms: clock.now_millis(),
                finished_ms: None,
                attributes: BTreeMap::new(),
                error: None,
            });
            Ok(id)
        })
    }

    /// Append an externally built, already finished span.
    pub fn record_span(&self, span: Span) -> Result<(), TraceError> {
        self.with_run(|run, _| {
            if run.finished_ms.is_some() {
                return Err(TraceError::RunAlreadyFinished(run.run_id.clone()));
            }
            run.next_span = run.next_span.max(span.span_id.0);
            run.spans.push(span);
            Ok(())
        })
    }

    pub fn finish_span(&self, id: SpanId, error: Option<&str>) {
        self.with_run(|run, clock| {
            if let Some(span) = run.spans.iter_mut().find(|s| s.span_id == id) {
                // Clamp so `finished >= started` holds even if a wall clock steps back.
                span.finished_ms = Some(clock.now_millis().max(span.started_ms));
                if let Some(e) = error {
                    span.error = Some(e.to_string());
                }
            }
        });
    }

    pub fn set_attr(&self, id: SpanId, key: &str, value: &str) {
        self.with_run(|run, _| {
            if let Some(span) = run.spans.iter_mut().find(|s| s.span_id == id) {
                span.attributes.insert(key.to_string(), value.to_string());
            }
        });
    }

    pub fn finish_run(&self, status: RunStatus) -> Result<(), TraceError> {
        self.with_run(|run, clock| {
            if run.finished_ms.is_some() {
                return Err(TraceError::RunAlreadyFinished(run.run_id.clone()));
            }
            run.status = status;
            run.finished_ms = Some(clock.now_millis().max(run.started_ms));
            Ok(())
        })
    }
}

/// Cheap, copyable handle threaded through engine, crews, and handlers.
///
/// Bundles an optional tracer with the span under which new spans should
/// nest. A disabled context makes every operation a no-op, so traced and
/// untraced code paths are identical.
#[derive(Clone, Copy)]
pub struct TraceCtx<'a> {
    tracer: Option<&'a RunTracer<'a>>,
    parent: Option<SpanId>,
}

impl<'a> TraceCtx<'a> {
    pub fn disabled() -> TraceCtx<'static> {
        TraceCtx {
            tracer: None,
            parent: None,
        }
    }

    pub fn root(tracer: &'a RunTracer<'a>) -> TraceCtx<'a> {
        TraceCtx {
            tracer: Some(tracer),
            parent: None,
        }
    }

    /// Same tracer, spans nest under `parent`.
    pub fn child(&self, parent: Option<SpanId>) -> TraceCtx<'a> {
        TraceCtx {
            tracer: self.tracer,
            parent: parent.or(self.parent),
        }
    }

    pub fn open(&self, kind: SpanKind, name: &str) -> Option<SpanId> {
        self.tracer
            .and_then(|t| t.start_span(kind, name, self.parent).ok())
    }

    pub fn close(&self, id: Option<SpanId>, error: Option<&str>) {
        if let (Some(t), Some(id)) = (self.tracer, id) {
            t.finish_span(id, error);
        }
    }

    pub fn attr(&self, id: Option<SpanId>, key: &str, value: &str) {
        if let (Some(t), Some(id)) = (self.tracer, id) {
            t.set_attr(id, key, value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting_sink() -> TraceSink {
        TraceSink::new(Arc::new(CounterClock::starting_at(0)))
    }

    #[test]
    fn start_run_is_running_until_finished() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        assert_eq!(sink.run_status("r1"), Some(RunStatus::Running));
        run.finish_run(RunStatus::Ok).unwrap();
        assert_eq!(sink.run_status("r1"), Some(RunStatus::Ok));
    }

    #[test]
    fn duplicate_run_id_rejected() {
        let sink = counting_sink();
        let _r = sink.start_run("email", "r1").unwrap();
        let err = sink.start_run("email", "r1").unwrap_err();
        assert!(matches!(err, TraceError::DuplicateRun(id) if id == "r1"));
    }

    #[test]
    fn span_after_finish_is_rejected() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        run.finish_run(RunStatus::Ok).unwrap();
        let err = run
            .start_span(SpanKind::GraphNode, "late", None)
            .unwrap_err();
        assert!(matches!(err, TraceError::RunAlreadyFinished(_)));

        let prebuilt = Span {
            span_id: SpanId(9),
            parent_span_id: None,
            kind: SpanKind::ToolCall,
            name: "late".to_string(),
            started_ms: 0,
            finished_ms: Some(1),
            attributes: BTreeMap::new(),
            error: None,
        };
        let err = run.record_span(prebuilt).unwrap_err();
        assert!(matches!(err, TraceError::RunAlreadyFinished(_)));
    }

    #[test]
    fn record_span_appends_prebuilt_spans() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        run.record_span(Span {
            span_id: SpanId(1),
            parent_span_id: None,
            kind: SpanKind::Retrieval,
            name: "imported".to_string(),
            started_ms: 3,
            finished_ms: Some(4),
            attributes: BTreeMap::new(),
            error: None,
        })
        .unwrap();
        run.finish_run(RunStatus::Ok).unwrap();
        assert_eq!(sink.span_count("r1", SpanKind::Retrieval), 1);
    }

    #[test]
    fn run_with_three_spans_exports_four_lines() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        let a = run
            .start_span(SpanKind::GraphNode, "check_new_emails", None)
            .unwrap();
        let b = run
            .start_span(SpanKind::CrewTask, "draft", Some(a))
            .unwrap();
        run.finish_span(b, None);
        run.finish_span(a, None);
        let c = run.start_span(SpanKind::GraphNode, "wait", None).unwrap();
        run.finish_span(c, None);
        run.finish_run(RunStatus::Ok).unwrap();

        let mut buf = Vec::new();
        sink.export_jsonl_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["record"], "run");
        assert_eq!(first["status"], "ok");
    }

    #[test]
    fn export_twice_is_byte_identical() {
        let sink = counting_sink();
        let run = sink.start_run("codegen", "r1").unwrap();
        let s = run.start_span(SpanKind::LlmCall, "mock", None).unwrap();
        run.finish_span(s, None);
        run.finish_run(RunStatus::Ok).unwrap();

        let mut a = Vec::new();
        let mut b = Vec::new();
        sink.export_jsonl_to(&mut a).unwrap();
        sink.export_jsonl_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_span_carries_error_text() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        let s = run
            .start_span(SpanKind::GraphNode, "compose", None)
            .unwrap();
        run.finish_span(s, Some("crew failed: script exhausted"));
        run.finish_run(RunStatus::Failed).unwrap();

        let mut buf = Vec::new();
        sink.export_jsonl_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let span_line: serde_json::Value =
            serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(span_line["error"], "crew failed: script exhausted");
        let run_line: serde_json::Value =
            serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(run_line["status"], "failed");
    }

    #[test]
    fn parent_spans_contain_children_and_precede_them() {
        let sink = counting_sink();
        let run = sink.start_run("email", "r1").unwrap();
        let parent = run.start_span(SpanKind::CrewTask, "task", None).unwrap();
        let child = run
            .start_span(SpanKind::LlmCall, "mock", Some(parent))
            .unwrap();
        run.finish_span(child, None);
        run.finish_span(parent, None);
        run.finish_run(RunStatus::Ok).unwrap();

        let mut buf = Vec::new();
        sink.export_jsonl_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .skip(1)
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0]["span_id"], "s1");
        assert_eq!(lines[1]["parent_span_id"], "s1");
        let ps = lines[0]["started_ms"].as_u64().unwrap();
        let pf = lines[0]["finished_ms"].as_u64().unwrap();
        let cs = lines[1]["started_ms"].as_u64().unwrap();
        let cf = lines[1]["finished_ms"].as_u64().unwrap();
        assert!(ps <= cs && cf <= pf, "parent interval must contain child");
    }

    #[test]
    fn fixed_clock_keeps_intervals_degenerate_but_ordered() {
        let sink = TraceSink::new(Arc::new(FixedClock(42)));
        let run = sink.start_run("email", "r1").unwrap();
        let s = run.start_span(SpanKind::GraphNode, "n", None).unwrap();
        run.finish_span(s, None);
        run.finish_run(RunStatus::Ok).unwrap();
        let mut buf = Vec::new();
        sink.export_jsonl_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let span: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(span["started_ms"], 42);
        assert_eq!(span["finished_ms"], 42);
    }
}
