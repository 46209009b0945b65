//! The bundled application workflows, built only from the public APIs of the
//! graph, crew, gateway, vector, and trace modules.
//!
//! - [`build_email_graph`]: check new emails, compose replies via a drafting
//!   crew, wait for the next run. Transport is a pair of JSONL files
//!   (inbox/outbox); "sending" is modeled as an outbox status transition.
//! - [`build_codegen_graph`]: generate code, review it, loop feedback back
//!   into generation until approval or the revision limit.
//! - [`build_ticket_graph`]: ingest a ticket, retrieve similar historical
//!   tickets from a vector index, audit a category, forward to a queue.

mod codegen;
mod email;
mod files;
mod ticket;

pub use codegen::{
    build_codegen_graph, default_generator, default_reviewer, parse_review_reply, CodegenConfig,
    ReviewVerdict, GENERATOR_ROLE, OUTCOME_APPROVED, OUTCOME_REVISE, OUTCOME_REVISION_LIMIT,
    REVIEWER_ROLE,
};
pub use email::{
    build_email_graph, default_drafter, EmailConfig, EmailRecord, EmailStatus, DRAFTER_ROLE,
};
pub use files::{append_jsonl, read_jsonl, read_jsonl_optional, FileError};
pub use ticket::{
    build_ticket_graph, default_auditor, TicketConfig, TicketDecision, AUDITOR_ROLE,
    DEFAULT_RETRIEVAL_K,
};

use thiserror::Error;

use crate::graph::{BuildError, CompileError};

/// Failures while assembling a workflow graph.
#[derive(Debug, Error)]
pub enum WorkflowBuildError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("invalid workflow config: {0}")]
    Invalid(String),
}
