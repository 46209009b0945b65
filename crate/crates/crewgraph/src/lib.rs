//! Graph-structured multi-agent workflow engine.
//!
//! crewgraph pairs a deterministic graph execution core (nodes, conditional
//! edges, cycles, durable checkpoints) with a role-based crew layer (agents,
//! tasks, tools, sequential or hierarchical processes). Crews mount as graph
//! nodes, model calls go through a provider-agnostic gateway
//! (OpenAI-compatible, Ollama, or a scripted mock), retrieval uses a flat
//! cosine index, and every run can emit a JSONL audit trace.
//!
//! The [`workflows`] module wires these pieces into three ready-made
//! applications: email triage, code generation with a review feedback loop,
//! and ticket audit/forwarding. The `crewgraph` binary runs them from a
//! declarative config file.

pub mod config;
pub mod crew;
pub mod gateway;
pub mod graph;
pub mod trace;
pub mod vector;
pub mod workflows;
