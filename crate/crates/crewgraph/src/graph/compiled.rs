//! Graph validation, freezing, and topology fingerprinting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::builder::{ConditionalEdge, GraphBuilder, NodeHandler, END};
use super::state::ChannelSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("no entry point set")]
    MissingEntry,
    #[error("unknown node {0:?} referenced by the graph")]
    UnknownNode(String),
    #[error("node {0:?} is unreachable from the entry point")]
    UnreachableNode(String),
}

/// Non-fatal findings recorded on the compile certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileWarning {
    /// The node can never reach END (it sits on a pure cycle). Legal by
    /// design; the step budget bounds such graphs at run time.
    NoPathToEnd { node: String },
}

/// Proof of the checks [`GraphBuilder::compile`] performed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub entry: String,
    pub node_count: usize,
    pub warnings: Vec<CompileWarning>,
}

/// Validated, immutable, executable form of a workflow graph.
///
/// Compilation guarantees: the entry is registered, every edge endpoint
/// resolves to a node or [`END`], and every node is reachable from the
/// entry. Nodes that cannot reach END are flagged on the certificate, not
/// rejected. A `CompiledGraph` never changes after compilation and is safe
/// to share across concurrent runs.
pub struct CompiledGraph {
    pub(super) nodes: BTreeMap<String, NodeHandler>,
    pub(super) plain_edges: BTreeMap<String, String>,
    pub(super) conditional_edges: BTreeMap<String, ConditionalEdge>,
    pub(super) entry: String,
    pub(super) channels: BTreeMap<String, ChannelSpec>,
    fingerprint: String,
    certificate: Certificate,
}

impl std::fmt::Debug for CompiledGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledGraph")
            .field("entry", &self.entry)
            .field("nodes", &self.nodes.keys().collect::<Vec<_>>())
            .field("fingerprint", &self.fingerprint)
            .field("warnings", &self.certificate.warnings.len())
            .finish()
    }
}

impl CompiledGraph {
    pub(super) fn from_builder(builder: GraphBuilder) -> Result<Self, CompileError> {
        let GraphBuilder {
            nodes,
            plain_edges,
            conditional_edges,
            entry,
            channels,
        } = builder;

        let entry = entry.ok_or(CompileError::MissingEntry)?;
        if !nodes.contains_key(&entry) {
            return Err(CompileError::UnknownNode(entry));
        }

        let resolves = |name: &str| name == END || nodes.contains_key(name);
        for (from, to) in &plain_edges {
            if !nodes.contains_key(from) {
                return Err(CompileError::UnknownNode(from.clone()));
            }
            if !resolves(to) {
                return Err(CompileError::UnknownNode(to.clone()));
            }
        }
        for (from, edge) in &conditional_edges {
            if !nodes.contains_key(from) {
                return Err(CompileError::UnknownNode(from.clone()));
            }
            for target in &edge.targets {
                if !resolves(target) {
                    return Err(CompileError::UnknownNode(target.clone()));
                }
            }
        }

        let successors = |node: &str| -> Vec<&str> {
            if let Some(to) = plain_edges.get(node) {
                vec![to.as_str()]
            } else if let Some(edge) = conditional_edges.get(node) {
                edge.targets.iter().map(String::as_str).collect()
            } else {
                Vec::new()
            }
        };

        // Reachability from the entry; any node left out is a hard error.
        let mut reachable: BTreeSet<&str> = BTreeSet::new();
        let mut queue = VecDeque::from([entry.as_str()]);
        reachable.insert(entry.as_str());
        while let Some(node) = queue.pop_front() {
            for succ in successors(node) {
                if succ != END && reachable.insert(succ) {
                    queue.push_back(succ);
                }
            }
        }
        for name in nodes.keys() {
            if !reachable.contains(name.as_str()) {
                return Err(CompileError::UnreachableNode(name.clone()));
            }
        }

        // Which nodes can reach END. A node with no out-routing implicitly
        // routes to END, so only pure cycles end up outside this set.
        let mut ends: BTreeSet<&str> = nodes
            .keys()
            .map(String::as_str)
            .filter(|n| {
                let succ = successors(n);
                succ.is_empty() || succ.contains(&END)
            })
            .collect();
        loop {
            let grown: Vec<&str> = nodes
                .keys()
                .map(String::as_str)
                .filter(|n| !ends.contains(*n) && successors(n).iter().any(|s| ends.contains(s)))
                .collect();
            if grown.is_empty() {
                break;
            }
            ends.extend(grown);
        }
        let warnings: Vec<CompileWarning> = nodes
            .keys()
            .filter(|n| !ends.contains(n.as_str()))
            .map(|n| CompileWarning::NoPathToEnd { node: n.clone() })
            .collect();

        let fingerprint = fingerprint_topology(&nodes, &plain_edges, &conditional_edges);
        let certificate = Certificate {
            entry: entry.clone(),
            node_count: nodes.len(),
            warnings,
        };
        Ok(Self {
            nodes,
            plain_edges,
            conditional_edges,
            entry,
            channels: channels.into_iter().map(|c| (c.name.clone(), c)).collect(),
            fingerprint,
            certificate,
        })
    }

    /// Content hash of the sorted (node, edge) topology. Checkpoints carry
    /// it so a resume against a structurally different graph is rejected.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    /// Node names in sorted order.
    pub fn node_names(&self) -> Vec<&str> {
        self.nodes.keys().map(String::as_str).collect()
    }

    pub fn plain_edge_list(&self) -> Vec<(&str, &str)> {
        self.plain_edges
            .iter()
            .map(|(f, t)| (f.as_str(), t.as_str()))
            .collect()
    }

    pub fn conditional_edge_list(&self) -> Vec<(&str, Vec<&str>)> {
        self.conditional_edges
            .iter()
            .map(|(f, e)| (f.as_str(), e.targets.iter().map(String::as_str).collect()))
            .collect()
    }

    pub fn channel_specs(&self) -> impl Iterator<Item = &ChannelSpec> {
        self.channels.values()
    }
}

fn fingerprint_topology(
    nodes: &BTreeMap<String, NodeHandler>,
    plain: &BTreeMap<String, String>,
    conditional: &BTreeMap<String, ConditionalEdge>,
) -> String {
    // BTreeMap iteration is sorted, so this serialization is canonical.
    let topology = serde_json::json!({
        "nodes": nodes.keys().collect::<Vec<_>>(),
        "edges": plain.iter().map(|(f, t)| vec![f.clone(), t.clone()]).collect::<Vec<_>>(),
        "conditional": conditional
            .iter()
            .map(|(f, e)| serde_json::json!([f, e.targets.iter().collect::<Vec<_>>()]))
            .collect::<Vec<_>>(),
    });
    let digest = Sha256::digest(topology.to_string().as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("hex write");
    }
    out
}
