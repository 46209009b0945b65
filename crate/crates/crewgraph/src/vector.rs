//! Flat in-memory vector index with cosine search and file persistence.
//!
//! Exhaustive scan, no ANN structures: the corpora this backs (historical
//! ticket text) are small, and correctness plus determinism outrank speed.
//! Scores are cosine similarity; ties order by id ascending.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EmbeddingVector;

const FORMAT: &str = "crewgraph-index";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("vector dimension mismatch: index is {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("id {0:?} already present")]
    DuplicateId(String),
    #[error("vector for {0:?} has non-finite components")]
    NonFinite(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    id: String,
    vector: Vec<f64>,
    payload: BTreeMap<String, String>,
}

/// One search result. Hits come back sorted by score descending, ties broken
/// by id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    /// Cosine similarity in [-1, 1]; zero-norm vectors score 0 by definition.
    pub score: f64,
    pub payload: BTreeMap<String, String>,
}

/// Flat cosine-similarity index.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    records: Vec<Record>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            dim,
            records: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn add(
        &mut self,
        id: impl Into<String>,
        vector: &EmbeddingVector,
        payload: BTreeMap<String, String>,
    ) -> Result<(), VectorError> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(VectorError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if !vector.is_finite() {
            return Err(VectorError::NonFinite(id));
        }
        if self.records.iter().any(|r| r.id == id) {
            return Err(VectorError::DuplicateId(id));
        }
        self.records.push(Record {
            id,
            vector: vector.values.clone(),
            payload,
        });
        Ok(())
    }

    /// Top `min(k, len)` records by cosine similarity to `query`.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, VectorError> {
        if query.dim() != self.dim {
            return Err(VectorError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if !query.is_finite() {
            return Err(VectorError::NonFinite("query".to_string()));
        }
        let mut hits: Vec<SearchHit> = self
            .records
            .iter()
            .map(|r| SearchHit {
                id: r.id.clone(),
                score: cosine(&query.values, &r.vector),
                payload: r.payload.clone(),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Persist as a single JSON document with a version/dim/count header.
    pub fn save(&self, path: &Path) -> Result<(), VectorError> {
        let doc = IndexFile {
            format: FORMAT.to_string(),
            version: VERSION,
            dim: self.dim,
            count: self.records.len(),
            records: self.records.clone(),
        };
        let bytes =
            serde_json::to_vec(&doc).map_err(|e| VectorError::CorruptIndex(e.to_string()))?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VectorError> {
        let bytes = fs::read(path)?;
        let doc: IndexFile =
            serde_json::from_slice(&bytes).map_err(|e| VectorError::CorruptIndex(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(VectorError::CorruptIndex(format!(
                "unexpected format {:?}",
                doc.format
            )));
        }
        if doc.version != VERSION {
            return Err(VectorError::CorruptIndex(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        if doc.count != doc.records.len() {
            return Err(VectorError::CorruptIndex(format!(
                "header count {} != {} records",
                doc.count,
                doc.records.len()
            )));
        }
        if doc.dim == 0 {
            return Err(VectorError::CorruptIndex("zero dimension".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for record in &doc.records {
            if record.vector.len() != doc.dim {
                return Err(VectorError::CorruptIndex(format!(
                    "record {:?} has dim {}",
                    record.id,
                    record.vector.len()
                )));
            }
            if record.vector.iter().any(|v| !v.is_finite()) {
                return Err(VectorError::CorruptIndex(format!(
                    "record {:?} has non-finite components",
                    record.id
                )));
            }
            if !seen.insert(record.id.clone()) {
                return Err(VectorError::CorruptIndex(format!(
                    "duplicate id {:?}",
                    record.id
                )));
            }
        }
        Ok(Self {
            dim: doc.dim,
            records: doc.records,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
    records: Vec<Record>,
}

/// cosine(u, v) = <u, v> / (|u||v|); 0 if either norm is 0.
fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}
