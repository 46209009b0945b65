//! Deterministic scripted provider for offline runs and tests.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{
    ChatMessage, ChatRequest, ChatResponse, EmbeddingVector, ModelRef, ToolCall, Usage,
};
use super::{check_embed_input, GatewayError, ModelGateway};

/// One scripted chat reply, consumed in call order.
///
/// Script files are a JSON array of these entries:
///
/// ```json
/// [
///   {"type": "tool_call", "tool": "search", "args": {"q": "refund"}},
///   {"type": "text", "content": "done"}
/// ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScriptEntry {
    Text {
        content: String,
    },
    ToolCall {
        tool: String,
        #[serde(default)]
        args: serde_json::Map<String, serde_json::Value>,
    },
}

impl ScriptEntry {
    pub fn text(content: impl Into<String>) -> Self {
        ScriptEntry::Text {
            content: content.into(),
        }
    }

    pub fn tool_call(
        tool: impl Into<String>,
        args: serde_json::Map<String, serde_json::Value>,
    ) -> Self {
        ScriptEntry::ToolCall {
            tool: tool.into(),
            args,
        }
    }
}

/// Scripted chat provider plus hash-derived embeddings.
///
/// The script is one FIFO queue per gateway instance (build one per run):
/// every `chat` call pops the next entry regardless of which agent asked, so
/// multi-crew workflows interleave entries in execution order. `consumed`
/// counts successful pops, which the trace layer cross-checks against
/// llm_call spans.
pub struct MockGateway {
    script: Mutex<VecDeque<ScriptEntry>>,
    consumed: AtomicUsize,
}

impl MockGateway {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            script: Mutex::new(entries.into()),
            consumed: AtomicUsize::new(0),
        }
    }

    /// Empty script: any chat call fails with `ScriptExhausted`.
    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn from_json_str(json: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<ScriptEntry> = serde_json::from_str(json)?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Transport(format!("read script {}: {e}", path.display())))?;
        Self::from_json_str(&text)
            .map_err(|e| GatewayError::MalformedResponse(format!("mock script: {e}")))
    }

    /// Number of script entries consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script poisoned").len()
    }

    /// Drop the first `n` entries (used when resuming a checkpointed run
    /// whose earlier steps already consumed them).
    pub fn skip(&self, n: usize) {
        let mut script = self.script.lock().expect("script poisoned");
        for _ in 0..n {
            script.pop_front();
        }
    }
}

impl ModelGateway for MockGateway {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if req.messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        let entry = {
            let mut script = self.script.lock().expect("script poisoned");
            script.pop_front()
        };
        let entry = entry.ok_or(GatewayError::ScriptExhausted {
            call: self.consumed.load(Ordering::SeqCst) + 1,
        })?;
        self.consumed.fetch_add(1, Ordering::SeqCst);
        let (message, finish_reason) = match entry {
            ScriptEntry::Text { content } => (ChatMessage::assistant(content), "stop"),
            ScriptEntry::ToolCall { tool, args } => (
                ChatMessage::assistant_tool_call(ToolCall { name: tool, args }),
                "tool_calls",
            ),
        };
        Ok(ChatResponse {
            message,
            usage: Usage::default(),
            finish_reason: finish_reason.to_string(),
        })
    }

    fn embed(
        &self,
        _model: &ModelRef,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        Ok(texts.iter().map(|t| mock_embedding(t)).collect())
    }
}

/// Dimension of every mock embedding.
pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Weight of the shared namespace direction vs. the per-text direction.
const NAMESPACE_WEIGHT: f64 = 0.85;
const TEXT_WEIGHT: f64 = 0.15;

/// Deterministic hash-to-vector embedding.
///
/// `dir(s)` expands SHA-256 of `s` into [`MOCK_EMBEDDING_DIM`] components in
/// `[-1, 1]` (component `i` hashes `s` plus the byte `i`) and L2-normalizes.
/// A text of the form `"ns::rest"` embeds as
/// `normalize(0.85 * dir("ns") + 0.15 * dir(full text))`, so texts sharing a
/// namespace form a tight cluster (cosine ≈ 0.72 within, ≈ 0 across) while
/// staying distinct. Texts without a `::` separator embed as `dir(text)`.
/// Identical texts always give identical unit vectors.
pub fn mock_embedding(text: &str) -> EmbeddingVector {
    let vector = match text.split_once("::") {
        Some((ns, _)) if !ns.is_empty() => {
            let shared = hash_direction(ns);
            let own = hash_direction(text);
            let mut blended = [0.0; MOCK_EMBEDDING_DIM];
            for i in 0..MOCK_EMBEDDING_DIM {
                blended[i] = NAMESPACE_WEIGHT * shared[i] + TEXT_WEIGHT * own[i];
            }
            blended
        }
        _ => hash_direction(text),
    };
    EmbeddingVector::new(normalize(vector).to_vec())
}

fn hash_direction(seed: &str) -> [f64; MOCK_EMBEDDING_DIM] {
    let mut out = [0.0; MOCK_EMBEDDING_DIM];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut hasher = Sha256::new();
        hasher.update(seed.as_bytes());
        hasher.update([i as u8]);
        let digest = hasher.finalize();
        let raw = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        *slot = (raw as f64 / u64::MAX as f64) * 2.0 - 1.0;
    }
    normalize(out)
}

fn normalize(mut v: [f64; MOCK_EMBEDDING_DIM]) -> [f64; MOCK_EMBEDDING_DIM] {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}
