//! Provider-agnostic model gateway.
//!
//! One [`ModelGateway`] trait, three implementations: an OpenAI-compatible /
//! Ollama HTTP client ([`HttpGateway`]), a deterministic scripted mock for
//! offline runs ([`MockGateway`]), and a [`ProviderRouter`] that dispatches
//! per request. Only non-streaming endpoints are used.

mod http;
mod mock;
mod parse;
mod types;

pub use http::{
    ollama_chat_body, ollama_embed_body, openai_chat_body, HttpGateway, HttpReply, HttpTransport,
    ReqwestTransport, MAX_RETRIES,
};
pub use mock::{mock_embedding, MockGateway, ScriptEntry, MOCK_EMBEDDING_DIM};
pub use parse::parse_tool_call;
pub use types::{
    ApiKey, ChatMessage, ChatRequest, ChatResponse, EmbeddingVector, ModelRef, ParamType, Provider,
    Role, ToolCall, ToolParam, ToolSchema, Usage,
};

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider returned status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("transport failed after retries: {0}")]
    Transport(String),
    #[error("mock script exhausted at call #{call}")]
    ScriptExhausted { call: usize },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool {tool:?} argument {param:?}: {reason}")]
    ToolArgTypeMismatch {
        tool: String,
        param: String,
        reason: String,
    },
    #[error("embedding dimension mismatch in batch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider {0} does not support embeddings")]
    EmbeddingUnsupported(String),
    #[error("invalid model reference: {0}")]
    InvalidModelRef(String),
    #[error("chat request has no messages")]
    EmptyMessages,
    #[error("empty embed request (texts must be non-empty and each text non-empty)")]
    EmptyEmbedInput,
    #[error("no gateway configured for provider {0}")]
    NoProvider(String),
}

/// Blocking chat + embedding client. Safe for concurrent calls.
pub trait ModelGateway: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// One vector per input text; every vector in a batch has the same dim.
    fn embed(
        &self,
        model: &ModelRef,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Dispatches each request to the gateway registered for its provider.
#[derive(Default)]
pub struct ProviderRouter {
    mock: Option<Arc<MockGateway>>,
    http: Option<Arc<HttpGateway>>,
}

impl ProviderRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mock(mut self, mock: Arc<MockGateway>) -> Self {
        self.mock = Some(mock);
        self
    }

    pub fn with_http(mut self, http: Arc<HttpGateway>) -> Self {
        self.http = Some(http);
        self
    }

    fn pick(&self, provider: Provider) -> Result<&dyn ModelGateway, GatewayError> {
        match provider {
            Provider::Mock => self
                .mock
                .as_ref()
                .map(|g| g.as_ref() as &dyn ModelGateway)
                .ok_or_else(|| GatewayError::NoProvider(provider.to_string())),
            Provider::OpenAiCompat | Provider::Ollama => self
                .http
                .as_ref()
                .map(|g| g.as_ref() as &dyn ModelGateway)
                .ok_or_else(|| GatewayError::NoProvider(provider.to_string())),
        }
    }
}

impl ModelGateway for ProviderRouter {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.pick(req.model.provider)?.chat(req)
    }

    fn embed(
        &self,
        model: &ModelRef,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        self.pick(model.provider)?.embed(model, texts)
    }
}

pub(crate) fn check_embed_input(texts: &[String]) -> Result<(), GatewayError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(GatewayError::EmptyEmbedInput);
    }
    Ok(())
}
