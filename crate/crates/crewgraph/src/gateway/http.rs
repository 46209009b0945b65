//! OpenAI-compatible and Ollama wire clients.
//!
//! Wire shapes:
//! - OpenAI-compatible: `POST {base_url}/v1/chat/completions` with
//!   `model, messages[{role,content}], tools?, temperature`.
//! - Ollama: `POST {base_url}/api/chat` with `model, messages, stream:false`
//!   and `POST {base_url}/api/embeddings` with `model, prompt` (one call per
//!   text). Ollama requests carry no `tools` field; tool calling over ollama
//!   uses the fenced-JSON text protocol.
//!
//! Requests retry idempotently up to [`MAX_RETRIES`] times with exponential
//! backoff on 429, 5xx, and transport failures; other 4xx fail immediately.
//! The HTTP layer sits behind [`HttpTransport`] so retry and parsing logic is
//! testable without a network.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::types::{
    ChatMessage, ChatRequest, ChatResponse, EmbeddingVector, ModelRef, Provider, Role, ToolCall,
    ToolSchema, Usage,
};
use super::{check_embed_input, GatewayError, ModelGateway};

/// Maximum retry count after the initial attempt.
pub const MAX_RETRIES: u32 = 3;

const DEFAULT_BACKOFF: Duration = Duration::from_millis(200);
const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

/// Raw HTTP status + body. Transport errors (connect, timeout) are `Err`.
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking POST-JSON transport.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<HttpReply, String>;
}

/// Production transport over `reqwest::blocking`.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("reqwest client");
        Self { client }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<HttpReply, String> {
        let mut req = self.client.post(url).json(body);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Chat + embedding client for network providers.
pub struct HttpGateway {
    transport: Arc<dyn HttpTransport>,
    backoff_base: Duration,
}

impl HttpGateway {
    pub fn new() -> Self {
        Self::with_transport(Arc::new(ReqwestTransport::new()))
    }

    pub fn with_transport(transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            transport,
            backoff_base: DEFAULT_BACKOFF,
        }
    }

    /// Base delay for exponential backoff (tests set this to zero).
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn post_with_retry(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<String, GatewayError> {
        let mut attempt = 0u32;
        loop {
            let outcome = self.transport.post_json(url, headers, body);
            match outcome {
                Ok(reply) if (200..300).contains(&reply.status) => return Ok(reply.body),
                Ok(reply) => {
                    let retryable = reply.status == 429 || (500..600).contains(&reply.status);
                    if !retryable || attempt >= MAX_RETRIES {
                        return Err(GatewayError::ProviderError {
                            status: reply.status,
                            body: reply.body,
                        });
                    }
                }
                Err(e) => {
                    if attempt >= MAX_RETRIES {
                        return Err(GatewayError::Transport(e));
                    }
                }
            }
            let delay = self.backoff_base * 2u32.pow(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            attempt += 1;
        }
    }

    fn headers_for(model: &ModelRef) -> Vec<(String, String)> {
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        if model.provider == Provider::OpenAiCompat {
            if let Some(key) = &model.api_key {
                headers.push((
                    "authorization".to_string(),
                    format!("Bearer {}", key.expose()),
                ));
            }
        }
        headers
    }

    // Network providers need an endpoint.
    fn base_url_of(model: &ModelRef) -> Result<&str, GatewayError> {
        let base = model.base_url.trim_end_matches('/');
        if base.is_empty() {
            return Err(GatewayError::InvalidModelRef(format!(
                "provider {} requires a non-empty base_url",
                model.provider
            )));
        }
        Ok(base)
    }
}

impl Default for HttpGateway {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelGateway for HttpGateway {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if req.messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        match req.model.provider {
            Provider::OpenAiCompat => {
                let url = format!("{}/v1/chat/completions", Self::base_url_of(&req.model)?);
                let body = openai_chat_body(req);
                let reply = self.post_with_retry(&url, &Self::headers_for(&req.model), &body)?;
                parse_openai_chat(&reply)
            }
            Provider::Ollama => {
                let url = format!("{}/api/chat", Self::base_url_of(&req.model)?);
                let body = ollama_chat_body(req);
                let reply = self.post_with_retry(&url, &Self::headers_for(&req.model), &body)?;
                parse_ollama_chat(&reply)
            }
            Provider::Mock => Err(GatewayError::NoProvider("mock".to_string())),
        }
    }

    fn embed(
        &self,
        model: &ModelRef,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        match model.provider {
            Provider::Ollama => {
                let url = format!("{}/api/embeddings", Self::base_url_of(model)?);
                let mut out = Vec::with_capacity(texts.len());
                for text in texts {
                    let body = ollama_embed_body(model, text);
                    let reply = self.post_with_retry(&url, &Self::headers_for(model), &body)?;
                    out.push(parse_ollama_embedding(&reply)?);
                }
                let dim = out[0].dim();
                if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
                    return Err(GatewayError::DimensionMismatch {
                        expected: dim,
                        got: bad.dim(),
                    });
                }
                Ok(out)
            }
            Provider::OpenAiCompat => Err(GatewayError::EmbeddingUnsupported(
                "openai_compat".to_string(),
            )),
            Provider::Mock => Err(GatewayError::NoProvider("mock".to_string())),
        }
    }
}

/// Serialized OpenAI-compatible chat body.
///
/// Assistant tool calls get deterministic synthetic ids (`call_<index>`, the
/// message's position in the list); each tool message echoes the most recent
/// one, as the wire format requires an id pair we do not otherwise carry.
pub fn openai_chat_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::with_capacity(req.messages.len());
    let mut last_call_id = String::new();
    for (idx, msg) in req.messages.iter().enumerate() {
        match msg.role {
            Role::Assistant => {
                if let Some(call) = &msg.tool_call {
                    last_call_id = format!("call_{idx}");
                    messages.push(json!({
                        "role": "assistant",
                        "content": msg.content,
                        "tool_calls": [{
                            "id": last_call_id,
                            "type": "function",
                            "function": {
                                "name": call.name,
                                "arguments": Value::Object(call.args.clone()).to_string(),
                            },
                        }],
                    }));
                } else {
                    messages.push(json!({"role": "assistant", "content": msg.content}));
                }
            }
            Role::Tool => {
                messages.push(json!({
                    "role": "tool",
                    "tool_call_id": last_call_id,
                    "content": msg.content,
                }));
            }
            role => {
                messages.push(json!({"role": role.as_str(), "content": msg.content}));
            }
        }
    }
    let mut body = json!({
        "model": req.model.model,
        "messages": messages,
        "temperature": req.temperature,
    });
    if !req.tools.is_empty() {
        body["tools"] = Value::Array(req.tools.iter().map(openai_tool_schema).collect());
    }
    body
}

fn openai_tool_schema(tool: &ToolSchema) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for param in &tool.parameters {
        properties.insert(param.name.clone(), json!({"type": param.ty.as_str()}));
        if param.required {
            required.push(Value::String(param.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
            },
        },
    })
}

/// Serialized Ollama chat body (`stream: false`, no tools field).
pub fn ollama_chat_body(req: &ChatRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|msg| {
            // Assistant tool calls are rendered in the fenced-JSON text
            // protocol so conversation history stays self-consistent.
            let content = match &msg.tool_call {
                Some(call) if msg.content.is_empty() => format!(
                    "```json\n{{\"tool\":{},\"args\":{}}}\n```",
                    Value::String(call.name.clone()),
                    Value::Object(call.args.clone())
                ),
                _ => msg.content.clone(),
            };
            json!({"role": msg.role.as_str(), "content": content})
        })
        .collect();
    json!({
        "model": req.model.model,
        "messages": messages,
        "stream": false,
    })
}

/// Serialized Ollama embedding body for one text.
pub fn ollama_embed_body(model: &ModelRef, text: &str) -> Value {
    json!({"model": model.model, "prompt": text})
}

#[derive(Deserialize)]
struct OpenAiChatReply {
    choices: Vec<OpenAiChoice>,
    #[serde(default)]
    usage: Option<OpenAiUsage>,
}

#[derive(Deserialize)]
struct OpenAiChoice {
    message: OpenAiMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct OpenAiMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Vec<OpenAiToolCall>,
}

#[derive(Deserialize)]
struct OpenAiToolCall {
    function: OpenAiFunction,
}

#[derive(Deserialize)]
struct OpenAiFunction {
    name: String,
    arguments: String,
}

#[derive(Deserialize, Default)]
struct OpenAiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_openai_chat(body: &str) -> Result<ChatResponse, GatewayError> {
    let reply: OpenAiChatReply = serde_json::from_str(body)
        .map_err(|e| GatewayError::MalformedResponse(format!("openai chat: {e}")))?;
    let choice =
        reply.choices.into_iter().next().ok_or_else(|| {
            GatewayError::MalformedResponse("openai chat: no choices".to_string())
        })?;
    let tool_call = match choice.message.tool_calls.into_iter().next() {
        Some(tc) => {
            let args: Value = serde_json::from_str(&tc.function.arguments).map_err(|e| {
                GatewayError::MalformedResponse(format!("tool call arguments: {e}"))
            })?;
            let args = args.as_object().cloned().ok_or_else(|| {
                GatewayError::MalformedResponse("tool call arguments not an object".to_string())
            })?;
            Some(ToolCall {
                name: tc.function.name,
                args,
            })
        }
        None => None,
    };
    let content = choice.message.content.unwrap_or_default();
    let message = match tool_call {
        Some(call) => ChatMessage::assistant_tool_call(call),
        None => ChatMessage::assistant(content),
    };
    let usage = reply.usage.unwrap_or_default();
    Ok(ChatResponse {
        message,
        usage: Usage {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        },
        finish_reason: choice.finish_reason.unwrap_or_else(|| "stop".to_string()),
    })
}

#[derive(Deserialize)]
struct OllamaChatReply {
    message: OllamaMessage,
    #[serde(default)]
    done_reason: Option<String>,
    #[serde(default)]
    prompt_eval_count: u64,
    #[serde(default)]
    eval_count: u64,
}

#[derive(Deserialize)]
struct OllamaMessage {
    #[serde(default)]
    content: String,
}

fn parse_ollama_chat(body: &str) -> Result<ChatResponse, GatewayError> {
    let reply: OllamaChatReply = serde_json::from_str(body)
        .map_err(|e| GatewayError::MalformedResponse(format!("ollama chat: {e}")))?;
    Ok(ChatResponse {
        message: ChatMessage::assistant(reply.message.content),
        usage: Usage {
            prompt_tokens: reply.prompt_eval_count,
            completion_tokens: reply.eval_count,
        },
        finish_reason: reply.done_reason.unwrap_or_else(|| "stop".to_string()),
    })
}

#[derive(Deserialize)]
struct OllamaEmbedReply {
    embedding: Vec<f64>,
}

fn parse_ollama_embedding(body: &str) -> Result<EmbeddingVector, GatewayError> {
    let reply: OllamaEmbedReply = serde_json::from_str(body)
        .map_err(|e| GatewayError::MalformedResponse(format!("ollama embeddings: {e}")))?;
    let vector = EmbeddingVector::new(reply.embedding);
    if vector.values.is_empty() || !vector.is_finite() {
        return Err(GatewayError::MalformedResponse(
            "ollama embeddings: empty or non-finite vector".to_string(),
        ));
    }
    Ok(vector)
}
