//! Bridging model replies to typed tool calls.

use super::types::{ChatResponse, ToolCall, ToolSchema};
use super::GatewayError;

/// Extract and validate a tool call from a chat response.
///
/// Prefers the provider's structured `tool_call` field. Otherwise scans the
/// reply text for one fenced JSON object of the form
/// `{"tool": "...", "args": {...}}` (the fallback protocol for providers
/// without structured tool calls). Plain text yields `Ok(None)`.
///
/// A present call is validated against `declared`: the tool must exist, every
/// required parameter must be supplied, every supplied argument must be
/// declared and match its declared type.
pub fn parse_tool_call(
    resp: &ChatResponse,
    declared: &[ToolSchema],
) -> Result<Option<ToolCall>, GatewayError> {
    if let Some(call) = &resp.message.tool_call {
        validate_call(call, declared)?;
        return Ok(Some(call.clone()));
    }
    if let Some(call) = extract_fenced_call(&resp.message.content) {
        validate_call(&call, declared)?;
        return Ok(Some(call));
    }
    Ok(None)
}

/// First ``` fenced block that parses as `{"tool": str, "args": obj}` with
/// exactly those two keys. An optional language tag after the opening fence
/// (e.g. ```json) is ignored.
fn extract_fenced_call(content: &str) -> Option<ToolCall> {
    let mut rest = content;
    while let Some(start) = rest.find("```") {
        let after_open = &rest[start + 3..];
        let end = after_open.find("```")?;
        let block = &after_open[..end];
        rest = &after_open[end + 3..];

        let body = match block.split_once('\n') {
            Some((first, tail)) if first.trim().chars().all(|c| c.is_ascii_alphanumeric()) => tail,
            _ => block,
        };
        if let Some(call) = parse_call_object(body.trim()) {
            return Some(call);
        }
    }
    None
}

fn parse_call_object(text: &str) -> Option<ToolCall> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let obj = value.as_object()?;
    if obj.len() != 2 {
        return None;
    }
    let name = obj.get("tool")?.as_str()?.to_string();
    let args = obj.get("args")?.as_object()?.clone();
    Some(ToolCall { name, args })
}

fn validate_call(call: &ToolCall, declared: &[ToolSchema]) -> Result<(), GatewayError> {
    let schema = declared
        .iter()
        .find(|t| t.name == call.name)
        .ok_or_else(|| GatewayError::UnknownTool(call.name.clone()))?;
    for param in &schema.parameters {
        match call.args.get(&param.name) {
            Some(value) if param.ty.matches(value) => {}
            Some(value) => {
                return Err(GatewayError::ToolArgTypeMismatch {
                    tool: call.name.clone(),
                    param: param.name.clone(),
                    reason: format!("expected {}, got {}", param.ty.as_str(), json_type(value)),
                })
            }
            None if param.required => {
                return Err(GatewayError::ToolArgTypeMismatch {
                    tool: call.name.clone(),
                    param: param.name.clone(),
                    reason: "missing required argument".to_string(),
                })
            }
            None => {}
        }
    }
    for arg in call.args.keys() {
        if !schema.parameters.iter().any(|p| &p.name == arg) {
            return Err(GatewayError::ToolArgTypeMismatch {
                tool: call.name.clone(),
                param: arg.clone(),
                reason: "argument not declared".to_string(),
            });
        }
    }
    Ok(())
}

fn json_type(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "boolean",
        serde_json::Value::Number(_) => "number",
        serde_json::Value::String(_) => "string",
        serde_json::Value::Array(_) => "array",
        serde_json::Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, ParamType, ToolParam, Usage};

    fn search_schema() -> Vec<ToolSchema> {
        vec![ToolSchema {
            name: "search".to_string(),
            description: "Search tickets".to_string(),
            parameters: vec![ToolParam::required("q", ParamType::String)],
        }]
    }

    fn text_response(content: &str) -> ChatResponse {
        ChatResponse {
            message: ChatMessage::assistant(content),
            usage: Usage::default(),
            finish_reason: "stop".to_string(),
        }
    }

    #[test]
    fn fenced_object_parses() {
        let resp = text_response("```json\n{\"tool\":\"search\",\"args\":{\"q\":\"x\"}}\n```");
        let call = parse_tool_call(&resp, &search_schema()).unwrap().unwrap();
        assert_eq!(call.name, "search");
        assert_eq!(call.args["q"], "x");
    }

    #[test]
    fn bare_fence_without_language_tag_parses() {
        let resp = text_response(
            "thinking...\n```\n{\"tool\":\"search\",\"args\":{\"q\":\"x\"}}\n```\ndone",
        );
        assert!(parse_tool_call(&resp, &search_schema()).unwrap().is_some());
    }

    #[test]
    fn plain_text_is_absent() {
        let resp = text_response("hello");
        assert!(parse_tool_call(&resp, &search_schema()).unwrap().is_none());
    }

    #[test]
    fn fenced_code_that_is_not_a_call_is_absent() {
        let resp = text_response("```rust\nfn main() {}\n```");
        assert!(parse_tool_call(&resp, &search_schema()).unwrap().is_none());
    }

    #[test]
    fn wrong_arg_type_is_rejected() {
        let resp = text_response("```\n{\"tool\":\"search\",\"args\":{\"q\":7}}\n```");
        let err = parse_tool_call(&resp, &search_schema()).unwrap_err();
        assert!(
            matches!(err, GatewayError::ToolArgTypeMismatch { ref param, .. } if param == "q"),
            "got {err}"
        );
    }

    #[test]
    fn unknown_tool_is_rejected() {
        let resp = text_response("```\n{\"tool\":\"missing\",\"args\":{}}\n```");
        let err = parse_tool_call(&resp, &search_schema()).unwrap_err();
        assert!(matches!(err, GatewayError::UnknownTool(name) if name == "missing"));
    }

    #[test]
    fn missing_required_and_undeclared_args_are_rejected() {
        let missing = text_response("```\n{\"tool\":\"search\",\"args\":{}}\n```");
        assert!(parse_tool_call(&missing, &search_schema()).is_err());
        let extra = text_response("```\n{\"tool\":\"search\",\"args\":{\"q\":\"x\",\"n\":1}}\n```");
        assert!(parse_tool_call(&extra, &search_schema()).is_err());
    }

    #[test]
    fn structured_field_wins_over_content() {
        let mut args = serde_json::Map::new();
        args.insert("q".to_string(), serde_json::Value::String("y".to_string()));
        let resp = ChatResponse {
            message: ChatMessage::assistant_tool_call(ToolCall {
                name: "search".to_string(),
                args,
            }),
            usage: Usage::default(),
            finish_reason: "tool_calls".to_string(),
        };
        let call = parse_tool_call(&resp, &search_schema()).unwrap().unwrap();
        assert_eq!(call.args["q"], "y");
    }
}
