//! Channel-keyed graph state with per-channel merge policies.

use std::collections::BTreeMap;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One value in a [`GraphState`] channel.
///
/// `Number` must be finite for the state to serialize canonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelValue {
    Text(String),
    Number(f64),
    Boolean(bool),
    TextList(Vec<String>),
    Blob(#[serde(with = "blob_b64")] Vec<u8>),
}

mod blob_b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

impl ChannelValue {
    pub fn text(s: impl Into<String>) -> Self {
        ChannelValue::Text(s.into())
    }

    pub fn text_list<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        ChannelValue::TextList(items.into_iter().map(Into::into).collect())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ChannelValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            ChannelValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_boolean(&self) -> Option<bool> {
        match self {
            ChannelValue::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text_list(&self) -> Option<&[String]> {
        match self {
            ChannelValue::TextList(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_blob(&self) -> Option<&[u8]> {
        match self {
            ChannelValue::Blob(b) => Some(b),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ChannelValue::Text(_) => "text",
            ChannelValue::Number(_) => "number",
            ChannelValue::Boolean(_) => "boolean",
            ChannelValue::TextList(_) => "text_list",
            ChannelValue::Blob(_) => "blob",
        }
    }

    /// Rendering used when a channel feeds a crew input.
    pub fn render(&self) -> String {
        match self {
            ChannelValue::Text(s) => s.clone(),
            ChannelValue::Number(n) => n.to_string(),
            ChannelValue::Boolean(b) => b.to_string(),
            ChannelValue::TextList(l) => l.join("\n"),
            ChannelValue::Blob(b) => base64::engine::general_purpose::STANDARD.encode(b),
        }
    }
}

/// A node's write set: channel name to new value.
pub type StateDelta = BTreeMap<String, ChannelValue>;

#[derive(Debug, Error)]
pub enum StateCodecError {
    #[error("state decode: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("state contains an empty channel name")]
    EmptyChannelName,
}

/// Keyed document of channel values flowing through graph nodes.
///
/// Channel names are non-empty and unique. Keys are kept sorted so
/// [`GraphState::canonical_bytes`] is a canonical form: equal states encode
/// to equal bytes, and decoding those bytes yields an equal state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GraphState {
    entries: BTreeMap<String, ChannelValue>,
}

impl GraphState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a channel value. Panics on an empty name
    /// (names come from code, not input).
    pub fn set(&mut self, name: impl Into<String>, value: ChannelValue) -> &mut Self {
        let name = name.into();
        assert!(!name.is_empty(), "channel name must be non-empty");
        self.entries.insert(name, value);
        self
    }

    /// Chained form of [`GraphState::set`] for building initial states.
    pub fn with(mut self, name: impl Into<String>, value: ChannelValue) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ChannelValue> {
        self.entries.get(name)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(ChannelValue::as_text)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(ChannelValue::as_number)
    }

    pub fn boolean(&self, name: &str) -> Option<bool> {
        self.get(name).and_then(ChannelValue::as_boolean)
    }

    pub fn text_list(&self, name: &str) -> Option<&[String]> {
        self.get(name).and_then(ChannelValue::as_text_list)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &ChannelValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical byte form: JSON with sorted keys and exact (shortest
    /// round-tripping) number encoding.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, StateCodecError> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, StateCodecError> {
        let state: GraphState = serde_json::from_slice(bytes)?;
        if state.entries.keys().any(|k| k.is_empty()) {
            return Err(StateCodecError::EmptyChannelName);
        }
        Ok(state)
    }
}

/// How writes to a channel combine with its current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Last write wins.
    Replace,
    /// Writes must be text lists; they concatenate in execution order.
    AppendList,
}

/// Declaration of one state channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub name: String,
    pub merge_policy: MergePolicy,
    pub default: Option<ChannelValue>,
}

impl ChannelSpec {
    pub fn replace(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            merge_policy: MergePolicy::Replace,
            default: None,
        }
    }

    pub fn append_list(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            merge_policy: MergePolicy::AppendList,
            default: Some(ChannelValue::TextList(Vec::new())),
        }
    }

    pub fn with_default(mut self, value: ChannelValue) -> Self {
        self.default = Some(value);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> GraphState {
        GraphState::new()
            .with("draft", ChannelValue::text("hello"))
            .with("count", ChannelValue::Number(3.5))
            .with("done", ChannelValue::Boolean(false))
            .with("ids", ChannelValue::text_list(["a", "b"]))
            .with("raw", ChannelValue::Blob(vec![0, 159, 146, 150]))
    }

    #[test]
    fn canonical_round_trip_is_equal() {
        let state = sample_state();
        let bytes = state.canonical_bytes().unwrap();
        let back = GraphState::from_canonical_bytes(&bytes).unwrap();
        assert_eq!(state, back);
        assert_eq!(bytes, back.canonical_bytes().unwrap());
    }

    #[test]
    fn canonical_bytes_are_key_sorted() {
        let a = GraphState::new()
            .with("b", ChannelValue::Number(1.0))
            .with("a", ChannelValue::Number(2.0));
        let mut c = GraphState::new();
        c.set("a", ChannelValue::Number(2.0));
        c.set("b", ChannelValue::Number(1.0));
        assert_eq!(a.canonical_bytes().unwrap(), c.canonical_bytes().unwrap());
    }

    #[test]
    fn number_encoding_round_trips_exactly() {
        let values = [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0];
        for v in values {
            let state = GraphState::new().with("n", ChannelValue::Number(v));
            let back = GraphState::from_canonical_bytes(&state.canonical_bytes().unwrap()).unwrap();
            assert_eq!(back.number("n").unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn empty_channel_name_rejected_on_decode() {
        let err = GraphState::from_canonical_bytes(br#"{"":{"text":"x"}}"#).unwrap_err();
        assert!(matches!(err, StateCodecError::EmptyChannelName));
    }

    #[test]
    #[should_panic(expected = "non-empty")]
    fn empty_channel_name_panics_on_set() {
        GraphState::new().set("", ChannelValue::Boolean(true));
    }

    #[test]
    fn render_formats_per_type() {
        assert_eq!(ChannelValue::text("x").render(), "x");
        assert_eq!(ChannelValue::Number(2.0).render(), "2");
        assert_eq!(ChannelValue::Number(2.5).render(), "2.5");
        assert_eq!(ChannelValue::Boolean(true).render(), "true");
        assert_eq!(ChannelValue::text_list(["a", "b"]).render(), "a\nb");
    }
}
