//! Durable run snapshots bound to a graph-topology fingerprint.
//!
//! File layout: one file per `(run_id, step_index)` at
//! `<dir>/<run_id>/<step_index>.ckpt`. A file is a JSON header line carrying
//! the graph fingerprint and a SHA-256 of the payload, then the canonical
//! JSON payload. Tampering with either part is detected on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::state::GraphState;

const FORMAT: &str = "crewgraph-checkpoint";
const VERSION: u32 = 1;

/// Snapshot of a run right after `current_node` executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub run_id: String,
    /// Number of completed steps (1-based count).
    pub step_index: u64,
    /// Last executed node; resume continues at its out-routing.
    pub current_node: String,
    pub state: GraphState,
    pub graph_fingerprint: String,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("no checkpoint found for run {0:?}")]
    NotFound(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("run id {0:?} is not filesystem-safe (use [A-Za-z0-9._-])")]
    InvalidRunId(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encode: {0}")]
    Encode(serde_json::Error),
}

/// Persistence backend for checkpoints. Writes for one `run_id` must be
/// serialized by the caller; distinct run ids never collide.
pub trait CheckpointStore: Send + Sync {
    fn save(&self, cp: &Checkpoint) -> Result<(), CheckpointError>;

    /// Checkpoint with the highest `step_index` for `run_id`.
    fn load_latest(&self, run_id: &str) -> Result<Checkpoint, CheckpointError>;

    fn load_at(&self, run_id: &str, step_index: u64) -> Result<Checkpoint, CheckpointError>;
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    graph_fingerprint: String,
    payload_sha256: String,
}

/// Byte-canonical encoding: header line + payload line.
pub fn encode_checkpoint(cp: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let payload = serde_json::to_vec(cp).map_err(CheckpointError::Encode)?;
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        graph_fingerprint: cp.graph_fingerprint.clone(),
        payload_sha256: sha256_hex(&payload),
    };
    let mut out = serde_json::to_vec(&header).map_err(CheckpointError::Encode)?;
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out.push(b'\n');
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| CheckpointError::Corrupt("missing header line".to_string()))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(CheckpointError::Corrupt(format!(
            "unexpected format {:?}",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(CheckpointError::Corrupt(format!(
            "unsupported version {}",
            header.version
        )));
    }
    let mut payload = &bytes[split + 1..];
    if payload.last() == Some(&b'\n') {
        payload = &payload[..payload.len() - 1];
    }
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(CheckpointError::Corrupt(
            "payload hash mismatch".to_string(),
        ));
    }
    let cp: Checkpoint = serde_json::from_slice(payload)
        .map_err(|e| CheckpointError::Corrupt(format!("payload: {e}")))?;
    if cp.graph_fingerprint != header.graph_fingerprint {
        return Err(CheckpointError::Corrupt(
            "fingerprint differs between header and payload".to_string(),
        ));
    }
    Ok(cp)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("hex write");
    }
    out
}

fn check_run_id(run_id: &str) -> Result<(), CheckpointError> {
    let ok = !run_id.is_empty()
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(CheckpointError::InvalidRunId(run_id.to_string()))
    }
}

/// One file per checkpoint under `<root>/<run_id>/<step_index>.ckpt`.
/// Writes go through a temp file and an atomic rename.
pub struct FileCheckpointStore {
    root: PathBuf,
}

impl FileCheckpointStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    fn path_for(&self, run_id: &str, step_index: u64) -> PathBuf {
        self.run_dir(run_id).join(format!("{step_index}.ckpt"))
    }
}

impl CheckpointStore for FileCheckpointStore {
    fn save(&self, cp: &Checkpoint) -> Result<(), CheckpointError> {
        check_run_id(&cp.run_id)?;
        let dir = self.run_dir(&cp.run_id);
        fs::create_dir_all(&dir)?;
        let bytes = encode_checkpoint(cp)?;
        let path = self.path_for(&cp.run_id, cp.step_index);
        let tmp = dir.join(format!(".{}.ckpt.tmp", cp.step_index));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn load_latest(&self, run_id: &str) -> Result<Checkpoint, CheckpointError> {
        check_run_id(run_id)?;
        let dir = self.run_dir(run_id);
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CheckpointError::NotFound(run_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut latest: Option<u64> = None;
        for entry in entries {
            let name = entry?.file_name();
            let Some(step) = name
                .to_str()
                .and_then(|n| n.strip_suffix(".ckpt"))
                .and_then(|n| n.parse::<u64>().ok())
            else {
                continue;
            };
            latest = Some(latest.map_or(step, |l| l.max(step)));
        }
        match latest {
            Some(step) => self.load_at(run_id, step),
            None => Err(CheckpointError::NotFound(run_id.to_string())),
        }
    }

    fn load_at(&self, run_id: &str, step_index: u64) -> Result<Checkpoint, CheckpointError> {
        check_run_id(run_id)?;
        let path = self.path_for(run_id, step_index);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CheckpointError::NotFound(run_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        decode_checkpoint(&bytes)
    }
}

/// In-memory store holding encoded bytes; exercises the same codec as the
/// file store. Intended for tests.
#[derive(Default)]
pub struct MemoryCheckpointStore {
    inner: Mutex<BTreeMap<(String, u64), Vec<u8>>>,
}

impl MemoryCheckpointStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Step indices stored for `run_id`, ascending.
    pub fn step_indices(&self, run_id: &str) -> Vec<u64> {
        self.inner
            .lock()
            .expect("store poisoned")
            .keys()
            .filter(|(r, _)| r == run_id)
            .map(|(_, s)| *s)
            .collect()
    }
}

impl CheckpointStore for MemoryCheckpointStore {
    fn save(&self, cp: &Checkpoint) -> Result<(), CheckpointError> {
        let bytes = encode_checkpoint(cp)?;
        self.inner
            .lock()
            .expect("store poisoned")
            .insert((cp.run_id.clone(), cp.step_index), bytes);
        Ok(())
    }

    fn load_latest(&self, run_id: &str) -> Result<Checkpoint, CheckpointError> {
        let inner = self.inner.lock().expect("store poisoned");
        let step = inner
            .keys()
            .filter(|(r, _)| r == run_id)
            .map(|(_, s)| *s)
            .max()
            .ok_or_else(|| CheckpointError::NotFound(run_id.to_string()))?;
        decode_checkpoint(&inner[&(run_id.to_string(), step)])
    }

    fn load_at(&self, run_id: &str, step_index: u64) -> Result<Checkpoint, CheckpointError> {
        let inner = self.inner.lock().expect("store poisoned");
        let bytes = inner
            .get(&(run_id.to_string(), step_index))
            .ok_or_else(|| CheckpointError::NotFound(run_id.to_string()))?;
        decode_checkpoint(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ChannelValue;

    fn sample(step: u64) -> Checkpoint {
        Checkpoint {
            run_id: "run-1".to_string(),
            step_index: step,
            current_node: "compose".to_string(),
            state: GraphState::new().with("draft", ChannelValue::text("hello")),
            graph_fingerprint: "f".repeat(64),
        }
    }

    #[test]
    fn save_then_load_is_deep_equal() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileCheckpointStore::new(dir.path());
        let cp = sample(3);
        store.save(&cp).unwrap();
        assert_eq!(store.load_latest("run-1").unwrap(), cp);
        assert_eq!(store.load_at("run-1", 3).unwrap(), cp);
    }

    #[test]
    fn load_unknown_run_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileCheckpointStore::new(dir.path());
        assert!(matches!(
            store.load_latest("ghost"),
            Err(CheckpointError::NotFound(_))
        ));
    }

    #[test]
    fn latest_picks_highest_step_index() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileCheckpointStore::new(dir.path());
        store.save(&sample(1)).unwrap();
        store.save(&sample(10)).unwrap();
        store.save(&sample(2)).unwrap();
        assert_eq!(store.load_latest("run-1").unwrap().step_index, 10);
    }

    #[test]
    fn every_flipped_payload_byte_is_detected() {
        let cp = sample(1);
        let bytes = encode_checkpoint(&cp).unwrap();
        let header_end = bytes.iter().position(|b| *b == b'\n').unwrap();
        for i in header_end + 1..bytes.len() - 1 {
            let mut tampered = bytes.clone();
            tampered[i] ^= 0x01;
            assert!(
                decode_checkpoint(&tampered).is_err(),
                "flip at byte {i} went undetected"
            );
        }
    }

    #[test]
    fn tampered_file_is_corrupt_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileCheckpointStore::new(dir.path());
        store.save(&sample(1)).unwrap();
        let path = dir.path().join("run-1").join("1.ckpt");
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            store.load_at("run-1", 1),
            Err(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let cp = sample(1);
        let bytes = encode_checkpoint(&cp).unwrap();
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() / 2]),
            Err(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn unsafe_run_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileCheckpointStore::new(dir.path());
        let mut cp = sample(1);
        cp.run_id = "../escape".to_string();
        assert!(matches!(
            store.save(&cp),
            Err(CheckpointError::InvalidRunId(_))
        ));
    }

    #[test]
    fn memory_store_round_trips() {
        let store = MemoryCheckpointStore::new();
        store.save(&sample(1)).unwrap();
        store.save(&sample(2)).unwrap();
        assert_eq!(store.load_latest("run-1").unwrap().step_index, 2);
        assert_eq!(store.step_indices("run-1"), vec![1, 2]);
    }
}
