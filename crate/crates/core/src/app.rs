//! The replicated application used by all protocol variants: a deterministic
//! key-value store, so responses and state digests are checkable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::messages::RequestMsg;

/// Deterministic key-value state machine. Operations are UTF-8 text:
/// `put <key> <value>` and `get <key>`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvStore {
    entries: BTreeMap<String, String>,
}

impl KvStore {
    pub fn new() -> KvStore {
        KvStore::default()
    }

    pub fn apply(&mut self, op: &[u8]) -> Vec<u8> {
        let text = String::from_utf8_lossy(op);
        let mut parts = text.split_whitespace();
        match parts.next() {
            Some("put") => {
                let key = parts.next().unwrap_or_default().to_string();
                let value = parts.next().unwrap_or_default().to_string();
                self.entries.insert(key, value);
                b"ok".to_vec()
            }
            Some("get") => {
                let key = parts.next().unwrap_or_default();
                self.entries.get(key).cloned().unwrap_or_default().into_bytes()
            }
            _ => b"err".to_vec(),
        }
    }

    pub fn digest(&self) -> Digest {
        let bytes = bincode::serialize(&self.entries).expect("kv serializes");
        Digest::of_parts("kv-state", &[&bytes])
    }
}

/// One executed request in a replica's history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub view: u64,
    pub counter: u64,
    pub request: RequestMsg,
    pub response: Vec<u8>,
    /// Running history digest after appending this entry.
    pub digest_after: Digest,
}

pub fn chain_digest(prev: &Digest, view: u64, counter: u64, request_digest: &Digest) -> Digest {
    Digest::of_parts(
        "history",
        &[&prev.0, &view.to_le_bytes(), &counter.to_le_bytes(), &request_digest.0],
    )
}

/// A full restorable state: application state plus executed history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub kv: KvStore,
    pub history: Vec<HistoryEntry>,
    pub history_digest: Digest,
}

impl Snapshot {
    pub fn genesis() -> Snapshot {
        Snapshot { kv: KvStore::new(), history: Vec::new(), history_digest: Digest::zero() }
    }

    /// The digest committed to by checkpoint messages.
    pub fn state_digest(&self) -> Digest {
        Digest::of_parts("snapshot", &[&self.kv.digest().0, &self.history_digest.0])
    }
}
