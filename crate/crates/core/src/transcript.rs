//! Run transcripts: every message, timer, and protocol-level state
//! transition of a simulation, exportable as line-delimited records.

use serde::{Deserialize, Serialize};

use crate::config::{ClientId, CounterValue, Genesis, ReplicaId, RequestId, ViewId};
use crate::crypto::{Digest, PublicKey};
use crate::messages::Message;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Replica(ReplicaId),
    Client(ClientId),
}

/// Timers owned by node state machines; setting a kind again re-arms it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimerKind {
    FillHole { view: ViewId, index: CounterValue },
    Forwarded { client: ClientId, request_id: RequestId },
    ViewChangeDeadline { view: ViewId },
    ClientDeadline { request_id: RequestId },
}

/// One executed slot, enough to reconstruct and compare histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub view: ViewId,
    pub counter: CounterValue,
    pub client: ClientId,
    pub request_id: RequestId,
    pub request_digest: Digest,
    pub digest_after: Digest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Send { from: NodeId, to: NodeId, message: Message },
    Deliver { from: NodeId, to: NodeId, message: Message },
    Dropped { from: NodeId, to: NodeId, kind: String },
    TimerSet { node: NodeId, kind: TimerKind, at: u64 },
    TimerFired { node: NodeId, kind: TimerKind },
    NodeCrashed { node: NodeId },
    TmcCrashed { replica: ReplicaId },
    Executed {
        replica: ReplicaId,
        view: ViewId,
        counter: CounterValue,
        client: ClientId,
        request_id: RequestId,
        history_digest: Digest,
    },
    CertIssued {
        replica: ReplicaId,
        counter_pk: PublicKey,
        counter_value: CounterValue,
        message_digest: Digest,
    },
    ViewChangeStarted { replica: ReplicaId, new_view: ViewId },
    ViewInstalled {
        replica: ReplicaId,
        view: ViewId,
        counter_pk: PublicKey,
        history: Vec<HistoryPoint>,
        history_digest: Digest,
    },
    RolledBack { replica: ReplicaId, view: ViewId, dropped: u64 },
    CheckpointStable {
        replica: ReplicaId,
        view: ViewId,
        last_request: CounterValue,
        state_digest: Digest,
    },
    StateAdopted {
        replica: ReplicaId,
        view: ViewId,
        last_request: CounterValue,
        history: Vec<HistoryPoint>,
    },
    FallbackStarted { client: ClientId, request_id: RequestId },
    RequestCompleted {
        client: ClientId,
        request_id: RequestId,
        view: ViewId,
        history_digest: Digest,
        repliers: Vec<ReplicaId>,
        fallback: bool,
        latency: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: u64,
    pub event: Event,
}

/// Run-level facts the invariant checker needs beyond the event stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub f: u32,
    pub n: u32,
    /// The protocol's completion threshold (never the test override, so the
    /// checker can flag sub-quorum completions).
    pub completion_threshold: u32,
    /// Replicas that are correct for the whole run (not crashed, slow-only
    /// counts as correct).
    pub correct_replicas: Vec<ReplicaId>,
    pub byzantine_replicas: Vec<ReplicaId>,
    pub correct_clients: Vec<ClientId>,
    pub requests_per_client: u32,
    /// Public keys and parameters, for signature re-verification.
    pub genesis: Option<Genesis>,
    /// Check that every correct client's request completed (set for runs
    /// with a post-synchronization quiet period long enough to finish).
    pub expect_all_complete: bool,
    pub gst: u64,
    pub delay_bound: u64,
    pub time_bound: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub meta: TranscriptMeta,
    pub records: Vec<Record>,
}

impl Transcript {
    /// Line-delimited export: one serialized record per line, preceded by a
    /// meta line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.meta).expect("meta serializes"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Transcript, serde_json::Error> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let meta = match lines.next() {
            Some(first) => serde_json::from_str(first)?,
            None => TranscriptMeta::default(),
        };
        let records = lines.map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Transcript { meta, records })
    }
}
