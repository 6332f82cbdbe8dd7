//! The client state machine: sequential request submission, the
//! matching-reply completion rule, timeout broadcast, and the baseline
//! commit-certificate fallback.

use std::collections::BTreeMap;

use crate::baselines::CommitCertificate;
use crate::config::{ClientId, Genesis, ReplicaId, RequestId, ViewId};
use crate::crypto::{Digest, KeyPair};
use crate::messages::{CommitMsg, LocalCommitMsg, Message, ReplyMsg, RequestMsg};
use crate::replica::Actions;
use crate::transcript::{Event, NodeId, TimerKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub request_id: RequestId,
    pub view: ViewId,
    pub history_digest: Digest,
    pub repliers: Vec<ReplicaId>,
    pub fallback: bool,
    pub latency: u64,
}

enum PendingPhase {
    Speculative,
    /// Commit certificate broadcast; counting consistent acknowledgements.
    Fallback {
        order_request_digest: Digest,
        history_digest: Digest,
        view: ViewId,
        acks: BTreeMap<ReplicaId, LocalCommitMsg>,
    },
}

struct Pending {
    request: RequestMsg,
    submitted_at: u64,
    replies: BTreeMap<ReplicaId, ReplyMsg>,
    phase: PendingPhase,
}

pub struct Client {
    pub id: ClientId,
    genesis: Genesis,
    key: KeyPair,
    next_request_id: RequestId,
    /// Highest view seen in any valid reply; requests target its primary.
    believed_view: ViewId,
    t_client: u64,
    /// Current retry interval; doubles per timeout, resets per request.
    interval: u64,
    workload: Vec<Vec<u8>>,
    next_op: usize,
    pending: Option<Pending>,
    pub completions: Vec<Completion>,
    /// Matching replies needed to complete; normally the variant threshold.
    completion_threshold: usize,
    fallback_threshold: usize,
}

impl Client {
    pub fn new(
        id: ClientId,
        genesis: Genesis,
        key: KeyPair,
        t_client: u64,
        workload: Vec<Vec<u8>>,
        completion_threshold_override: Option<usize>,
    ) -> Client {
        let completion_threshold =
            completion_threshold_override.unwrap_or_else(|| genesis.completion_threshold());
        let fallback_threshold = genesis.large_quorum();
        Client {
            id,
            genesis,
            key,
            next_request_id: 0,
            believed_view: 0,
            t_client,
            interval: t_client,
            workload,
            next_op: 0,
            pending: None,
            completions: Vec::new(),
            completion_threshold,
            fallback_threshold,
        }
    }

    pub fn done(&self) -> bool {
        self.pending.is_none() && self.next_op >= self.workload.len()
    }

    /// Submit the next workload operation, if any.
    pub fn start(&mut self, now: u64) -> Actions {
        let mut actions = Actions::default();
        self.submit_next(now, &mut actions);
        actions
    }

    fn submit_next(&mut self, now: u64, actions: &mut Actions) {
        let Some(op) = self.workload.get(self.next_op).cloned() else { return };
        self.next_op += 1;
        self.next_request_id += 1;
        let request = RequestMsg::new(op, self.id, self.next_request_id, &self.key);
        let primary = self.genesis.primary_of(self.believed_view);
        actions.send(NodeId::Replica(primary), Message::Request(request.clone()));
        self.interval = self.t_client;
        actions.timer_sets.push((
            TimerKind::ClientDeadline { request_id: self.next_request_id },
            self.interval,
        ));
        self.pending = Some(Pending {
            request,
            submitted_at: now,
            replies: BTreeMap::new(),
            phase: PendingPhase::Speculative,
        });
    }

    pub fn handle(&mut self, now: u64, msg: Message) -> Actions {
        let mut actions = Actions::default();
        match msg {
            Message::Reply(m) => self.on_reply(now, m, &mut actions),
            Message::LocalCommit(m) => self.on_local_commit(now, m, &mut actions),
            _ => {}
        }
        actions
    }

    fn on_reply(&mut self, now: u64, m: ReplyMsg, actions: &mut Actions) {
        if m.validate(&self.genesis).is_err() {
            return;
        }
        if m.order_request.view > self.believed_view {
            self.believed_view = m.order_request.view;
        }
        let Some(pending) = self.pending.as_mut() else { return };
        if m.order_request.request.client != self.id
            || m.order_request.request.request_id != pending.request.request_id
        {
            return;
        }
        if !matches!(pending.phase, PendingPhase::Speculative) {
            return;
        }
        pending.replies.insert(m.replica, m);
        // Replies are progress: give the protocol another full interval.
        actions.timer_sets.push((
            TimerKind::ClientDeadline { request_id: pending.request.request_id },
            self.interval,
        ));
        self.try_complete(now, actions);
    }

    /// Largest group of replies matching on (view, order-request, response,
    /// history digest).
    fn best_group(pending: &Pending) -> Option<Vec<&ReplyMsg>> {
        let mut groups: BTreeMap<(u64, Digest, Vec<u8>, Digest), Vec<&ReplyMsg>> = BTreeMap::new();
        for r in pending.replies.values() {
            groups.entry(CommitCertificate::matching_key(r)).or_default().push(r);
        }
        groups.into_values().max_by_key(|g| g.len())
    }

    fn try_complete(&mut self, now: u64, actions: &mut Actions) {
        let Some(pending) = self.pending.as_ref() else { return };
        let Some(group) = Self::best_group(pending) else { return };
        if group.len() < self.completion_threshold {
            return;
        }
        let sample = group[0];
        let completion = Completion {
            request_id: pending.request.request_id,
            view: sample.order_request.view,
            history_digest: sample.history_digest,
            repliers: group.iter().map(|r| r.replica).collect(),
            fallback: false,
            latency: now - pending.submitted_at,
        };
        self.finish(now, completion, actions);
    }

    fn finish(&mut self, now: u64, completion: Completion, actions: &mut Actions) {
        actions.timer_cancels.push(TimerKind::ClientDeadline { request_id: completion.request_id });
        actions.events.push(Event::RequestCompleted {
            client: self.id,
            request_id: completion.request_id,
            view: completion.view,
            history_digest: completion.history_digest,
            repliers: completion.repliers.clone(),
            fallback: completion.fallback,
            latency: completion.latency,
        });
        if completion.view > self.believed_view {
            self.believed_view = completion.view;
        }
        self.completions.push(completion);
        self.pending = None;
        self.submit_next(now, actions);
    }

    fn on_local_commit(&mut self, now: u64, m: LocalCommitMsg, actions: &mut Actions) {
        if m.validate(&self.genesis).is_err() {
            return;
        }
        let Some(pending) = self.pending.as_mut() else { return };
        if m.client != self.id || m.request_id != pending.request.request_id {
            return;
        }
        let PendingPhase::Fallback { order_request_digest, history_digest, view, acks } =
            &mut pending.phase
        else {
            return;
        };
        if m.order_request_digest != *order_request_digest {
            return;
        }
        acks.insert(m.replica, m);
        if acks.len() >= self.fallback_threshold {
            let completion = Completion {
                request_id: pending.request.request_id,
                view: *view,
                history_digest: *history_digest,
                repliers: acks.keys().copied().collect(),
                fallback: true,
                latency: now - pending.submitted_at,
            };
            self.finish(now, completion, actions);
        }
    }

    pub fn on_timer(&mut self, _now: u64, kind: TimerKind) -> Actions {
        let mut actions = Actions::default();
        let TimerKind::ClientDeadline { request_id } = kind else { return actions };
        let Some(pending) = self.pending.as_mut() else { return actions };
        if pending.request.request_id != request_id {
            return actions;
        }
        self.interval *= 2;
        match &pending.phase {
            PendingPhase::Fallback { .. } => {
                // Re-broadcast the commit certificate and keep waiting.
                let group = Self::best_group(pending).expect("fallback implies replies");
                let certificate =
                    CommitCertificate { replies: group.into_iter().cloned().collect() };
                let msg = Message::Commit(CommitMsg {
                    client: self.id,
                    request_id,
                    certificate,
                });
                for r in 0..self.genesis.n {
                    actions.send(NodeId::Replica(r), msg.clone());
                }
            }
            PendingPhase::Speculative => {
                let group = Self::best_group(pending);
                let group_len = group.as_ref().map_or(0, |g| g.len());
                if self.genesis.variant.has_fallback() && group_len >= self.fallback_threshold {
                    // Zyzzyva: enough matching replies to commit the slower,
                    // non-speculative way.
                    let group: Vec<ReplyMsg> = group
                        .unwrap()
                        .into_iter()
                        .take(self.fallback_threshold)
                        .cloned()
                        .collect();
                    let sample = &group[0];
                    pending.phase = PendingPhase::Fallback {
                        order_request_digest: sample.order_request.digest(),
                        history_digest: sample.history_digest,
                        view: sample.order_request.view,
                        acks: BTreeMap::new(),
                    };
                    actions.events.push(Event::FallbackStarted {
                        client: self.id,
                        request_id,
                    });
                    let msg = Message::Commit(CommitMsg {
                        client: self.id,
                        request_id,
                        certificate: CommitCertificate { replies: group },
                    });
                    for r in 0..self.genesis.n {
                        actions.send(NodeId::Replica(r), msg.clone());
                    }
                } else {
                    // C-2b: broadcast the request to every replica.
                    for r in 0..self.genesis.n {
                        actions.send(NodeId::Replica(r), Message::Request(pending.request.clone()));
                    }
                }
            }
        }
        actions.timer_sets.push((TimerKind::ClientDeadline { request_id }, self.interval));
        actions
    }
}
