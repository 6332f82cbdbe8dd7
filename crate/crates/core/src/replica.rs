//! The replica state machine: request ordering at the primary, speculative
//! execution, hole-filling, view changes, and checkpointing, shared by all
//! protocol variants.
//!
//! Each replica is a single-threaded deterministic state machine: an event
//! (message delivery or timer expiry) maps the state to emitted messages,
//! timer operations, and transcript events. All interaction flows through
//! the returned [`Actions`].

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::app::{chain_digest, HistoryEntry, Snapshot};
use crate::config::{ClientId, CounterValue, Genesis, ReplicaId, RequestId, ViewId};
use crate::crypto::{Digest, KeyPair, PublicKey};
use crate::messages::{
    BaseCertificate, CheckpointCertificate, CheckpointMsg, CommitMsg, FillHoleMsg,
    LocalCommitMsg, Message, NewViewArchiveMsg, NewViewFetchMsg, NewViewMsg, OrderRequestMsg,
    ReplyMsg, ReqViewChangeMsg, RequestMsg, StateFetchMsg, StateOfferMsg, ViewAuthority,
    ViewCertificate, ViewChangeMsg, ViewConfirmMsg,
};
use crate::tmc::{software_certificate, CounterInstance, Tmc};
use crate::transcript::{Event, HistoryPoint, NodeId, TimerKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Active,
    ViewChanging,
}

/// Everything a state-machine step emits.
#[derive(Debug, Default)]
pub struct Actions {
    pub sends: Vec<(NodeId, Message)>,
    pub timer_sets: Vec<(TimerKind, u64)>,
    pub timer_cancels: Vec<TimerKind>,
    pub events: Vec<Event>,
}

impl Actions {
    pub fn send(&mut self, to: NodeId, msg: Message) {
        self.sends.push((to, msg));
    }
}

/// What an install attempt is still missing.
enum Missing {
    NewView(ViewId),
    Snapshot(ViewId, CounterValue),
}

pub struct Replica {
    pub id: ReplicaId,
    pub genesis: Genesis,
    key: KeyPair,
    tmc: Tmc,
    rng: ChaCha12Rng,

    pub current_view: ViewId,
    pub phase: Phase,
    pub counter_pk: PublicKey,
    /// Active counter instance while primary (trusted-counter variants).
    counter: Option<CounterInstance>,
    /// Instances created at new-view proposal time, activated on install.
    prepared: BTreeMap<ViewId, CounterInstance>,
    /// Next sequence number while primary (software-ordering variants).
    next_counter: CounterValue,

    pub snapshot: Snapshot,
    /// Highest consecutively executed counter value of the current view.
    pub last_executed: CounterValue,
    /// All order-requests seen, by (view, counter); garbage-collected below
    /// the stable checkpoint.
    order_log: BTreeMap<(ViewId, CounterValue), OrderRequestMsg>,
    /// Valid current-view order-requests waiting on earlier holes.
    pending_orders: BTreeMap<CounterValue, OrderRequestMsg>,
    /// Per-client highest seen request id and the reply we sent for it.
    client_cache: BTreeMap<ClientId, (RequestId, Option<ReplyMsg>)>,
    /// Highest request id ordered per client (primary only; guards against
    /// double-ordering before self-delivery executes).
    ordered_ids: BTreeMap<ClientId, RequestId>,
    /// Order-requests we issued as primary, kept for re-broadcast when a
    /// duplicate request signals the first broadcast was lost.
    issued_orders: BTreeMap<(ClientId, RequestId), OrderRequestMsg>,
    /// Requests forwarded to the primary, awaiting an order-request.
    forwarded: BTreeMap<(ClientId, RequestId), RequestMsg>,

    pub timeout: u64,
    accusations: BTreeMap<ViewId, BTreeMap<ReplicaId, ReqViewChangeMsg>>,
    /// Views we ourselves accused.
    accused: BTreeSet<ViewId>,
    /// Views we have left via a view-change.
    vc_entered: BTreeSet<ViewId>,
    view_changes: BTreeMap<ViewId, BTreeMap<ReplicaId, ViewChangeMsg>>,
    sent_new_view: BTreeSet<ViewId>,
    /// All valid new-view proposals seen, by view and digest.
    known_new_views: BTreeMap<ViewId, BTreeMap<Digest, NewViewMsg>>,
    /// Views whose first new-view proposal we already confirmed.
    confirmed_views: BTreeSet<ViewId>,
    confirms: BTreeMap<(ViewId, Digest), BTreeMap<ReplicaId, ViewConfirmMsg>>,
    new_view_fetches_sent: BTreeSet<ViewId>,
    /// Install blocked on missing data: (view, digest of its new-view).
    pending_install: Option<(ViewId, Digest)>,

    pub last_installed: ViewId,
    /// Starting snapshot and counter key of every view we installed.
    view_start: BTreeMap<ViewId, (Snapshot, PublicKey)>,
    installed_authority: BTreeMap<ViewId, ViewAuthority>,
    /// Certified new-view proposals of installed views, served to laggards.
    archives: BTreeMap<ViewId, NewViewArchiveMsg>,

    checkpoint_votes: BTreeMap<(ViewId, CounterValue, Digest), BTreeMap<ReplicaId, CheckpointMsg>>,
    pub stable_checkpoint: Option<CheckpointCertificate>,
    checkpoint_snapshots: BTreeMap<(ViewId, CounterValue), Snapshot>,
    checkpoint_certs: BTreeMap<(ViewId, CounterValue), CheckpointCertificate>,
}

impl Replica {
    pub fn new(
        id: ReplicaId,
        genesis: Genesis,
        key: KeyPair,
        tmc: Tmc,
        view0_instance: Option<CounterInstance>,
        timeout: u64,
        rng_seed: u64,
    ) -> Replica {
        let mut view_start = BTreeMap::new();
        view_start.insert(0, (Snapshot::genesis(), genesis.view0_counter_pk));
        let mut installed_authority = BTreeMap::new();
        installed_authority.insert(0, ViewAuthority::Genesis);
        let counter_pk = genesis.view0_counter_pk;
        Replica {
            id,
            genesis,
            key,
            tmc,
            rng: ChaCha12Rng::seed_from_u64(rng_seed),
            current_view: 0,
            phase: Phase::Active,
            counter_pk,
            counter: view0_instance,
            prepared: BTreeMap::new(),
            next_counter: 0,
            snapshot: Snapshot::genesis(),
            last_executed: 0,
            order_log: BTreeMap::new(),
            pending_orders: BTreeMap::new(),
            client_cache: BTreeMap::new(),
            ordered_ids: BTreeMap::new(),
            issued_orders: BTreeMap::new(),
            forwarded: BTreeMap::new(),
            timeout,
            accusations: BTreeMap::new(),
            accused: BTreeSet::new(),
            vc_entered: BTreeSet::new(),
            view_changes: BTreeMap::new(),
            sent_new_view: BTreeSet::new(),
            known_new_views: BTreeMap::new(),
            confirmed_views: BTreeSet::new(),
            confirms: BTreeMap::new(),
            new_view_fetches_sent: BTreeSet::new(),
            pending_install: None,
            last_installed: 0,
            view_start,
            installed_authority,
            archives: BTreeMap::new(),
            checkpoint_votes: BTreeMap::new(),
            stable_checkpoint: None,
            checkpoint_snapshots: BTreeMap::new(),
            checkpoint_certs: BTreeMap::new(),
        }
    }

    pub fn is_primary(&self) -> bool {
        self.genesis.primary_of(self.current_view) == self.id
    }

    pub fn crash_tmc(&mut self) {
        self.tmc.crash();
        if let Some(c) = self.counter.as_mut() {
            c.crash();
        }
        for c in self.prepared.values_mut() {
            c.crash();
        }
    }

    /// Adversarial misuse of a held counter: consume a value without
    /// binding it to any real request. Models Byzantine-partial behavior;
    /// the instance secret itself stays out of reach.
    pub fn adversary_burn_counter(&mut self) -> bool {
        match self.counter.as_mut() {
            Some(c) => c.increment(Digest::of(b"burned")).is_ok(),
            None => false,
        }
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.snapshot.history
    }

    pub fn history_digest(&self) -> Digest {
        self.snapshot.history_digest
    }

    pub fn order_log_len(&self) -> usize {
        self.order_log.len()
    }

    pub fn has_order(&self, view: ViewId, counter: CounterValue) -> bool {
        self.order_log.contains_key(&(view, counter))
    }

    pub fn earliest_buffered_order(&self) -> Option<(ViewId, CounterValue)> {
        self.order_log.keys().next().copied()
    }

    fn broadcast(&self, actions: &mut Actions, msg: Message) {
        for r in 0..self.genesis.n {
            actions.send(NodeId::Replica(r), msg.clone());
        }
    }

    pub fn handle(&mut self, from: NodeId, msg: Message) -> Actions {
        let mut actions = Actions::default();
        match msg {
            Message::Request(m) => self.on_request(from, m, &mut actions),
            Message::OrderRequest(m) => self.on_order_request(m, &mut actions),
            Message::Reply(_) => {} // client-bound; ignore if misdelivered
            Message::FillHole(m) => self.on_fill_hole(from, m, &mut actions),
            Message::ReqViewChange(m) => self.on_req_view_change(m, &mut actions),
            Message::ViewChange(m) => self.on_view_change(m, &mut actions),
            Message::NewView(m) => self.on_new_view(m, &mut actions),
            Message::ViewConfirm(m) => self.on_view_confirm(m, &mut actions),
            Message::Checkpoint(m) => self.on_checkpoint(m, &mut actions),
            Message::Commit(m) => self.on_commit(m, &mut actions),
            Message::LocalCommit(_) => {} // client-bound
            Message::NewViewFetch(m) => self.on_new_view_fetch(from, m, &mut actions),
            Message::NewViewArchive(m) => self.on_new_view_archive(m, &mut actions),
            Message::StateFetch(m) => self.on_state_fetch(from, m, &mut actions),
            Message::StateOffer(m) => self.on_state_offer(m, &mut actions),
        }
        actions
    }

    pub fn on_timer(&mut self, kind: TimerKind) -> Actions {
        let mut actions = Actions::default();
        match kind {
            TimerKind::FillHole { view, index } => {
                if view == self.current_view
                    && self.phase == Phase::Active
                    && index > self.last_executed
                    && !self.pending_orders.contains_key(&index)
                    && !self.order_log.contains_key(&(view, index))
                {
                    self.accuse(self.current_view, &mut actions);
                }
            }
            TimerKind::Forwarded { client, request_id } => {
                if self.phase == Phase::Active {
                    if let Some(m) = self.forwarded.remove(&(client, request_id)) {
                        self.accuse(self.current_view, &mut actions);
                        self.broadcast(&mut actions, Message::Request(m));
                    }
                }
            }
            TimerKind::ViewChangeDeadline { view } => {
                if self.current_view == view && self.last_installed < view {
                    // The change to `view` stalled: accuse it to move on.
                    self.accuse(view, &mut actions);
                }
            }
            TimerKind::ClientDeadline { .. } => {}
        }
        actions
    }

    // ---- request ordering and execution -------------------------------

    fn on_request(&mut self, from: NodeId, m: RequestMsg, actions: &mut Actions) {
        if self.phase != Phase::Active || m.validate(&self.genesis).is_err() {
            return;
        }
        let cached = self.client_cache.get(&m.client).cloned();
        if let Some((id, reply)) = &cached {
            if m.request_id < *id {
                return;
            }
            if m.request_id == *id {
                if let Some(r) = reply {
                    actions.send(NodeId::Client(m.client), Message::Reply(r.clone()));
                }
                return;
            }
        }
        if self.is_primary() {
            self.order(m, actions);
        } else {
            // Step R-3: forward to the primary, answer directly if we
            // already hold the order-request, and watch the primary.
            if let Some(order) = self.find_order(&m) {
                match from {
                    NodeId::Replica(_) => actions.send(from, Message::OrderRequest(order)),
                    NodeId::Client(c) => {
                        if let Some((_, Some(r))) = &cached {
                            actions.send(NodeId::Client(c), Message::Reply(r.clone()));
                        }
                    }
                }
                return;
            }
            let primary = self.genesis.primary_of(self.current_view);
            let key = (m.client, m.request_id);
            actions.send(NodeId::Replica(primary), Message::Request(m.clone()));
            self.forwarded.insert(key, m);
            actions.timer_sets.push((
                TimerKind::Forwarded { client: key.0, request_id: key.1 },
                self.timeout,
            ));
        }
    }

    fn find_order(&self, m: &RequestMsg) -> Option<OrderRequestMsg> {
        let digest = m.digest();
        self.order_log
            .range((self.current_view, 0)..=(self.current_view, u64::MAX))
            .find(|(_, o)| o.request.digest() == digest)
            .map(|(_, o)| o.clone())
    }

    /// Step R-1: bind the request to the next counter value and broadcast.
    fn order(&mut self, m: RequestMsg, actions: &mut Actions) {
        if let Some(id) = self.ordered_ids.get(&m.client) {
            if m.request_id < *id {
                return;
            }
            if m.request_id == *id {
                // Already bound; the broadcast may have been lost before
                // reaching everyone (or our own execution path), so repeat it.
                if let Some(o) = self.issued_orders.get(&(m.client, m.request_id)).cloned() {
                    self.broadcast(actions, Message::OrderRequest(o));
                }
                return;
            }
        }
        let digest = m.digest();
        let cert = if self.genesis.variant.uses_tmc() {
            let Some(counter) = self.counter.as_mut() else { return };
            match counter.increment(digest) {
                Ok(c) => c,
                Err(_) => return, // crashed counter: stay silent, let timeouts act
            }
        } else {
            self.next_counter += 1;
            software_certificate(&self.key, self.next_counter, digest)
        };
        actions.events.push(Event::CertIssued {
            replica: self.id,
            counter_pk: self.counter_pk,
            counter_value: cert.counter_value,
            message_digest: cert.message_digest,
        });
        self.ordered_ids.insert(m.client, m.request_id);
        let key = (m.client, m.request_id);
        let order = OrderRequestMsg::new(self.current_view, cert, m, &self.key);
        self.issued_orders.insert(key, order.clone());
        self.broadcast(actions, Message::OrderRequest(order));
    }

    /// Step R-2: execute in counter order, fill holes otherwise.
    fn on_order_request(&mut self, m: OrderRequestMsg, actions: &mut Actions) {
        if self.phase != Phase::Active
            || m.validate(&self.genesis, self.current_view, &self.counter_pk).is_err()
        {
            return;
        }
        let c = m.counter();
        let window_base = match &self.stable_checkpoint {
            Some(cp) if cp.view == self.current_view => cp.last_request,
            _ => 0,
        };
        if c > window_base + self.genesis.checkpoint_interval * self.genesis.window_factor {
            return;
        }
        self.forwarded.remove(&(m.request.client, m.request.request_id));
        actions
            .timer_cancels
            .push(TimerKind::Forwarded { client: m.request.client, request_id: m.request.request_id });
        if self.order_log.contains_key(&(m.view, c)) {
            return; // duplicate
        }
        self.order_log.insert((m.view, c), m.clone());
        if c <= self.last_executed {
            return;
        }
        if c == self.last_executed + 1 {
            self.execute(m, actions);
            while let Some(next) = self.pending_orders.remove(&(self.last_executed + 1)) {
                self.execute(next, actions);
            }
        } else {
            for i in self.last_executed + 1..c {
                if !self.pending_orders.contains_key(&i)
                    && !self.order_log.contains_key(&(self.current_view, i))
                {
                    let primary = self.genesis.primary_of(self.current_view);
                    actions.send(
                        NodeId::Replica(primary),
                        Message::FillHole(FillHoleMsg { view: self.current_view, index: i }),
                    );
                    actions
                        .timer_sets
                        .push((TimerKind::FillHole { view: self.current_view, index: i }, self.timeout));
                }
            }
            self.pending_orders.insert(c, m);
        }
    }

    fn execute(&mut self, m: OrderRequestMsg, actions: &mut Actions) {
        let response = self.snapshot.kv.apply(&m.request.op);
        let digest_after = chain_digest(
            &self.snapshot.history_digest,
            m.view,
            m.counter(),
            &m.request.digest(),
        );
        self.snapshot.history.push(HistoryEntry {
            view: m.view,
            counter: m.counter(),
            request: m.request.clone(),
            response: response.clone(),
            digest_after,
        });
        self.snapshot.history_digest = digest_after;
        self.last_executed = m.counter();
        actions.events.push(Event::Executed {
            replica: self.id,
            view: m.view,
            counter: m.counter(),
            client: m.request.client,
            request_id: m.request.request_id,
            history_digest: digest_after,
        });
        let client = m.request.client;
        let request_id = m.request.request_id;
        let reply = ReplyMsg::new(m, response, digest_after, self.id, &self.key);
        self.client_cache.insert(client, (request_id, Some(reply.clone())));
        actions.send(NodeId::Client(client), Message::Reply(reply));
        self.maybe_checkpoint(actions);
    }

    // ---- fill holes ----------------------------------------------------

    fn on_fill_hole(&mut self, from: NodeId, m: FillHoleMsg, actions: &mut Actions) {
        if m.validate().is_err() {
            return;
        }
        if let Some(order) = self.order_log.get(&(m.view, m.index)) {
            actions.send(from, Message::OrderRequest(order.clone()));
        } else if m.view == self.current_view {
            if let Some(order) = self.pending_orders.get(&m.index) {
                actions.send(from, Message::OrderRequest(order.clone()));
            }
        }
    }

    // ---- view change ---------------------------------------------------

    fn accuse(&mut self, view: ViewId, actions: &mut Actions) {
        if !self.accused.insert(view) {
            return;
        }
        let m = ReqViewChangeMsg::new(view, self.id, &self.key);
        self.broadcast(actions, Message::ReqViewChange(m));
    }

    fn on_req_view_change(&mut self, m: ReqViewChangeMsg, actions: &mut Actions) {
        if m.validate(&self.genesis).is_err() {
            return;
        }
        self.accusations.entry(m.view).or_default().insert(m.replica, m);
        self.maybe_enter_view_change(actions);
    }

    fn maybe_enter_view_change(&mut self, actions: &mut Actions) {
        let v = self.current_view;
        if self.vc_entered.contains(&v) {
            return;
        }
        let count = self.accusations.get(&v).map_or(0, |a| a.len());
        if count < self.genesis.small_quorum() {
            return;
        }
        self.vc_entered.insert(v);
        self.phase = Phase::ViewChanging;
        self.current_view = v + 1;
        self.timeout *= 2;
        let evidence: Vec<ReqViewChangeMsg> = self.accusations[&v]
            .values()
            .take(self.genesis.small_quorum())
            .copied()
            .collect();
        let base = self.own_base();
        let executed = self.executed_since(&base);
        let vc = ViewChangeMsg::new(self.current_view, self.id, base, executed, evidence, &self.key);
        actions.events.push(Event::ViewChangeStarted { replica: self.id, new_view: self.current_view });
        self.broadcast(actions, Message::ViewChange(vc));
        actions
            .timer_sets
            .push((TimerKind::ViewChangeDeadline { view: self.current_view }, self.timeout));
    }

    /// Our most recent provable state point.
    fn own_base(&self) -> BaseCertificate {
        let authority_view = self.last_installed;
        if let Some(cp) = &self.stable_checkpoint {
            if cp.view == authority_view {
                return BaseCertificate::Checkpoint(cp.clone());
            }
        }
        BaseCertificate::View(self.installed_authority[&authority_view].clone())
    }

    /// Consecutive order-requests we executed after the base point.
    fn executed_since(&self, base: &BaseCertificate) -> Vec<OrderRequestMsg> {
        let (base_view, base_counter) = base.point();
        let mut out = Vec::new();
        let mut expect = base_counter + 1;
        for e in &self.snapshot.history {
            if e.view == base_view && e.counter == expect {
                match self.order_log.get(&(base_view, e.counter)) {
                    Some(o) => out.push(o.clone()),
                    None => break,
                }
                expect += 1;
            }
        }
        out
    }

    fn on_view_change(&mut self, m: ViewChangeMsg, actions: &mut Actions) {
        if m.new_view < self.current_view || m.validate(&self.genesis).is_err() {
            return;
        }
        // Absorb the evidence: it may be our first sight of the accusations.
        for e in &m.evidence {
            self.accusations.entry(e.view).or_default().insert(e.replica, *e);
        }
        self.view_changes.entry(m.new_view).or_default().insert(m.replica, m.clone());
        self.maybe_enter_view_change(actions);

        let view = m.new_view;
        if self.genesis.primary_of(view) != self.id || self.sent_new_view.contains(&view) {
            return;
        }
        let collected = &self.view_changes[&view];
        if collected.len() < self.genesis.large_quorum() {
            return;
        }
        let vcs: Vec<ViewChangeMsg> =
            collected.values().take(self.genesis.large_quorum()).cloned().collect();
        let attestation = if self.genesis.variant.uses_tmc() {
            match self.tmc.init(&mut self.rng) {
                Ok((instance, att)) => {
                    self.prepared.insert(view, instance);
                    Some(att)
                }
                // No working trusted counter: cannot lead; the others'
                // deadlines will move past us.
                Err(_) => return,
            }
        } else {
            None
        };
        self.sent_new_view.insert(view);
        let nv = NewViewMsg::new(view, attestation, vcs, &self.key);
        self.broadcast(actions, Message::NewView(nv));
    }

    fn on_new_view(&mut self, m: NewViewMsg, actions: &mut Actions) {
        if m.view < self.current_view || m.validate(&self.genesis).is_err() {
            return;
        }
        let digest = m.digest();
        self.known_new_views.entry(m.view).or_default().insert(digest, m.clone());
        if self.confirmed_views.insert(m.view) {
            let confirm = ViewConfirmMsg::new(m.view, self.id, digest, &self.key);
            self.broadcast(actions, Message::ViewConfirm(confirm));
        }
        self.maybe_install(actions);
    }

    fn on_view_confirm(&mut self, m: ViewConfirmMsg, actions: &mut Actions) {
        if m.view <= self.last_installed || m.validate(&self.genesis).is_err() {
            return;
        }
        self.confirms.entry((m.view, m.new_view_digest)).or_default().insert(m.replica, m);
        self.maybe_install(actions);
    }

    fn maybe_install(&mut self, actions: &mut Actions) {
        // Highest view with a confirm quorum wins; lower proposals are dead.
        let quorum = self.genesis.large_quorum();
        let target = self
            .confirms
            .iter()
            .filter(|((v, _), by)| *v > self.last_installed && by.len() >= quorum)
            .map(|((v, d), _)| (*v, *d))
            .max();
        let Some((view, digest)) = target else { return };
        let known = self
            .known_new_views
            .get(&view)
            .and_then(|m| m.get(&digest))
            .cloned();
        let Some(nv) = known else {
            // Quorum formed on a proposal we never received.
            if self.new_view_fetches_sent.insert(view) {
                self.broadcast(actions, Message::NewViewFetch(NewViewFetchMsg { view }));
            }
            return;
        };
        match self.start_from_new_view(&nv) {
            Ok((snapshot, pk)) => {
                self.pending_install = None;
                self.install(view, digest, nv, snapshot, pk, actions);
            }
            Err(Missing::NewView(v)) => {
                self.pending_install = Some((view, digest));
                if self.new_view_fetches_sent.insert(v) {
                    self.broadcast(actions, Message::NewViewFetch(NewViewFetchMsg { view: v }));
                }
            }
            Err(Missing::Snapshot(v, c)) => {
                self.pending_install = Some((view, digest));
                self.broadcast(
                    actions,
                    Message::StateFetch(StateFetchMsg { view: v, last_request: c }),
                );
            }
        }
    }

    /// The starting state of the view proposed by `nv`: the state at the
    /// highest certified base point among its view-changes, extended by the
    /// longest consecutive order-request run for the base view.
    fn start_from_new_view(&self, nv: &NewViewMsg) -> Result<(Snapshot, PublicKey), Missing> {
        let (base_view, base_counter) = nv
            .view_changes
            .iter()
            .map(|vc| vc.base.point())
            .max()
            .expect("validated new-view has view-changes");
        let base_snapshot = if base_counter == 0 {
            self.resolve_view_start(base_view)?.0
        } else {
            self.checkpoint_snapshots
                .get(&(base_view, base_counter))
                .cloned()
                .ok_or(Missing::Snapshot(base_view, base_counter))?
        };
        let base_view_pk = self.view_start.get(&base_view).map(|(_, pk)| *pk);

        // Merge executed runs from every view-change; when we know the base
        // view's counter key, only certificate-valid entries count.
        let mut slots: BTreeMap<CounterValue, &OrderRequestMsg> = BTreeMap::new();
        for vc in &nv.view_changes {
            for o in &vc.executed {
                if o.view != base_view || o.counter() <= base_counter {
                    continue;
                }
                if let Some(pk) = &base_view_pk {
                    if o.validate_cert(pk).is_err() {
                        continue;
                    }
                }
                slots.entry(o.counter()).or_insert(o);
            }
        }
        let mut snapshot = base_snapshot;
        let mut next = base_counter + 1;
        while let Some(o) = slots.get(&next) {
            let response = snapshot.kv.apply(&o.request.op);
            let digest_after =
                chain_digest(&snapshot.history_digest, o.view, o.counter(), &o.request.digest());
            snapshot.history.push(HistoryEntry {
                view: o.view,
                counter: o.counter(),
                request: o.request.clone(),
                response,
                digest_after,
            });
            snapshot.history_digest = digest_after;
            next += 1;
        }
        let pk = nv.counter_pk(&self.genesis).expect("validated new-view has a counter key");
        Ok((snapshot, pk))
    }

    /// Starting state of an already-certified view, chasing archives back
    /// to genesis or a held checkpoint snapshot.
    fn resolve_view_start(&self, view: ViewId) -> Result<(Snapshot, PublicKey), Missing> {
        if let Some((snap, pk)) = self.view_start.get(&view) {
            return Ok((snap.clone(), *pk));
        }
        let archive = self.archives.get(&view).ok_or(Missing::NewView(view))?;
        self.start_from_new_view(&archive.new_view)
    }

    fn install(
        &mut self,
        view: ViewId,
        digest: Digest,
        nv: NewViewMsg,
        snapshot: Snapshot,
        pk: PublicKey,
        actions: &mut Actions,
    ) {
        // Rollback accounting: entries of ours beyond the common prefix are
        // discarded by adopting the computed state.
        let lcp = self
            .snapshot
            .history
            .iter()
            .zip(snapshot.history.iter())
            .take_while(|(a, b)| a == b)
            .count();
        let dropped = (self.snapshot.history.len() - lcp) as u64;
        if dropped > 0 {
            actions.events.push(Event::RolledBack { replica: self.id, view, dropped });
        }

        let confirms: Vec<ViewConfirmMsg> = self.confirms[&(view, digest)]
            .values()
            .take(self.genesis.large_quorum())
            .copied()
            .collect();
        let cert = ViewCertificate { view, new_view_digest: digest, confirms };

        // Adopt the certified order-requests behind the new history: after a
        // rollback our own order log may bind these slots to a discarded
        // branch, and replies and fill-hole answers must match what we now
        // hold.
        for vc in &nv.view_changes {
            for o in &vc.executed {
                let adopted = snapshot.history.iter().any(|h| {
                    h.view == o.view
                        && h.counter == o.counter()
                        && h.request.digest() == o.request.digest()
                });
                if adopted {
                    self.order_log.insert((o.view, o.counter()), o.clone());
                }
            }
        }

        self.snapshot = snapshot.clone();
        self.last_executed = 0;
        self.current_view = view;
        self.last_installed = view;
        self.phase = Phase::Active;
        self.counter_pk = pk;
        self.view_start.insert(view, (snapshot, pk));
        self.installed_authority.insert(view, ViewAuthority::Certificate(cert.clone()));
        self.archives.insert(view, NewViewArchiveMsg { new_view: nv, certificate: cert });
        self.pending_orders.clear();
        actions.timer_cancels.push(TimerKind::ViewChangeDeadline { view });

        if self.genesis.primary_of(view) == self.id {
            if self.genesis.variant.uses_tmc() {
                self.counter = self.prepared.remove(&view);
            } else {
                self.next_counter = 0;
            }
        } else {
            self.counter = None;
        }

        // Rebuild duplicate-suppression state from the adopted history.
        self.client_cache.clear();
        self.ordered_ids.clear();
        self.issued_orders.clear();
        let entries: Vec<(ClientId, RequestId, ViewId, CounterValue)> = self
            .snapshot
            .history
            .iter()
            .map(|e| (e.request.client, e.request.request_id, e.view, e.counter))
            .collect();
        for (client, request_id, ev, ec) in entries {
            let e = &self.snapshot.history[self
                .snapshot
                .history
                .iter()
                .position(|h| h.view == ev && h.counter == ec)
                .unwrap()];
            let reply = self
                .order_log
                .get(&(ev, ec))
                .filter(|o| o.request.digest() == e.request.digest())
                .map(|o| {
                    ReplyMsg::new(o.clone(), e.response.clone(), e.digest_after, self.id, &self.key)
                });
            self.client_cache.insert(client, (request_id, reply));
            self.ordered_ids.insert(client, request_id);
        }

        actions.events.push(Event::ViewInstalled {
            replica: self.id,
            view,
            counter_pk: pk,
            history: self.history_points(),
            history_digest: self.snapshot.history_digest,
        });

        // Outstanding forwarded requests move to the new primary.
        let primary = self.genesis.primary_of(view);
        let pending: Vec<RequestMsg> = self.forwarded.values().cloned().collect();
        self.forwarded.clear();
        for m in pending {
            let fresh = self
                .client_cache
                .get(&m.client)
                .map_or(true, |(id, _)| m.request_id > *id);
            if fresh {
                if primary == self.id {
                    self.order(m, actions);
                } else {
                    let key = (m.client, m.request_id);
                    actions.send(NodeId::Replica(primary), Message::Request(m.clone()));
                    self.forwarded.insert(key, m);
                    actions.timer_sets.push((
                        TimerKind::Forwarded { client: key.0, request_id: key.1 },
                        self.timeout,
                    ));
                }
            }
        }
        self.maybe_install(actions);
    }

    fn history_points(&self) -> Vec<HistoryPoint> {
        self.snapshot
            .history
            .iter()
            .map(|e| HistoryPoint {
                view: e.view,
                counter: e.counter,
                client: e.request.client,
                request_id: e.request.request_id,
                request_digest: e.request.digest(),
                digest_after: e.digest_after,
            })
            .collect()
    }

    // ---- checkpointing ---------------------------------------------------

    fn maybe_checkpoint(&mut self, actions: &mut Actions) {
        let n = self.genesis.checkpoint_interval;
        if self.phase != Phase::Active || self.last_executed == 0 || self.last_executed % n != 0 {
            return;
        }
        let point = (self.current_view, self.last_executed);
        if self.checkpoint_snapshots.contains_key(&point) {
            return;
        }
        self.checkpoint_snapshots.insert(point, self.snapshot.clone());
        let m = CheckpointMsg::new(
            self.installed_authority[&self.current_view].clone(),
            self.last_executed,
            self.snapshot.state_digest(),
            self.id,
            &self.key,
        );
        self.broadcast(actions, Message::Checkpoint(m));
    }

    fn on_checkpoint(&mut self, m: CheckpointMsg, actions: &mut Actions) {
        if m.validate(&self.genesis).is_err() {
            return;
        }
        let key = (m.view_authority.view(), m.last_request, m.state_digest);
        let votes = self.checkpoint_votes.entry(key).or_default();
        votes.insert(m.replica, m);
        if votes.len() < self.genesis.large_quorum() {
            return;
        }
        let (view, last_request, state_digest) = key;
        let stable_point = self.stable_checkpoint.as_ref().map(|c| (c.view, c.last_request));
        if stable_point >= Some((view, last_request)) {
            return;
        }
        let cert = CheckpointCertificate {
            view,
            last_request,
            state_digest,
            checkpoints: votes.values().take(self.genesis.large_quorum()).cloned().collect(),
        };
        self.checkpoint_certs.insert((view, last_request), cert.clone());
        self.stable_checkpoint = Some(cert);
        actions.events.push(Event::CheckpointStable {
            replica: self.id,
            view,
            last_request,
            state_digest,
        });
        // CP-2: everything at or below the stable point is disposable.
        self.order_log
            .retain(|(v, c), _| (*v, *c) > (view, last_request) || *v > view);
        self.issued_orders
            .retain(|_, o| (o.view, o.counter()) > (view, last_request) || o.view > view);
        self.checkpoint_snapshots
            .retain(|(v, c), _| (*v, *c) >= (view, last_request));
        self.checkpoint_certs.retain(|(v, c), _| (*v, *c) >= (view, last_request));
        // Fell behind a stable checkpoint of our own view: transfer state.
        if view == self.current_view
            && last_request > self.last_executed
            && !self.checkpoint_snapshots.contains_key(&(view, last_request))
        {
            self.broadcast(actions, Message::StateFetch(StateFetchMsg { view, last_request }));
        }
    }

    fn on_state_fetch(&mut self, from: NodeId, m: StateFetchMsg, actions: &mut Actions) {
        let point = (m.view, m.last_request);
        if let (Some(cert), Some(snapshot)) =
            (self.checkpoint_certs.get(&point), self.checkpoint_snapshots.get(&point))
        {
            actions.send(
                from,
                Message::StateOffer(StateOfferMsg {
                    certificate: cert.clone(),
                    snapshot: snapshot.clone(),
                }),
            );
        }
    }

    fn on_state_offer(&mut self, m: StateOfferMsg, actions: &mut Actions) {
        if m.certificate.validate(&self.genesis).is_err()
            || m.snapshot.state_digest() != m.certificate.state_digest
        {
            return;
        }
        let point = (m.certificate.view, m.certificate.last_request);
        self.checkpoint_snapshots.entry(point).or_insert_with(|| m.snapshot.clone());
        self.checkpoint_certs.entry(point).or_insert_with(|| m.certificate.clone());
        if self.pending_install.is_some() {
            self.maybe_install(actions);
            return;
        }
        // Jump forward over garbage-collected holes in our own view.
        if self.phase == Phase::Active
            && m.certificate.view == self.current_view
            && m.certificate.last_request > self.last_executed
        {
            self.snapshot = m.snapshot;
            self.last_executed = m.certificate.last_request;
            self.client_cache.clear();
            for e in &self.snapshot.history {
                self.client_cache.insert(e.request.client, (e.request.request_id, None));
            }
            actions.events.push(Event::StateAdopted {
                replica: self.id,
                view: m.certificate.view,
                last_request: m.certificate.last_request,
                history: self.history_points(),
            });
            let mut actions2 = Actions::default();
            while let Some(next) = self.pending_orders.remove(&(self.last_executed + 1)) {
                self.execute(next, &mut actions2);
            }
            actions.sends.append(&mut actions2.sends);
            actions.events.append(&mut actions2.events);
            actions.timer_sets.append(&mut actions2.timer_sets);
            actions.timer_cancels.append(&mut actions2.timer_cancels);
        }
    }

    fn on_new_view_fetch(&mut self, from: NodeId, m: NewViewFetchMsg, actions: &mut Actions) {
        if let Some(archive) = self.archives.get(&m.view) {
            actions.send(from, Message::NewViewArchive(archive.clone()));
        }
    }

    fn on_new_view_archive(&mut self, m: NewViewArchiveMsg, actions: &mut Actions) {
        if m.validate(&self.genesis).is_err() {
            return;
        }
        self.archives.entry(m.new_view.view).or_insert(m);
        if self.pending_install.is_some() {
            self.maybe_install(actions);
        }
    }

    // ---- baseline commit-certificate fallback ----------------------------

    fn on_commit(&mut self, m: CommitMsg, actions: &mut Actions) {
        if !m.certificate.is_well_formed(self.genesis.f)
            || m.certificate.replies.iter().any(|r| r.validate(&self.genesis).is_err())
        {
            return;
        }
        let reply = &m.certificate.replies[0];
        let order = reply.order_request.clone();
        let target_digest = reply.history_digest;
        if !self.committed_locally(&order, &target_digest) {
            // Adopt the ordering the certificate proves, then re-check.
            self.on_order_request(order.clone(), actions);
        }
        if self.committed_locally(&order, &target_digest) {
            let ack = LocalCommitMsg::new(
                order.view,
                order.digest(),
                target_digest,
                m.client,
                m.request_id,
                self.id,
                &self.key,
            );
            actions.send(NodeId::Client(m.client), Message::LocalCommit(ack));
        }
    }

    fn committed_locally(&self, order: &OrderRequestMsg, history_digest: &Digest) -> bool {
        self.snapshot
            .history
            .iter()
            .any(|e| e.view == order.view && e.counter == order.counter() && e.digest_after == *history_digest)
    }
}
