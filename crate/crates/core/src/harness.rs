//! Experiment harness: scenario config files, per-request metrics, CSV
//! reports, and the transcript invariant checker.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::baselines::ProtocolVariant;
use crate::config::{ClientId, CounterValue, Genesis, ReplicaId, RequestId, ViewId};
use crate::crypto::Digest;
use crate::messages::Message;
use crate::simnet::{ConfigError, DelayModel, Fault, Partition, Scenario, Script};
use crate::tmc::{verify_certificate, OrderingCertificate};
use crate::transcript::{Event, HistoryPoint, NodeId, Transcript};

// ---- scenario configuration files ------------------------------------

fn default_clients() -> u32 {
    1
}
fn default_requests() -> u32 {
    10
}
fn default_checkpoint_interval() -> u64 {
    10
}
fn default_timeout() -> u64 {
    50
}
fn default_time_bound() -> u64 {
    100_000
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    #[serde(default)]
    pub base: Option<u64>,
    #[serde(default)]
    pub jitter: Option<u64>,
    #[serde(default)]
    pub links: Option<Vec<(u32, u32, u64)>>,
    #[serde(default)]
    pub gst: Option<u64>,
    #[serde(default)]
    pub bound: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub replica: u32,
    /// crashed | slow | byzantine-full | byzantine-partial
    pub kind: String,
    #[serde(default)]
    pub at: Option<u64>,
    #[serde(default)]
    pub extra: Option<u64>,
    /// equivocate | drop-all | drop-selective | delay-all | stale-new-view
    /// | split-view-confirm | fuzzer
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub targets: Option<Vec<u32>>,
    #[serde(default)]
    pub script_seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub groups: Vec<Vec<u32>>,
    pub from: u64,
    pub to: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmcCrashConfig {
    pub replica: u32,
    pub at: u64,
}

/// The on-disk scenario format (TOML).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// sac-zyzzyva | zyzzyva | zyzzyva5
    pub variant: String,
    pub f: u32,
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub n_tmc: Option<u32>,
    #[serde(default = "default_clients")]
    pub clients: u32,
    #[serde(default = "default_requests")]
    pub requests_per_client: u32,
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: u64,
    #[serde(default = "default_timeout")]
    pub timeout: u64,
    /// Defaults to 4x the mean one-way delay.
    #[serde(default)]
    pub t_client: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_bound")]
    pub time_bound: u64,
    #[serde(default)]
    pub completion_threshold_override: Option<usize>,
    #[serde(default = "default_true")]
    pub expect_all_complete: bool,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default, rename = "partition")]
    pub partitions: Vec<PartitionConfig>,
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultConfig>,
    #[serde(default, rename = "tmc_crash")]
    pub tmc_crashes: Vec<TmcCrashConfig>,
}

fn parse_script(fc: &FaultConfig, default_seed: u64) -> Result<Script, ConfigError> {
    let name = fc.script.as_deref().unwrap_or("drop-all");
    Ok(match name {
        "equivocate" => Script::Equivocate,
        "drop-all" => Script::DropAll,
        "drop-selective" => Script::DropSelective {
            targets: fc.targets.clone().unwrap_or_default(),
        },
        "delay-all" => Script::DelayAll { extra: fc.extra.unwrap_or(10) },
        "stale-new-view" => Script::StaleNewView,
        "split-view-confirm" => Script::SplitViewConfirm,
        "fuzzer" => Script::Fuzzer { seed: fc.script_seed.unwrap_or(default_seed) },
        other => return Err(ConfigError::Invalid(format!("unknown script `{other}`"))),
    })
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let variant = match self.variant.as_str() {
            "sac-zyzzyva" => ProtocolVariant::SacZyzzyva,
            "zyzzyva" => ProtocolVariant::Zyzzyva,
            "zyzzyva5" => ProtocolVariant::Zyzzyva5,
            other => return Err(ConfigError::Invalid(format!("unknown variant `{other}`"))),
        };
        let defaults = DelayModel::default();
        let delay = DelayModel {
            base: self.delay.base.unwrap_or(defaults.base),
            jitter: self.delay.jitter.unwrap_or(defaults.jitter),
            links: self.delay.links.clone().unwrap_or_default(),
            gst: self.delay.gst.unwrap_or(defaults.gst),
            bound: self.delay.bound.unwrap_or(defaults.bound),
        };
        let mean_one_way = delay.base + delay.jitter / 2;
        let mut faults = BTreeMap::new();
        for fc in &self.faults {
            let fault = match fc.kind.as_str() {
                "crashed" => Fault::Crashed { at: fc.at.unwrap_or(0) },
                "slow" => Fault::Slow { extra: fc.extra.unwrap_or(10) },
                "byzantine-full" => Fault::ByzantineFull {
                    script: parse_script(fc, self.seed.wrapping_add(fc.replica as u64))?,
                },
                "byzantine-partial" => Fault::ByzantinePartial {
                    script: parse_script(fc, self.seed.wrapping_add(fc.replica as u64))?,
                },
                other => {
                    return Err(ConfigError::Invalid(format!("unknown fault kind `{other}`")))
                }
            };
            faults.insert(fc.replica, fault);
        }
        let scenario = Scenario {
            variant,
            f: self.f,
            n: self.n.unwrap_or_else(|| variant.replicas(self.f)),
            n_tmc: self
                .n_tmc
                .unwrap_or(if variant.uses_tmc() { self.f + 1 } else { 0 }),
            n_clients: self.clients,
            requests_per_client: self.requests_per_client,
            checkpoint_interval: self.checkpoint_interval,
            timeout: self.timeout,
            t_client: self.t_client.unwrap_or(4 * mean_one_way.max(1)),
            seed: self.seed,
            delay,
            partitions: self
                .partitions
                .iter()
                .map(|p| Partition { groups: p.groups.clone(), from: p.from, to: p.to })
                .collect(),
            faults,
            tmc_crashes: self.tmc_crashes.iter().map(|c| (c.replica, c.at)).collect(),
            time_bound: self.time_bound,
            completion_threshold_override: self.completion_threshold_override,
            expect_all_complete: self.expect_all_complete,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

// ---- metrics -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestMetrics {
    pub client: ClientId,
    pub request_id: RequestId,
    pub completed: bool,
    pub latency: Option<u64>,
    pub messages: u64,
    pub fallback: bool,
    pub view: Option<ViewId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub per_request: Vec<RequestMetrics>,
    pub total_messages: u64,
    pub completed: usize,
    pub fallbacks: usize,
    pub view_changes: u64,
    pub median_latency: Option<u64>,
}

/// The request a protocol message works on behalf of, if any.
fn request_tag(m: &Message) -> Option<(ClientId, RequestId)> {
    match m {
        Message::Request(r) => Some((r.client, r.request_id)),
        Message::OrderRequest(o) => Some((o.request.client, o.request.request_id)),
        Message::Reply(r) => {
            Some((r.order_request.request.client, r.order_request.request.request_id))
        }
        Message::Commit(c) => Some((c.client, c.request_id)),
        Message::LocalCommit(c) => Some((c.client, c.request_id)),
        _ => None,
    }
}

pub fn compute_metrics(t: &Transcript) -> RunMetrics {
    let mut per: BTreeMap<(ClientId, RequestId), RequestMetrics> = BTreeMap::new();
    let mut total_messages = 0u64;
    let mut installed_views: BTreeSet<(ReplicaId, ViewId)> = BTreeSet::new();
    for r in &t.records {
        match &r.event {
            Event::Send { message, .. } => {
                total_messages += 1;
                if let Some(key) = request_tag(message) {
                    per.entry(key)
                        .or_insert_with(|| RequestMetrics {
                            client: key.0,
                            request_id: key.1,
                            completed: false,
                            latency: None,
                            messages: 0,
                            fallback: false,
                            view: None,
                        })
                        .messages += 1;
                }
            }
            Event::RequestCompleted { client, request_id, view, fallback, latency, .. } => {
                let m = per.entry((*client, *request_id)).or_insert_with(|| RequestMetrics {
                    client: *client,
                    request_id: *request_id,
                    completed: false,
                    latency: None,
                    messages: 0,
                    fallback: false,
                    view: None,
                });
                m.completed = true;
                m.latency = Some(*latency);
                m.fallback = *fallback;
                m.view = Some(*view);
            }
            Event::ViewInstalled { replica, view, .. } => {
                if *view > 0 {
                    installed_views.insert((*replica, *view));
                }
            }
            _ => {}
        }
    }
    let per_request: Vec<RequestMetrics> = per.into_values().collect();
    let completed = per_request.iter().filter(|m| m.completed).count();
    let fallbacks = per_request.iter().filter(|m| m.fallback).count();
    let mut latencies: Vec<u64> = per_request.iter().filter_map(|m| m.latency).collect();
    latencies.sort_unstable();
    let median_latency = if latencies.is_empty() {
        None
    } else {
        Some(latencies[latencies.len() / 2])
    };
    let view_changes = installed_views
        .iter()
        .map(|(_, v)| *v)
        .collect::<BTreeSet<_>>()
        .len() as u64;
    RunMetrics { per_request, total_messages, completed, fallbacks, view_changes, median_latency }
}

pub const CSV_HEADER: &str =
    "scenario,record,client,request_id,completed,latency,messages,fallback,view\n";

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// One row per request plus an aggregate row. Aggregate rows reuse the
/// columns: latency = median, messages = total, fallback = count,
/// view = view-change count.
pub fn append_csv(out: &mut String, name: &str, metrics: &RunMetrics) {
    for m in &metrics.per_request {
        out.push_str(&format!(
            "{name},request,{},{},{},{},{},{},{}\n",
            m.client,
            m.request_id,
            m.completed,
            opt(&m.latency),
            m.messages,
            m.fallback,
            opt(&m.view),
        ));
    }
    out.push_str(&format!(
        "{name},aggregate,,,{},{},{},{},{}\n",
        metrics.completed,
        opt(&metrics.median_latency),
        metrics.total_messages,
        metrics.fallbacks,
        metrics.view_changes,
    ));
}

pub fn run_suite(entries: &[(String, Scenario)]) -> Result<String, ConfigError> {
    let mut out = String::from(CSV_HEADER);
    for (name, scenario) in entries {
        let transcript = crate::simnet::run(scenario)?;
        let metrics = compute_metrics(&transcript);
        append_csv(&mut out, name, &metrics);
    }
    Ok(out)
}

// ---- invariant checker -------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending record, when tied to one.
    pub index: Option<usize>,
    pub kind: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(f, "[{}] {}: {}", i, self.kind, self.detail),
            None => write!(f, "{}: {}", self.kind, self.detail),
        }
    }
}

type Slot = (ViewId, CounterValue, ClientId, RequestId, Digest);

fn slot_of(p: &HistoryPoint) -> Slot {
    (p.view, p.counter, p.client, p.request_id, p.digest_after)
}

#[derive(Default, Clone)]
struct ReplicaTrack {
    history: Vec<Slot>,
    current_view: ViewId,
    last_counter: CounterValue,
    view_changing: bool,
}

struct Checker<'a> {
    t: &'a Transcript,
    genesis: Option<&'a Genesis>,
    correct: BTreeSet<ReplicaId>,
    byzantine: BTreeSet<ReplicaId>,
    tracks: BTreeMap<ReplicaId, ReplicaTrack>,
    /// Every history digest ever produced, with its full slot sequence.
    digest_map: HashMap<Digest, Vec<Slot>>,
    /// (history, view, client, request_id) of each completion, in order.
    completions: Vec<(Vec<Slot>, ViewId, ClientId, RequestId)>,
    installs_by_view: BTreeMap<ViewId, (usize, Vec<Slot>, crate::crypto::PublicKey)>,
    counter_pks: BTreeSet<crate::crypto::PublicKey>,
    certs: HashSet<Vec<u8>>,
    cert_list: Vec<OrderingCertificate>,
    /// Authored signed units already seen in the run, for replay detection.
    seen_units: HashSet<Vec<u8>>,
    violations: Vec<Violation>,
}

/// Evaluate all registered invariants over a finished transcript: prefix
/// safety of completions, per-view counter consecutiveness, quorum
/// thresholds, non-equivocation, phase discipline, view-change inclusion,
/// install consistency, adversary signature soundness, and (when the run
/// promises it) completion of every correct client's workload.
pub fn check_invariants(t: &Transcript) -> Vec<Violation> {
    let mut c = Checker {
        t,
        genesis: t.meta.genesis.as_ref(),
        correct: t.meta.correct_replicas.iter().copied().collect(),
        byzantine: t.meta.byzantine_replicas.iter().copied().collect(),
        tracks: BTreeMap::new(),
        digest_map: HashMap::new(),
        completions: Vec::new(),
        installs_by_view: BTreeMap::new(),
        counter_pks: BTreeSet::new(),
        certs: HashSet::new(),
        cert_list: Vec::new(),
        seen_units: HashSet::new(),
        violations: Vec::new(),
    };
    if let Some(g) = c.genesis {
        c.counter_pks.insert(g.view0_counter_pk);
    }
    c.digest_map.insert(Digest::zero(), Vec::new());
    c.run();
    c.violations
}

impl<'a> Checker<'a> {
    fn violation(&mut self, index: usize, kind: &'static str, detail: String) {
        self.violations.push(Violation { index: Some(index), kind, detail });
    }

    fn run(&mut self) {
        for i in 0..self.t.records.len() {
            let event = self.t.records[i].event.clone();
            match event {
                Event::Executed { replica, view, counter, client, request_id, history_digest } => {
                    self.on_executed(i, replica, view, counter, client, request_id, history_digest)
                }
                Event::ViewChangeStarted { replica, new_view } => {
                    let track = self.tracks.entry(replica).or_default();
                    track.view_changing = true;
                    track.current_view = new_view;
                }
                Event::ViewInstalled { replica, view, counter_pk, history, history_digest } => {
                    self.on_installed(i, replica, view, counter_pk, &history, history_digest)
                }
                Event::StateAdopted { replica, last_request, history, .. } => {
                    let slots: Vec<Slot> = history.iter().map(slot_of).collect();
                    self.index_prefixes(&slots);
                    let track = self.tracks.entry(replica).or_default();
                    track.history = slots;
                    track.last_counter = last_request;
                }
                Event::RequestCompleted {
                    client,
                    request_id,
                    view,
                    history_digest,
                    repliers,
                    fallback,
                    ..
                } => self.on_completed(i, client, request_id, view, history_digest, &repliers, fallback),
                Event::CertIssued { counter_pk, .. } => {
                    self.counter_pks.insert(counter_pk);
                }
                Event::Send { from, message, .. } => self.on_send(i, from, &message),
                _ => {}
            }
        }
        self.check_equivocation();
        self.check_prefix_safety();
        self.check_liveness();
    }

    #[allow(clippy::too_many_arguments)]
    fn on_executed(
        &mut self,
        i: usize,
        replica: ReplicaId,
        view: ViewId,
        counter: CounterValue,
        client: ClientId,
        request_id: RequestId,
        history_digest: Digest,
    ) {
        let correct = self.correct.contains(&replica);
        let track = self.tracks.entry(replica).or_default();
        if correct {
            if track.view_changing {
                self.violations.push(Violation {
                    index: Some(i),
                    kind: "executed-while-view-changing",
                    detail: format!("replica {replica} executed during a view change"),
                });
            }
            if view != track.current_view {
                self.violations.push(Violation {
                    index: Some(i),
                    kind: "executed-wrong-view",
                    detail: format!(
                        "replica {replica} executed for view {view} while in view {}",
                        track.current_view
                    ),
                });
            }
            if counter != track.last_counter + 1 {
                self.violations.push(Violation {
                    index: Some(i),
                    kind: "counter-gap",
                    detail: format!(
                        "replica {replica} executed counter {counter} after {}",
                        track.last_counter
                    ),
                });
            }
        }
        let track = self.tracks.entry(replica).or_default();
        track.last_counter = counter;
        track.history.push((view, counter, client, request_id, history_digest));
        let snapshot = track.history.clone();
        self.digest_map.insert(history_digest, snapshot);
        if correct {
            self.check_intra_view(i, replica);
        }
    }

    /// Correct replicas in the same view must hold prefix-related histories
    /// at every instant — except under a Byzantine primary whose ordering is
    /// only software-signed, which is exactly the divergence a trusted
    /// counter rules out.
    fn check_intra_view(&mut self, i: usize, replica: ReplicaId) {
        let track = self.tracks[&replica].clone();
        if let Some(g) = self.genesis {
            if !g.variant.uses_tmc() && self.byzantine.contains(&g.primary_of(track.current_view))
            {
                return;
            }
        }
        for (&other, o) in &self.tracks {
            if other == replica
                || !self.correct.contains(&other)
                || o.current_view != track.current_view
            {
                continue;
            }
            let (short, long) = if track.history.len() <= o.history.len() {
                (&track.history, &o.history)
            } else {
                (&o.history, &track.history)
            };
            if &long[..short.len()] != short.as_slice() {
                self.violations.push(Violation {
                    index: Some(i),
                    kind: "intra-view-divergence",
                    detail: format!(
                        "replicas {replica} and {other} hold non-prefix histories in view {}",
                        track.current_view
                    ),
                });
            }
        }
    }

    fn index_prefixes(&mut self, slots: &[Slot]) {
        for k in 0..slots.len() {
            let digest = slots[k].4;
            self.digest_map.entry(digest).or_insert_with(|| slots[..=k].to_vec());
        }
    }

    fn on_installed(
        &mut self,
        i: usize,
        replica: ReplicaId,
        view: ViewId,
        counter_pk: crate::crypto::PublicKey,
        history: &[HistoryPoint],
        history_digest: Digest,
    ) {
        self.counter_pks.insert(counter_pk);
        let slots: Vec<Slot> = history.iter().map(slot_of).collect();
        self.index_prefixes(&slots);
        if let Some(last) = slots.last() {
            if last.4 != history_digest {
                self.violation(
                    i,
                    "install-digest-mismatch",
                    format!("replica {replica} installed view {view} with inconsistent digest"),
                );
            }
        }
        if self.correct.contains(&replica) {
            match self.installs_by_view.get(&view) {
                None => {
                    self.installs_by_view.insert(view, (i, slots.clone(), counter_pk));
                }
                Some((first, h, pk)) => {
                    if h != &slots || pk != &counter_pk {
                        let first = *first;
                        self.violation(
                            i,
                            "install-divergence",
                            format!(
                                "replica {replica} installed view {view} differently from record {first}"
                            ),
                        );
                    }
                }
            }
            // Requests completed in earlier views must survive into this one.
            let missing: Vec<(ClientId, RequestId)> = self
                .completions
                .iter()
                .filter(|(_, v, _, _)| *v < view)
                .filter(|(_, _, cl, rid)| {
                    !slots.iter().any(|s| s.2 == *cl && s.3 == *rid)
                })
                .map(|(_, _, cl, rid)| (*cl, *rid))
                .collect();
            for (cl, rid) in missing {
                self.violation(
                    i,
                    "omitted-completed-request",
                    format!(
                        "request {rid} of client {cl} completed before view {view} but is absent from replica {replica}'s installed history"
                    ),
                );
            }
        }
        let track = self.tracks.entry(replica).or_default();
        track.history = slots;
        track.current_view = view;
        track.last_counter = 0;
        track.view_changing = false;
    }

    fn on_completed(
        &mut self,
        i: usize,
        client: ClientId,
        request_id: RequestId,
        view: ViewId,
        history_digest: Digest,
        repliers: &[ReplicaId],
        fallback: bool,
    ) {
        let required = if fallback {
            (2 * self.t.meta.f + 1) as usize
        } else {
            self.t.meta.completion_threshold as usize
        };
        let distinct: BTreeSet<ReplicaId> = repliers.iter().copied().collect();
        if distinct.len() < required {
            self.violation(
                i,
                "sub-quorum-completion",
                format!(
                    "request {request_id} of client {client} completed with {} repliers, needs {required}",
                    distinct.len()
                ),
            );
        }
        match self.digest_map.get(&history_digest) {
            Some(h) => self.completions.push((h.clone(), view, client, request_id)),
            None => self.violation(
                i,
                "unknown-completion-history",
                format!(
                    "request {request_id} of client {client} completed with a history digest no replica produced"
                ),
            ),
        }
    }

    fn on_send(&mut self, i: usize, from: NodeId, message: &Message) {
        if let NodeId::Replica(r) = from {
            if self.correct.contains(&r) && matches!(message, Message::Reply(_)) {
                if self.tracks.get(&r).is_some_and(|t| t.view_changing) {
                    self.violation(
                        i,
                        "reply-while-view-changing",
                        format!("replica {r} sent a reply during a view change"),
                    );
                }
            }
        }
        self.collect_certs(message);
        if let Some(g) = self.genesis {
            let mut units = Vec::new();
            collect_units(message, g, &mut units);
            if matches!(from, NodeId::Replica(r) if self.byzantine.contains(&r)) {
                for (author, bytes, valid) in &units {
                    let author_is_byzantine =
                        matches!(author, NodeId::Replica(r) if self.byzantine.contains(r));
                    if *valid && !author_is_byzantine && !self.seen_units.contains(bytes) {
                        self.violation(
                            i,
                            "forged-signature",
                            format!(
                                "Byzantine {from:?} emitted a valid unit authored by {author:?} never seen before"
                            ),
                        );
                    }
                }
            }
            for (_, bytes, _) in units {
                self.seen_units.insert(bytes);
            }
        }
    }

    fn note_cert(&mut self, cert: &OrderingCertificate) {
        let bytes = bincode::serialize(cert).expect("cert serializes");
        if self.certs.insert(bytes) {
            self.cert_list.push(*cert);
        }
    }

    fn collect_certs(&mut self, message: &Message) {
        match message {
            Message::OrderRequest(o) => self.note_cert(&o.cert),
            Message::Reply(r) => self.note_cert(&r.order_request.cert),
            Message::Commit(c) => {
                for r in &c.certificate.replies {
                    self.note_cert(&r.order_request.cert);
                }
            }
            Message::ViewChange(vc) => {
                for o in &vc.executed {
                    self.note_cert(&o.cert);
                }
            }
            Message::NewView(nv) => {
                for vc in &nv.view_changes {
                    for o in &vc.executed {
                        self.note_cert(&o.cert);
                    }
                }
            }
            Message::NewViewArchive(a) => {
                for vc in &a.new_view.view_changes {
                    for o in &vc.executed {
                        self.note_cert(&o.cert);
                    }
                }
            }
            _ => {}
        }
    }

    /// One counter value of one counter key must never certify two digests.
    fn check_equivocation(&mut self) {
        let mut bindings: BTreeMap<(crate::crypto::PublicKey, CounterValue), BTreeSet<Digest>> =
            BTreeMap::new();
        for cert in &self.cert_list {
            for pk in &self.counter_pks {
                if verify_certificate(pk, cert) {
                    bindings
                        .entry((*pk, cert.counter_value))
                        .or_default()
                        .insert(cert.message_digest);
                }
            }
        }
        for ((pk, counter), digests) in bindings {
            // A Byzantine primary re-signing its own software certificates is
            // expected misbehavior, not a broken guarantee; only trusted
            // counters and correct replicas promise a unique binding.
            let excused = match self.genesis {
                Some(g) if !g.variant.uses_tmc() => g
                    .replica_pks
                    .iter()
                    .position(|p| *p == pk)
                    .is_some_and(|i| self.byzantine.contains(&(i as ReplicaId))),
                _ => false,
            };
            if digests.len() > 1 && !excused {
                self.violations.push(Violation {
                    index: None,
                    kind: "equivocation",
                    detail: format!(
                        "counter key {pk:?} bound value {counter} to {} different digests",
                        digests.len()
                    ),
                });
            }
        }
    }

    /// Histories behind all completed requests are totally prefix-ordered.
    fn check_prefix_safety(&mut self) {
        let mut histories: Vec<&Vec<Slot>> = self.completions.iter().map(|(h, ..)| h).collect();
        histories.sort_by_key(|h| h.len());
        for w in histories.windows(2) {
            let (short, long) = (w[0], w[1]);
            if long[..short.len()] != short[..] {
                self.violations.push(Violation {
                    index: None,
                    kind: "completed-history-divergence",
                    detail: format!(
                        "two completed requests rest on diverging histories of lengths {} and {}",
                        short.len(),
                        long.len()
                    ),
                });
            }
        }
    }

    fn check_liveness(&mut self) {
        if !self.t.meta.expect_all_complete {
            return;
        }
        let expected = self.t.meta.requests_per_client as usize;
        for &client in &self.t.meta.correct_clients {
            let done = self.completions.iter().filter(|(_, _, c, _)| *c == client).count();
            if done < expected {
                self.violations.push(Violation {
                    index: None,
                    kind: "incomplete-workload",
                    detail: format!("client {client} completed {done}/{expected} requests"),
                });
            }
        }
    }
}

/// All signed sub-messages of a message: (author, canonical bytes, whether
/// the author's signature verifies). Used to detect signatures a Byzantine
/// node could not legitimately hold.
fn collect_units(m: &Message, g: &Genesis, out: &mut Vec<(NodeId, Vec<u8>, bool)>) {
    fn enc<T: Serialize>(v: &T) -> Vec<u8> {
        bincode::serialize(v).expect("message serializes")
    }
    match m {
        Message::Request(r) => {
            out.push((NodeId::Client(r.client), enc(r), r.validate(g).is_ok()));
        }
        Message::OrderRequest(o) => {
            out.push((
                NodeId::Replica(g.primary_of(o.view)),
                enc(o),
                o.validate_structure(g).is_ok(),
            ));
            collect_units(&Message::Request(o.request.clone()), g, out);
        }
        Message::Reply(r) => {
            out.push((NodeId::Replica(r.replica), enc(r), r.validate(g).is_ok()));
            collect_units(&Message::OrderRequest(r.order_request.clone()), g, out);
        }
        Message::ReqViewChange(a) => {
            out.push((NodeId::Replica(a.replica), enc(a), a.validate(g).is_ok()));
        }
        Message::ViewChange(vc) => {
            out.push((NodeId::Replica(vc.replica), enc(vc), vc.validate(g).is_ok()));
            for o in &vc.executed {
                collect_units(&Message::OrderRequest(o.clone()), g, out);
            }
            for e in &vc.evidence {
                collect_units(&Message::ReqViewChange(*e), g, out);
            }
        }
        Message::NewView(nv) => {
            out.push((
                NodeId::Replica(g.primary_of(nv.view)),
                enc(nv),
                nv.validate(g).is_ok(),
            ));
            for vc in &nv.view_changes {
                collect_units(&Message::ViewChange(vc.clone()), g, out);
            }
        }
        Message::ViewConfirm(c) => {
            out.push((NodeId::Replica(c.replica), enc(c), c.validate(g).is_ok()));
        }
        Message::Checkpoint(cp) => {
            out.push((NodeId::Replica(cp.replica), enc(cp), cp.validate_signature(g).is_ok()));
        }
        Message::Commit(c) => {
            for r in &c.certificate.replies {
                collect_units(&Message::Reply(r.clone()), g, out);
            }
        }
        Message::LocalCommit(lc) => {
            out.push((NodeId::Replica(lc.replica), enc(lc), lc.validate(g).is_ok()));
        }
        Message::NewViewArchive(a) => {
            collect_units(&Message::NewView(a.new_view.clone()), g, out);
            for c in &a.certificate.confirms {
                collect_units(&Message::ViewConfirm(*c), g, out);
            }
        }
        Message::StateOffer(s) => {
            for cp in &s.certificate.checkpoints {
                collect_units(&Message::Checkpoint(cp.clone()), g, out);
            }
            for e in &s.snapshot.history {
                collect_units(&Message::Request(e.request.clone()), g, out);
            }
        }
        Message::FillHole(_) | Message::NewViewFetch(_) | Message::StateFetch(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_config_fills_defaults() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            variant = "sac-zyzzyva"
            f = 1

            [[fault]]
            replica = 3
            kind = "crashed"
            at = 20
            "#,
        )
        .unwrap();
        let s = cfg.to_scenario().unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.n_tmc, 2);
        assert_eq!(s.requests_per_client, 10);
        assert_eq!(s.faults.get(&3), Some(&Fault::Crashed { at: 20 }));
    }

    #[test]
    fn unknown_fields_and_scripts_are_rejected() {
        assert!(ScenarioConfig::from_toml("variant = \"zyzzyva\"\nf = 1\nbogus = 3\n").is_err());
        let cfg = ScenarioConfig::from_toml(
            "variant = \"zyzzyva\"\nf = 1\n[[fault]]\nreplica = 0\nkind = \"byzantine-full\"\nscript = \"nope\"\n",
        )
        .unwrap();
        assert!(cfg.to_scenario().is_err());
    }

    #[test]
    fn fault_free_run_passes_all_invariants() {
        let scenario = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 1);
        let t = crate::simnet::run(&scenario).unwrap();
        let violations = check_invariants(&t);
        assert!(violations.is_empty(), "{violations:?}");
        let m = compute_metrics(&t);
        assert_eq!(m.completed, 10);
        assert_eq!(m.fallbacks, 0);
        assert!(m.median_latency.is_some());
    }

    #[test]
    fn sub_quorum_completion_is_flagged() {
        let mut scenario = Scenario::fault_free(ProtocolVariant::SacZyzzyva, 1);
        scenario.completion_threshold_override = Some(2);
        scenario.expect_all_complete = false;
        let t = crate::simnet::run(&scenario).unwrap();
        let violations = check_invariants(&t);
        assert!(
            violations.iter().any(|v| v.kind == "sub-quorum-completion"),
            "{violations:?}"
        );
    }

    #[test]
    fn suite_csv_has_request_and_aggregate_rows() {
        let scenario = Scenario::fault_free(ProtocolVariant::Zyzzyva, 1);
        let csv = run_suite(&[("base".into(), scenario)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.trim_end());
        assert_eq!(lines.iter().filter(|l| l.contains(",request,")).count(), 10);
        assert_eq!(lines.iter().filter(|l| l.contains(",aggregate,")).count(), 1);
    }
}
