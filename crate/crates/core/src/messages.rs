//! The protocol message kinds exchanged by clients and replicas, their
//! canonical encoding, and signature/quorum validation.
//!
//! All messages use a deterministic binary encoding (length-prefixed fields
//! in declaration order) so digests of messages are well defined. Nine kinds
//! form the agreement, view-change, and checkpoint protocols; the remaining
//! kinds serve the baseline commit-certificate fallback and checkpoint/state
//! transfer for lagging replicas.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::app::Snapshot;
use crate::baselines::CommitCertificate;
use crate::config::{ClientId, CounterValue, Genesis, ReplicaId, RequestId, ViewId};
use crate::crypto::{verify, Digest, KeyPair, PublicKey, Signature};
use crate::tmc::{verify_attestation, verify_certificate, Attestation, OrderingCertificate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationError {
    BadSignature,
    WrongView,
    InsufficientQuorum,
    DuplicateSigner,
    BadAttestation,
    DigestMismatch,
    Malformed(&'static str),
}

pub type Validation = Result<(), ValidationError>;

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    bincode::serialize(value).expect("message types always serialize")
}

/// Client request: `op` is the application operation, `request_id` a
/// monotonically increasing per-client identifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMsg {
    pub op: Vec<u8>,
    pub client: ClientId,
    pub request_id: RequestId,
    pub signature: Signature,
}

impl RequestMsg {
    fn signed_bytes(op: &[u8], client: ClientId, request_id: RequestId) -> Vec<u8> {
        encode(&("request", op, client, request_id))
    }

    pub fn new(op: Vec<u8>, client: ClientId, request_id: RequestId, key: &KeyPair) -> RequestMsg {
        let signature = key.sign(&Self::signed_bytes(&op, client, request_id));
        RequestMsg { op, client, request_id, signature }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&encode(self))
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.client_pk(self.client).ok_or(ValidationError::Malformed("unknown client"))?;
        if verify(pk, &Self::signed_bytes(&self.op, self.client, self.request_id), &self.signature)
        {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }
}

/// Primary's binding of a request to a counter value within a view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRequestMsg {
    pub view: ViewId,
    pub cert: OrderingCertificate,
    pub request: RequestMsg,
    pub signature: Signature,
}

impl OrderRequestMsg {
    fn signed_bytes(view: ViewId, cert: &OrderingCertificate, request: &RequestMsg) -> Vec<u8> {
        encode(&("order-request", view, cert, request))
    }

    pub fn new(
        view: ViewId,
        cert: OrderingCertificate,
        request: RequestMsg,
        key: &KeyPair,
    ) -> OrderRequestMsg {
        let signature = key.sign(&Self::signed_bytes(view, &cert, &request));
        OrderRequestMsg { view, cert, request, signature }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&encode(self))
    }

    pub fn counter(&self) -> CounterValue {
        self.cert.counter_value
    }

    /// Structural validity: primary signature, client signature, and the
    /// cert binding the request digest. Does not check the counter signature
    /// (that needs the per-view counter key; see [`validate_cert`]).
    pub fn validate_structure(&self, g: &Genesis) -> Validation {
        let primary = g.primary_of(self.view);
        let pk = g.replica_pk(primary).ok_or(ValidationError::Malformed("unknown primary"))?;
        if !verify(pk, &Self::signed_bytes(self.view, &self.cert, &self.request), &self.signature) {
            return Err(ValidationError::BadSignature);
        }
        if self.cert.message_digest != self.request.digest() {
            return Err(ValidationError::DigestMismatch);
        }
        self.request.validate(g)
    }

    /// The counter-signature check, against the active counter key of the
    /// message's view.
    pub fn validate_cert(&self, counter_pk: &PublicKey) -> Validation {
        if verify_certificate(counter_pk, &self.cert) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }

    /// Full validation in a view context.
    pub fn validate(&self, g: &Genesis, current_view: ViewId, counter_pk: &PublicKey) -> Validation {
        if self.view != current_view {
            return Err(ValidationError::WrongView);
        }
        self.validate_structure(g)?;
        self.validate_cert(counter_pk)
    }
}

/// Replica's speculative response to the client.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyMsg {
    pub order_request: OrderRequestMsg,
    pub response: Vec<u8>,
    /// Digest of the replica's history up to and including this request.
    pub history_digest: Digest,
    pub replica: ReplicaId,
    pub signature: Signature,
}

impl ReplyMsg {
    fn signed_bytes(
        order_request: &OrderRequestMsg,
        response: &[u8],
        history_digest: &Digest,
        replica: ReplicaId,
    ) -> Vec<u8> {
        encode(&("reply", order_request, response, history_digest, replica))
    }

    pub fn new(
        order_request: OrderRequestMsg,
        response: Vec<u8>,
        history_digest: Digest,
        replica: ReplicaId,
        key: &KeyPair,
    ) -> ReplyMsg {
        let signature =
            key.sign(&Self::signed_bytes(&order_request, &response, &history_digest, replica));
        ReplyMsg { order_request, response, history_digest, replica, signature }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if verify(
            pk,
            &Self::signed_bytes(&self.order_request, &self.response, &self.history_digest, self.replica),
            &self.signature,
        ) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }
}

/// Request for a missing order-request, sent to the primary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillHoleMsg {
    pub view: ViewId,
    pub index: CounterValue,
}

impl FillHoleMsg {
    pub fn validate(&self) -> Validation {
        if self.index >= 1 {
            Ok(())
        } else {
            Err(ValidationError::Malformed("fill-hole index must be >= 1"))
        }
    }
}

/// Accusation that the primary of `view` is faulty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReqViewChangeMsg {
    pub view: ViewId,
    pub replica: ReplicaId,
    pub signature: Signature,
}

impl ReqViewChangeMsg {
    fn signed_bytes(view: ViewId, replica: ReplicaId) -> Vec<u8> {
        encode(&("req-view-change", view, replica))
    }

    pub fn new(view: ViewId, replica: ReplicaId, key: &KeyPair) -> ReqViewChangeMsg {
        ReqViewChangeMsg { view, replica, signature: key.sign(&Self::signed_bytes(view, replica)) }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if verify(pk, &Self::signed_bytes(self.view, self.replica), &self.signature) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }
}

/// 2f+1 matching view-confirm messages: proof that a view was installed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewCertificate {
    pub view: ViewId,
    pub new_view_digest: Digest,
    pub confirms: Vec<ViewConfirmMsg>,
}

impl ViewCertificate {
    pub fn validate(&self, g: &Genesis) -> Validation {
        if self.confirms.len() < g.large_quorum() {
            return Err(ValidationError::InsufficientQuorum);
        }
        let mut signers = BTreeSet::new();
        for c in &self.confirms {
            if c.view != self.view || c.new_view_digest != self.new_view_digest {
                return Err(ValidationError::DigestMismatch);
            }
            if !signers.insert(c.replica) {
                return Err(ValidationError::DuplicateSigner);
            }
            c.validate(g)?;
        }
        Ok(())
    }
}

/// Proof that a given view's starting state was agreed: the genesis for
/// view 0, or a view certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewAuthority {
    Genesis,
    Certificate(ViewCertificate),
}

impl ViewAuthority {
    pub fn view(&self) -> ViewId {
        match self {
            ViewAuthority::Genesis => 0,
            ViewAuthority::Certificate(c) => c.view,
        }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        match self {
            ViewAuthority::Genesis => Ok(()),
            ViewAuthority::Certificate(c) => c.validate(g),
        }
    }
}

/// 2f+1 matching checkpoint messages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointCertificate {
    pub view: ViewId,
    pub last_request: CounterValue,
    pub state_digest: Digest,
    pub checkpoints: Vec<CheckpointMsg>,
}

impl CheckpointCertificate {
    pub fn validate(&self, g: &Genesis) -> Validation {
        if self.checkpoints.len() < g.large_quorum() {
            return Err(ValidationError::InsufficientQuorum);
        }
        let mut signers = BTreeSet::new();
        for cp in &self.checkpoints {
            if cp.view_authority.view() != self.view
                || cp.last_request != self.last_request
                || cp.state_digest != self.state_digest
            {
                return Err(ValidationError::DigestMismatch);
            }
            if !signers.insert(cp.replica) {
                return Err(ValidationError::DuplicateSigner);
            }
            cp.validate_signature(g)?;
        }
        // One full authority check covers the rest: all reference the view.
        self.checkpoints[0].view_authority.validate(g)
    }
}

/// The most recent agreed state point a replica can prove: a view start or a
/// stable checkpoint within a view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseCertificate {
    View(ViewAuthority),
    Checkpoint(CheckpointCertificate),
}

impl BaseCertificate {
    /// (view, counter) of the proven state point.
    pub fn point(&self) -> (ViewId, CounterValue) {
        match self {
            BaseCertificate::View(a) => (a.view(), 0),
            BaseCertificate::Checkpoint(c) => (c.view, c.last_request),
        }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        match self {
            BaseCertificate::View(a) => a.validate(g),
            BaseCertificate::Checkpoint(c) => c.validate(g),
        }
    }
}

/// A replica's commitment to leave a view, carrying everything it executed
/// since its last proven state point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewChangeMsg {
    pub new_view: ViewId,
    pub replica: ReplicaId,
    pub base: BaseCertificate,
    /// Order-requests executed after `base`, consecutive counter values,
    /// all from the base's view.
    pub executed: Vec<OrderRequestMsg>,
    /// f+1 accusations against the view being left.
    pub evidence: Vec<ReqViewChangeMsg>,
    pub signature: Signature,
}

impl ViewChangeMsg {
    fn signed_bytes(
        new_view: ViewId,
        replica: ReplicaId,
        base: &BaseCertificate,
        executed: &[OrderRequestMsg],
        evidence: &[ReqViewChangeMsg],
    ) -> Vec<u8> {
        encode(&("view-change", new_view, replica, base, executed, evidence))
    }

    pub fn new(
        new_view: ViewId,
        replica: ReplicaId,
        base: BaseCertificate,
        executed: Vec<OrderRequestMsg>,
        evidence: Vec<ReqViewChangeMsg>,
        key: &KeyPair,
    ) -> ViewChangeMsg {
        let signature =
            key.sign(&Self::signed_bytes(new_view, replica, &base, &executed, &evidence));
        ViewChangeMsg { new_view, replica, base, executed, evidence, signature }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if !verify(
            pk,
            &Self::signed_bytes(self.new_view, self.replica, &self.base, &self.executed, &self.evidence),
            &self.signature,
        ) {
            return Err(ValidationError::BadSignature);
        }
        if self.new_view == 0 {
            return Err(ValidationError::Malformed("view-change cannot target view 0"));
        }
        self.base.validate(g)?;
        let (base_view, base_counter) = self.base.point();
        if base_view >= self.new_view {
            return Err(ValidationError::WrongView);
        }
        // Evidence: f+1 distinct accusers of the view being left.
        if self.evidence.len() < g.small_quorum() {
            return Err(ValidationError::InsufficientQuorum);
        }
        let mut accusers = BTreeSet::new();
        for e in &self.evidence {
            if e.view != self.new_view - 1 {
                return Err(ValidationError::WrongView);
            }
            if !accusers.insert(e.replica) {
                return Err(ValidationError::DuplicateSigner);
            }
            e.validate(g)?;
        }
        // Executed entries: consecutive counters from the base point, all in
        // the base's view, structurally valid. Counter signatures are checked
        // against the base view's counter key at install time.
        let mut expect = base_counter + 1;
        for o in &self.executed {
            if o.view != base_view {
                return Err(ValidationError::WrongView);
            }
            if o.counter() != expect {
                return Err(ValidationError::Malformed("executed counters not consecutive"));
            }
            expect += 1;
            o.validate_structure(g)?;
        }
        Ok(())
    }
}

/// The new primary's proposal for a view, bundling the 2f+1 view-changes it
/// collected and, for counter-based variants, the fresh attested counter key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewViewMsg {
    pub view: ViewId,
    pub counter_attestation: Option<Attestation>,
    pub view_changes: Vec<ViewChangeMsg>,
    pub signature: Signature,
}

impl NewViewMsg {
    fn signed_bytes(
        view: ViewId,
        counter_attestation: &Option<Attestation>,
        view_changes: &[ViewChangeMsg],
    ) -> Vec<u8> {
        encode(&("new-view", view, counter_attestation, view_changes))
    }

    pub fn new(
        view: ViewId,
        counter_attestation: Option<Attestation>,
        view_changes: Vec<ViewChangeMsg>,
        key: &KeyPair,
    ) -> NewViewMsg {
        let signature = key.sign(&Self::signed_bytes(view, &counter_attestation, &view_changes));
        NewViewMsg { view, counter_attestation, view_changes, signature }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&encode(self))
    }

    /// The counter key replicas must use for this view.
    pub fn counter_pk(&self, g: &Genesis) -> Option<PublicKey> {
        if g.variant.uses_tmc() {
            self.counter_attestation.as_ref().map(|a| a.instance_pk)
        } else {
            g.replica_pk(g.primary_of(self.view)).copied()
        }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let primary = g.primary_of(self.view);
        let pk = g.replica_pk(primary).ok_or(ValidationError::Malformed("unknown primary"))?;
        if !verify(
            pk,
            &Self::signed_bytes(self.view, &self.counter_attestation, &self.view_changes),
            &self.signature,
        ) {
            return Err(ValidationError::BadSignature);
        }
        match (&self.counter_attestation, g.variant.uses_tmc()) {
            (Some(att), true) => {
                let tmc_pk = g
                    .tmc_identity_pk(primary)
                    .ok_or(ValidationError::BadAttestation)?;
                if !verify_attestation(tmc_pk, att) {
                    return Err(ValidationError::BadAttestation);
                }
            }
            (None, false) => {}
            _ => return Err(ValidationError::BadAttestation),
        }
        if self.view_changes.len() < g.large_quorum() {
            return Err(ValidationError::InsufficientQuorum);
        }
        let mut signers = BTreeSet::new();
        for vc in &self.view_changes {
            if vc.new_view != self.view {
                return Err(ValidationError::WrongView);
            }
            if !signers.insert(vc.replica) {
                return Err(ValidationError::DuplicateSigner);
            }
            vc.validate(g)?;
        }
        Ok(())
    }
}

/// Confirmation that a replica saw a specific new-view proposal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewConfirmMsg {
    pub view: ViewId,
    pub replica: ReplicaId,
    pub new_view_digest: Digest,
    pub signature: Signature,
}

impl ViewConfirmMsg {
    fn signed_bytes(view: ViewId, replica: ReplicaId, new_view_digest: &Digest) -> Vec<u8> {
        encode(&("view-confirm", view, replica, new_view_digest))
    }

    pub fn new(
        view: ViewId,
        replica: ReplicaId,
        new_view_digest: Digest,
        key: &KeyPair,
    ) -> ViewConfirmMsg {
        let signature = key.sign(&Self::signed_bytes(view, replica, &new_view_digest));
        ViewConfirmMsg { view, replica, new_view_digest, signature }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if verify(
            pk,
            &Self::signed_bytes(self.view, self.replica, &self.new_view_digest),
            &self.signature,
        ) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }
}

/// Commitment to the state after the most recently executed request, sent
/// every N requests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMsg {
    pub view_authority: ViewAuthority,
    pub last_request: CounterValue,
    pub state_digest: Digest,
    pub replica: ReplicaId,
    pub signature: Signature,
}

impl CheckpointMsg {
    fn signed_bytes(
        view_authority: &ViewAuthority,
        last_request: CounterValue,
        state_digest: &Digest,
        replica: ReplicaId,
    ) -> Vec<u8> {
        encode(&("checkpoint", view_authority, last_request, state_digest, replica))
    }

    pub fn new(
        view_authority: ViewAuthority,
        last_request: CounterValue,
        state_digest: Digest,
        replica: ReplicaId,
        key: &KeyPair,
    ) -> CheckpointMsg {
        let signature =
            key.sign(&Self::signed_bytes(&view_authority, last_request, &state_digest, replica));
        CheckpointMsg { view_authority, last_request, state_digest, replica, signature }
    }

    pub fn validate_signature(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if verify(
            pk,
            &Self::signed_bytes(&self.view_authority, self.last_request, &self.state_digest, self.replica),
            &self.signature,
        ) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        self.validate_signature(g)?;
        self.view_authority.validate(g)
    }
}

/// Zyzzyva fallback: the client broadcasts its commit certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMsg {
    pub client: ClientId,
    pub request_id: RequestId,
    pub certificate: CommitCertificate,
}

/// Replica acknowledgement of a commit certificate consistent with its
/// local history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalCommitMsg {
    pub view: ViewId,
    pub order_request_digest: Digest,
    pub history_digest: Digest,
    pub client: ClientId,
    pub request_id: RequestId,
    pub replica: ReplicaId,
    pub signature: Signature,
}

impl LocalCommitMsg {
    fn signed_bytes(
        view: ViewId,
        order_request_digest: &Digest,
        history_digest: &Digest,
        client: ClientId,
        request_id: RequestId,
        replica: ReplicaId,
    ) -> Vec<u8> {
        encode(&("local-commit", view, order_request_digest, history_digest, client, request_id, replica))
    }

    pub fn new(
        view: ViewId,
        order_request_digest: Digest,
        history_digest: Digest,
        client: ClientId,
        request_id: RequestId,
        replica: ReplicaId,
        key: &KeyPair,
    ) -> LocalCommitMsg {
        let signature = key.sign(&Self::signed_bytes(
            view,
            &order_request_digest,
            &history_digest,
            client,
            request_id,
            replica,
        ));
        LocalCommitMsg {
            view,
            order_request_digest,
            history_digest,
            client,
            request_id,
            replica,
            signature,
        }
    }

    pub fn validate(&self, g: &Genesis) -> Validation {
        let pk = g.replica_pk(self.replica).ok_or(ValidationError::Malformed("unknown replica"))?;
        if verify(
            pk,
            &Self::signed_bytes(
                self.view,
                &self.order_request_digest,
                &self.history_digest,
                self.client,
                self.request_id,
                self.replica,
            ),
            &self.signature,
        ) {
            Ok(())
        } else {
            Err(ValidationError::BadSignature)
        }
    }
}

/// Ask peers for their stored new-view message for a view (catch-up).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewViewFetchMsg {
    pub view: ViewId,
}

/// Response to a new-view fetch: the new-view message that was installed for
/// a past view, plus the confirm quorum proving it was the installed one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewViewArchiveMsg {
    pub new_view: NewViewMsg,
    pub certificate: ViewCertificate,
}

impl NewViewArchiveMsg {
    pub fn validate(&self, g: &Genesis) -> Validation {
        if self.certificate.view != self.new_view.view
            || self.certificate.new_view_digest != self.new_view.digest()
        {
            return Err(ValidationError::DigestMismatch);
        }
        self.certificate.validate(g)?;
        self.new_view.validate(g)
    }
}

/// Ask peers for the snapshot behind a stable checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFetchMsg {
    pub view: ViewId,
    pub last_request: CounterValue,
}

/// Checkpoint transfer: certificate plus the snapshot it commits to. The
/// receiver verifies the snapshot against the certified state digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateOfferMsg {
    pub certificate: CheckpointCertificate,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    Request(RequestMsg),
    OrderRequest(OrderRequestMsg),
    Reply(ReplyMsg),
    FillHole(FillHoleMsg),
    ReqViewChange(ReqViewChangeMsg),
    ViewChange(ViewChangeMsg),
    NewView(NewViewMsg),
    ViewConfirm(ViewConfirmMsg),
    Checkpoint(CheckpointMsg),
    Commit(CommitMsg),
    LocalCommit(LocalCommitMsg),
    NewViewFetch(NewViewFetchMsg),
    NewViewArchive(NewViewArchiveMsg),
    StateFetch(StateFetchMsg),
    StateOffer(StateOfferMsg),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Request(_) => "request",
            Message::OrderRequest(_) => "order-request",
            Message::Reply(_) => "reply",
            Message::FillHole(_) => "fill-hole",
            Message::ReqViewChange(_) => "req-view-change",
            Message::ViewChange(_) => "view-change",
            Message::NewView(_) => "new-view",
            Message::ViewConfirm(_) => "view-confirm",
            Message::Checkpoint(_) => "checkpoint",
            Message::Commit(_) => "commit",
            Message::LocalCommit(_) => "local-commit",
            Message::NewViewFetch(_) => "new-view-fetch",
            Message::NewViewArchive(_) => "new-view-archive",
            Message::StateFetch(_) => "state-fetch",
            Message::StateOffer(_) => "state-offer",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(self)
    }

    pub fn decode(bytes: &[u8]) -> Option<Message> {
        bincode::deserialize(bytes).ok()
    }
}

/// View context for validating messages whose meaning depends on the
/// receiver's current view.
#[derive(Clone, Copy, Debug)]
pub struct ViewContext {
    pub current_view: ViewId,
    pub counter_pk: PublicKey,
}

/// Aggregate validation entry point.
pub fn validate(msg: &Message, g: &Genesis, ctx: &ViewContext) -> Validation {
    match msg {
        Message::Request(m) => m.validate(g),
        Message::OrderRequest(m) => m.validate(g, ctx.current_view, &ctx.counter_pk),
        Message::Reply(m) => m.validate(g),
        Message::FillHole(m) => m.validate(),
        Message::ReqViewChange(m) => m.validate(g),
        Message::ViewChange(m) => m.validate(g),
        Message::NewView(m) => m.validate(g),
        Message::ViewConfirm(m) => m.validate(g),
        Message::Checkpoint(m) => m.validate(g),
        Message::Commit(m) => {
            for r in &m.certificate.replies {
                r.validate(g)?;
            }
            if m.certificate.is_well_formed(g.f) {
                Ok(())
            } else {
                Err(ValidationError::InsufficientQuorum)
            }
        }
        Message::LocalCommit(m) => m.validate(g),
        Message::NewViewFetch(_) => Ok(()),
        Message::NewViewArchive(m) => m.validate(g),
        Message::StateFetch(_) => Ok(()),
        Message::StateOffer(m) => {
            m.certificate.validate(g)?;
            if m.snapshot.state_digest() == m.certificate.state_digest {
                Ok(())
            } else {
                Err(ValidationError::DigestMismatch)
            }
        }
    }
}
