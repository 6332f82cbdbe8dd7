//! Protocol variant selection and the thresholds that distinguish the
//! speculative protocols under comparison.
//!
//! The single-active-counter variant completes at 2f+1 matching replies with
//! no fallback. Plain Zyzzyva completes only at 3f+1 and falls back to a
//! commit-certificate round when between 2f+1 and 3f replies arrive before
//! the client timeout. Zyzzyva5 buys fallback-freedom with 5f+1 replicas and
//! a 4f+1 completion threshold.

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::messages::ReplyMsg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolVariant {
    SacZyzzyva,
    Zyzzyva,
    Zyzzyva5,
}

impl ProtocolVariant {
    /// Replicas needed to tolerate `f` faults.
    pub fn replicas(self, f: u32) -> u32 {
        match self {
            ProtocolVariant::SacZyzzyva | ProtocolVariant::Zyzzyva => 3 * f + 1,
            ProtocolVariant::Zyzzyva5 => 5 * f + 1,
        }
    }

    /// Matching replies needed for speculative completion.
    pub fn completion_threshold(self, f: u32) -> u32 {
        match self {
            ProtocolVariant::SacZyzzyva => 2 * f + 1,
            ProtocolVariant::Zyzzyva => 3 * f + 1,
            ProtocolVariant::Zyzzyva5 => 4 * f + 1,
        }
    }

    /// Whether the client runs a non-speculative commit-certificate fallback.
    pub fn has_fallback(self) -> bool {
        matches!(self, ProtocolVariant::Zyzzyva)
    }

    /// Whether ordering certificates come from a trusted monotonic counter.
    pub fn uses_tmc(self) -> bool {
        matches!(self, ProtocolVariant::SacZyzzyva)
    }
}

pub fn variant_thresholds(variant: ProtocolVariant, f: u32) -> (u32, u32, bool) {
    (variant.replicas(f), variant.completion_threshold(f), variant.has_fallback())
}

/// Client-assembled proof of 2f+1 matching speculative replies, broadcast to
/// replicas in Zyzzyva's non-speculative fallback.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCertificate {
    pub replies: Vec<ReplyMsg>,
}

impl CommitCertificate {
    /// The tuple every reply in the certificate must agree on.
    pub fn matching_key(reply: &ReplyMsg) -> (u64, Digest, Vec<u8>, Digest) {
        (
            reply.order_request.view,
            reply.order_request.digest(),
            reply.response.clone(),
            reply.history_digest,
        )
    }

    /// Structural check: distinct signers agreeing on one key, at least 2f+1.
    pub fn is_well_formed(&self, f: u32) -> bool {
        if self.replies.len() < (2 * f + 1) as usize {
            return false;
        }
        let key = Self::matching_key(&self.replies[0]);
        let mut signers = std::collections::BTreeSet::new();
        self.replies
            .iter()
            .all(|r| Self::matching_key(r) == key && signers.insert(r.replica))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_table() {
        assert_eq!(variant_thresholds(ProtocolVariant::Zyzzyva5, 1), (6, 5, false));
        assert_eq!(variant_thresholds(ProtocolVariant::SacZyzzyva, 1), (4, 3, false));
        // f = 0 degenerate case: one replica, fallback vacuous.
        assert_eq!(variant_thresholds(ProtocolVariant::Zyzzyva, 0), (1, 1, true));
        assert_eq!(variant_thresholds(ProtocolVariant::Zyzzyva, 2), (7, 7, true));
        assert_eq!(variant_thresholds(ProtocolVariant::Zyzzyva5, 3), (16, 13, false));
    }
}
