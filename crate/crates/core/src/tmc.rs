//! Simulated trusted monotonic counter.
//!
//! A counter instance signs `(value, digest)` tuples with an instance key
//! whose secret never leaves this module; not even a Byzantine host replica
//! can produce two valid certificates for the same counter value. The
//! trusted part is crash-only: a crashed counter refuses further increments
//! but previously issued certificates stay valid.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{verify, Digest, KeyPair, PublicKey, Signature};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TmcError {
    #[error("replica has no trusted component")]
    NoTrustedComponent,
    #[error("trusted component has crash-failed")]
    Crashed,
}

/// A counter-signed binding of a message digest to a counter value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderingCertificate {
    pub counter_value: u64,
    pub message_digest: Digest,
    pub signature: Signature,
}

impl OrderingCertificate {
    fn signed_bytes(counter_value: u64, message_digest: &Digest) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 + 16);
        out.extend_from_slice(b"tmc-cert");
        out.extend_from_slice(&counter_value.to_le_bytes());
        out.extend_from_slice(&message_digest.0);
        out
    }
}

/// An instance public key signed by the TMC identity key that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attestation {
    pub instance_pk: PublicKey,
    pub signature: Signature,
}

impl Attestation {
    fn signed_bytes(instance_pk: &PublicKey) -> Vec<u8> {
        let mut out = Vec::with_capacity(40);
        out.extend_from_slice(b"tmc-attest");
        out.extend_from_slice(&instance_pk.0);
        out
    }
}

/// One monotonic counter instance, owned by a single replica.
#[derive(Debug)]
pub struct CounterInstance {
    key: KeyPair,
    counter_value: u64,
    crashed: bool,
}

impl CounterInstance {
    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn counter_value(&self) -> u64 {
        self.counter_value
    }

    pub fn increment(&mut self, message_digest: Digest) -> Result<OrderingCertificate, TmcError> {
        if self.crashed {
            return Err(TmcError::Crashed);
        }
        self.counter_value += 1;
        let signature = self
            .key
            .sign(&OrderingCertificate::signed_bytes(self.counter_value, &message_digest));
        Ok(OrderingCertificate {
            counter_value: self.counter_value,
            message_digest,
            signature,
        })
    }

    pub fn crash(&mut self) {
        self.crashed = true;
    }
}

/// The per-replica trusted component, if any.
#[derive(Debug)]
pub struct Tmc {
    identity: Option<KeyPair>,
    crashed: bool,
}

impl Tmc {
    pub fn new(identity: Option<KeyPair>) -> Tmc {
        Tmc { identity, crashed: false }
    }

    pub fn absent() -> Tmc {
        Tmc { identity: None, crashed: false }
    }

    pub fn is_present(&self) -> bool {
        self.identity.is_some()
    }

    pub fn identity_pk(&self) -> Option<PublicKey> {
        self.identity.as_ref().map(|k| k.public_key())
    }

    /// Crash the trusted part; existing instances created from it keep their
    /// issued certificates but new init calls fail.
    pub fn crash(&mut self) {
        self.crashed = true;
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    /// Create a fresh counter instance with value 0 and an attested public key.
    pub fn init(&self, rng: &mut impl RngCore) -> Result<(CounterInstance, Attestation), TmcError> {
        let identity = self.identity.as_ref().ok_or(TmcError::NoTrustedComponent)?;
        if self.crashed {
            return Err(TmcError::Crashed);
        }
        let key = KeyPair::generate(rng);
        let instance_pk = key.public_key();
        let signature = identity.sign(&Attestation::signed_bytes(&instance_pk));
        Ok((
            CounterInstance { key, counter_value: 0, crashed: false },
            Attestation { instance_pk, signature },
        ))
    }
}

/// An ordering certificate signed with an ordinary key instead of a counter
/// instance. Baseline variants without a trusted counter order requests this
/// way; nothing stops the signer from issuing two certificates for the same
/// counter value.
pub fn software_certificate(
    key: &KeyPair,
    counter_value: u64,
    message_digest: Digest,
) -> OrderingCertificate {
    let signature = key.sign(&OrderingCertificate::signed_bytes(counter_value, &message_digest));
    OrderingCertificate { counter_value, message_digest, signature }
}

pub fn verify_certificate(instance_pk: &PublicKey, cert: &OrderingCertificate) -> bool {
    cert.counter_value >= 1
        && verify(
            instance_pk,
            &OrderingCertificate::signed_bytes(cert.counter_value, &cert.message_digest),
            &cert.signature,
        )
}

pub fn verify_attestation(tmc_identity_pk: &PublicKey, attestation: &Attestation) -> bool {
    verify(
        tmc_identity_pk,
        &Attestation::signed_bytes(&attestation.instance_pk),
        &attestation.signature,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn equipped(rng: &mut ChaCha12Rng) -> Tmc {
        Tmc::new(Some(KeyPair::generate(rng)))
    }

    #[test]
    fn init_yields_fresh_attested_instance() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let tmc = equipped(&mut rng);
        let (inst, att) = tmc.init(&mut rng).unwrap();
        assert_eq!(inst.counter_value(), 0);
        assert_eq!(att.instance_pk, inst.public_key());
        assert!(verify_attestation(&tmc.identity_pk().unwrap(), &att));
    }

    #[test]
    fn init_without_component_fails() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let tmc = Tmc::absent();
        assert_eq!(tmc.init(&mut rng).unwrap_err(), TmcError::NoTrustedComponent);
    }

    #[test]
    fn two_inits_give_distinct_instance_keys() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let tmc = equipped(&mut rng);
        let (a, _) = tmc.init(&mut rng).unwrap();
        let (b, _) = tmc.init(&mut rng).unwrap();
        assert_ne!(a.public_key(), b.public_key());
    }

    #[test]
    fn increments_count_one_two_three() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let tmc = equipped(&mut rng);
        let (mut inst, _) = tmc.init(&mut rng).unwrap();
        for expect in 1..=3 {
            let cert = inst.increment(Digest::of(b"m")).unwrap();
            assert_eq!(cert.counter_value, expect);
            assert!(verify_certificate(&inst.public_key(), &cert));
        }
    }

    #[test]
    fn crashed_counter_rejects_increment_but_old_certs_survive() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let tmc = equipped(&mut rng);
        let (mut inst, _) = tmc.init(&mut rng).unwrap();
        let cert = inst.increment(Digest::of(b"m")).unwrap();
        inst.crash();
        assert_eq!(inst.increment(Digest::of(b"n")).unwrap_err(), TmcError::Crashed);
        assert!(verify_certificate(&inst.public_key(), &cert));
    }

    #[test]
    fn crashed_tmc_rejects_init() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let mut tmc = equipped(&mut rng);
        tmc.crash();
        assert_eq!(tmc.init(&mut rng).unwrap_err(), TmcError::Crashed);
    }

    #[test]
    fn tampered_or_misattributed_certs_fail() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let tmc = equipped(&mut rng);
        let (mut inst, _) = tmc.init(&mut rng).unwrap();
        let (other, _) = tmc.init(&mut rng).unwrap();
        let cert = inst.increment(Digest::of(b"m")).unwrap();

        let mut modified = cert;
        modified.counter_value += 1;
        assert!(!verify_certificate(&inst.public_key(), &modified));
        assert!(!verify_certificate(&other.public_key(), &cert));
    }

    /// A software signer can bind two digests to the same counter value;
    /// a counter instance cannot even be asked to.
    #[test]
    fn software_certificates_permit_equivocation() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let key = KeyPair::generate(&mut rng);
        let a = software_certificate(&key, 5, Digest::of(b"m1"));
        let b = software_certificate(&key, 5, Digest::of(b"m2"));
        assert!(verify_certificate(&key.public_key(), &a));
        assert!(verify_certificate(&key.public_key(), &b));
        assert_ne!(a.message_digest, b.message_digest);
    }

    /// Oracle: over randomized increment schedules, the issued counter values
    /// are exactly {1..k} with no duplicates.
    #[test]
    fn counter_values_form_contiguous_set_over_random_schedules() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..1_000 {
            let tmc = equipped(&mut rng);
            let (mut inst, _) = tmc.init(&mut rng).unwrap();
            let k = rng.gen_range(0..8);
            let mut seen = std::collections::BTreeSet::new();
            for _ in 0..k {
                let payload: [u8; 4] = rng.gen();
                let cert = inst.increment(Digest::of(&payload)).unwrap();
                assert!(seen.insert(cert.counter_value), "duplicate counter value");
            }
            let expect: std::collections::BTreeSet<u64> = (1..=k).collect();
            assert_eq!(seen, expect);
        }
    }
}
