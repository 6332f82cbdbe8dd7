//! Signatures and hashing used by protocol messages and the trusted counter.
//!
//! Keys are generated from seeded RNGs and Ed25519 signing is deterministic,
//! so whole simulation runs are reproducible from a single seed.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;

/// Fixed-length SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest(h.finalize().into())
    }

    /// Domain-separated digest of several fields.
    pub fn of_parts(tag: &str, parts: &[&[u8]]) -> Digest {
        let mut h = Sha256::new();
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag.as_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        Digest(h.finalize().into())
    }

    pub fn zero() -> Digest {
        Digest([0u8; DIGEST_LEN])
    }

    pub fn short_hex(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", self.short_hex())
    }
}

/// An Ed25519 public key, stored as raw bytes so it can be ordered and hashed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; 32]);

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    r: [u8; 32],
    s: [u8; 32],
}

impl Signature {
    fn to_dalek(self) -> ed25519_dalek::Signature {
        let mut bytes = [0u8; 64];
        bytes[..32].copy_from_slice(&self.r);
        bytes[32..].copy_from_slice(&self.s);
        ed25519_dalek::Signature::from_bytes(&bytes)
    }

    fn from_dalek(sig: ed25519_dalek::Signature) -> Signature {
        let bytes = sig.to_bytes();
        let mut r = [0u8; 32];
        let mut s = [0u8; 32];
        r.copy_from_slice(&bytes[..32]);
        s.copy_from_slice(&bytes[32..]);
        Signature { r, s }
    }

    /// A structurally valid but meaningless signature, for adversary use.
    pub fn garbage() -> Signature {
        Signature { r: [0u8; 32], s: [0u8; 32] }
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.r[..6]))
    }
}

/// A signing key together with its public half.
#[derive(Clone)]
pub struct KeyPair {
    secret: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate(rng: &mut impl RngCore) -> KeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let secret = SigningKey::from_bytes(&seed);
        let public = PublicKey(secret.verifying_key().to_bytes());
        KeyPair { secret, public }
    }

    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature::from_dalek(self.secret.sign(message))
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair({:?})", self.public)
    }
}

pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    key.verify(message, &signature.to_dalek()).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sign_verify_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let kp = KeyPair::generate(&mut rng);
        let sig = kp.sign(b"hello");
        assert!(verify(&kp.public_key(), b"hello", &sig));
    }

    #[test]
    fn verify_rejects_tampered_message() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let kp = KeyPair::generate(&mut rng);
        let sig = kp.sign(b"hello");
        assert!(!verify(&kp.public_key(), b"hellp", &sig));
    }

    #[test]
    fn verify_rejects_wrong_key() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let kp = KeyPair::generate(&mut rng);
        let other = KeyPair::generate(&mut rng);
        let sig = kp.sign(b"hello");
        assert!(!verify(&other.public_key(), b"hello", &sig));
    }

    #[test]
    fn hash_is_deterministic_and_empty_input_is_stable() {
        let m = b"some message";
        assert_eq!(Digest::of(m), Digest::of(m));
        // Well-known SHA-256 of the empty string.
        assert_eq!(
            hex::encode(Digest::of(b"").0),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_differs_on_appended_byte() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..64);
            let mut m: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let d = Digest::of(&m);
            m.push(0x00);
            assert_ne!(d, Digest::of(&m));
        }
    }

    #[test]
    fn mutations_break_signatures() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..10_000u32 {
            let kp = KeyPair::generate(&mut rng);
            let len = rng.gen_range(1..48);
            let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let sig = kp.sign(&msg);
            assert!(verify(&kp.public_key(), &msg, &sig));

            let mut tampered = msg.clone();
            let idx = rng.gen_range(0..tampered.len());
            tampered[idx] ^= 1 << rng.gen_range(0..8);
            assert!(!verify(&kp.public_key(), &tampered, &sig));

            let mut bad_sig = sig;
            if rng.gen() {
                bad_sig.r[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
            } else {
                bad_sig.s[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
            }
            assert!(!verify(&kp.public_key(), &msg, &bad_sig));
        }
    }
}
