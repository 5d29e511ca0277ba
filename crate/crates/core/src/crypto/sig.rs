//! Schnorr signatures over the repository group.
//!
//! Signatures are the (challenge, response) scalar pair. Nonces are derived
//! deterministically from the secret key and message, so signing the same
//! message twice yields identical bytes, which the deterministic simulator
//! relies on.

use std::cell::RefCell;
use std::collections::HashMap;

use curve25519_dalek::ristretto::RistrettoPoint;
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand_core::RngCore;

use crate::crypto::group::{g, hash_to_scalar, random_scalar};
use crate::crypto::hash::{domain, hash_parts, Digest};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VerifyKey(pub [u8; 32]);

impl VerifyKey {
    fn point(&self) -> Option<RistrettoPoint> {
        curve25519_dalek::ristretto::CompressedRistretto(self.0).decompress()
    }
}

impl std::fmt::Debug for VerifyKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VerifyKey({})", &hex::encode(self.0)[..16])
    }
}

impl Encode for VerifyKey {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.fixed32(tag::POINT, &self.0)
    }
}

impl Decode for VerifyKey {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        // Stored compressed; validity is checked at verification time so a
        // hostile key in a log can still be decoded and reported.
        Ok(VerifyKey(d.fixed32(tag::POINT)?))
    }
}

#[derive(Clone)]
pub struct SigningKey {
    sk: Scalar,
    vk: VerifyKey,
}

impl SigningKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let sk = random_scalar(rng);
        let vk = VerifyKey((g() * sk).compress().to_bytes());
        SigningKey { sk, vk }
    }

    pub fn verify_key(&self) -> VerifyKey {
        self.vk
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let k = hash_to_scalar(
            domain::SIG_NONCE,
            &[&self.sk.to_bytes()[..], message].concat(),
        );
        let r_point = g() * k;
        let e = challenge(&r_point, &self.vk, message);
        Signature {
            challenge: e,
            response: k - e * self.sk,
        }
    }
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey(vk={:?})", self.vk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub challenge: Scalar,
    pub response: Scalar,
}

impl Encode for Signature {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::SIGNATURE, |e| {
            self.challenge.encode_into(e)?;
            self.response.encode_into(e)
        })
    }
}

impl Decode for Signature {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::SIGNATURE, |d| {
            Ok(Signature {
                challenge: Scalar::decode_from(d)?,
                response: Scalar::decode_from(d)?,
            })
        })
    }
}

fn challenge(r_point: &RistrettoPoint, vk: &VerifyKey, message: &[u8]) -> Scalar {
    hash_to_scalar(
        domain::SIG_CHAL,
        &[&r_point.compress().to_bytes()[..], &vk.0[..], message].concat(),
    )
}

/// Pure verification. Malformed keys verify nothing.
pub fn verify(vk: &VerifyKey, message: &[u8], sig: &Signature) -> bool {
    let Some(pk) = vk.point() else {
        return false;
    };
    if pk == RistrettoPoint::identity() {
        return false;
    }
    let r_point = g() * sig.response + pk * sig.challenge;
    challenge(&r_point, vk, message) == sig.challenge
}

thread_local! {
    static VERIFY_MEMO: RefCell<HashMap<Digest, bool>> = RefCell::new(HashMap::new());
}

const MEMO_CAP: usize = 1 << 20;

/// Verification with a thread-local memo. `verify` is pure, so caching by
/// (key, message, signature) digest is observationally identical; the
/// simulator re-checks the same broadcast signatures at every node and this
/// keeps that from dominating the run time.
pub fn verify_cached(vk: &VerifyKey, message: &[u8], sig: &Signature) -> bool {
    let key = hash_parts(
        domain::MEMO,
        &[
            &vk.0,
            &sig.challenge.to_bytes(),
            &sig.response.to_bytes(),
            message,
        ],
    );
    VERIFY_MEMO.with(|memo| {
        if let Some(&hit) = memo.borrow().get(&key) {
            return hit;
        }
        let result = verify(vk, message, sig);
        let mut memo = memo.borrow_mut();
        if memo.len() >= MEMO_CAP {
            memo.clear();
        }
        memo.insert(key, result);
        result
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha12Rng;
    use rand_core::SeedableRng;

    fn key(seed: u64) -> SigningKey {
        SigningKey::generate(&mut ChaCha12Rng::seed_from_u64(seed))
    }

    #[test]
    fn sign_verify_round_trip() {
        let sk = key(1);
        let sig = sk.sign(b"hello");
        assert!(verify(&sk.verify_key(), b"hello", &sig));
    }

    #[test]
    fn deterministic_signatures() {
        let sk = key(2);
        assert_eq!(sk.sign(b"m"), sk.sign(b"m"));
        assert_ne!(sk.sign(b"m"), sk.sign(b"n"));
    }

    #[test]
    fn wrong_message_or_key_rejected() {
        let sk = key(3);
        let other = key(4);
        let sig = sk.sign(b"payload");
        assert!(!verify(&sk.verify_key(), b"tampered", &sig));
        assert!(!verify(&other.verify_key(), b"payload", &sig));
    }

    #[test]
    fn random_signatures_never_verify() {
        // Forgery sweep: random (challenge, response) pairs against a fixed
        // key and message.
        let sk = key(5);
        let vk = sk.verify_key();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let forged = Signature {
                challenge: random_scalar(&mut rng),
                response: random_scalar(&mut rng),
            };
            assert!(!verify(&vk, b"target", &forged));
        }
    }

    #[test]
    fn malformed_key_rejected() {
        let sk = key(6);
        let sig = sk.sign(b"m");
        assert!(!verify(&VerifyKey([0xFF; 32]), b"m", &sig));
    }

    #[test]
    fn cached_verify_agrees_with_pure() {
        let sk = key(7);
        let sig = sk.sign(b"m");
        for _ in 0..3 {
            assert_eq!(
                verify_cached(&sk.verify_key(), b"m", &sig),
                verify(&sk.verify_key(), b"m", &sig)
            );
            assert_eq!(
                verify_cached(&sk.verify_key(), b"x", &sig),
                verify(&sk.verify_key(), b"x", &sig)
            );
        }
    }

    #[test]
    fn signature_encoding_round_trip() {
        let sig = key(8).sign(b"bytes");
        assert_eq!(Signature::decode(&sig.encode()).unwrap(), sig);
    }
}
