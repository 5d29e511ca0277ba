//! Exponential ElGamal: additively homomorphic encryption of small integers.
//!
//! A ciphertext is `(a, b) = (g^r, g^m · y^r)`. Adding ciphertexts
//! componentwise adds plaintexts. Decryption recovers `g^m` and walks a
//! lookup table, so plaintexts must stay below a caller-chosen bound of at
//! most 2^16.

use std::ops::Add;

use curve25519_dalek::ristretto::RistrettoPoint;
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand_core::RngCore;
use thiserror::Error;

use crate::crypto::group::{decode_point, encode_point, g, random_scalar};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

/// Hard ceiling on the decryption table, per the kernel contract.
pub const MAX_PLAINTEXT_BOUND: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ElgamalError {
    #[error("plaintext not found within bound {bound}")]
    PlaintextOutOfRange { bound: u64 },
    #[error("bound {0} exceeds the 2^16 table ceiling")]
    BoundTooLarge(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElgamalPublic(pub RistrettoPoint);

impl Encode for ElgamalPublic {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        encode_point(e, &self.0)
    }
}

impl Decode for ElgamalPublic {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        Ok(ElgamalPublic(decode_point(d)?))
    }
}

#[derive(Clone)]
pub struct ElgamalKeypair {
    dk: Scalar,
    ek: ElgamalPublic,
}

impl ElgamalKeypair {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let dk = random_scalar(rng);
        ElgamalKeypair {
            dk,
            ek: ElgamalPublic(g() * dk),
        }
    }

    pub fn public(&self) -> ElgamalPublic {
        self.ek
    }

    pub fn secret(&self) -> &Scalar {
        &self.dk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ciphertext {
    pub a: RistrettoPoint,
    pub b: RistrettoPoint,
}

impl Ciphertext {
    /// Encryption of zero with zero randomness: the additive identity.
    pub fn zero() -> Ciphertext {
        Ciphertext {
            a: RistrettoPoint::identity(),
            b: RistrettoPoint::identity(),
        }
    }
}

impl Add for Ciphertext {
    type Output = Ciphertext;

    fn add(self, rhs: Ciphertext) -> Ciphertext {
        Ciphertext {
            a: self.a + rhs.a,
            b: self.b + rhs.b,
        }
    }
}

impl Encode for Ciphertext {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CIPHERTEXT, |e| {
            encode_point(e, &self.a)?;
            encode_point(e, &self.b)
        })
    }
}

impl Decode for Ciphertext {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CIPHERTEXT, |d| {
            Ok(Ciphertext {
                a: decode_point(d)?,
                b: decode_point(d)?,
            })
        })
    }
}

pub fn encrypt(ek: &ElgamalPublic, m: u64, r: &Scalar) -> Ciphertext {
    Ciphertext {
        a: g() * r,
        b: g() * Scalar::from(m) + ek.0 * r,
    }
}

pub fn encrypt_rand(ek: &ElgamalPublic, m: u64, rng: &mut impl RngCore) -> (Ciphertext, Scalar) {
    let r = random_scalar(rng);
    (encrypt(ek, m, &r), r)
}

/// Recover the plaintext by scanning `g^0 .. g^bound` against `b · a^{-dk}`.
pub fn decrypt(dk: &Scalar, ct: &Ciphertext, bound: u64) -> Result<u64, ElgamalError> {
    if bound > MAX_PLAINTEXT_BOUND {
        return Err(ElgamalError::BoundTooLarge(bound));
    }
    let target = ct.b - ct.a * dk;
    let mut acc = RistrettoPoint::identity();
    let base = g();
    for m in 0..=bound {
        if acc == target {
            return Ok(m);
        }
        acc += base;
    }
    Err(ElgamalError::PlaintextOutOfRange { bound })
}
