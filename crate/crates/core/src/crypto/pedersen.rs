//! Pedersen commitments: `C = g^m · h^r`.
//!
//! Additively homomorphic, hiding under a random blinding, binding under the
//! discrete log assumption on (g, h).

use std::ops::Add;

use curve25519_dalek::ristretto::RistrettoPoint;
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::MultiscalarMul;
use rand_core::RngCore;

use crate::crypto::group::{decode_point, encode_point, g, h, random_scalar};
use crate::encoding::{Dec, Decode, DecodeError, Enc, Encode, EncodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment(pub RistrettoPoint);

impl Encode for Commitment {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        encode_point(e, &self.0)
    }
}

impl Decode for Commitment {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        Ok(Commitment(decode_point(d)?))
    }
}

impl Add for Commitment {
    type Output = Commitment;

    fn add(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 + rhs.0)
    }
}

/// Commit to a scalar message under blinding `r`.
pub fn commit_scalar(m: &Scalar, r: &Scalar) -> Commitment {
    Commitment(RistrettoPoint::multiscalar_mul([m, r], [g(), h()]))
}

/// Commit to an integer message under blinding `r`.
pub fn commit(value: u64, r: &Scalar) -> Commitment {
    commit_scalar(&Scalar::from(value), r)
}

pub fn random_blinding(rng: &mut impl RngCore) -> Scalar {
    random_scalar(rng)
}

/// Check that `c` opens to `(value, r)`.
pub fn verify_opening(c: &Commitment, value: u64, r: &Scalar) -> bool {
    commit(value, r) == *c
}
