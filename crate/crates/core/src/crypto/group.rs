//! Prime-order group backing every public-key primitive.
//!
//! The group is ristretto255. `g` is the standard basepoint; `h` is a second
//! generator derived by hashing a domain tag to the group, so nobody knows
//! its discrete log with respect to `g`. Both are fixed for a build and named
//! in the config banner every run writes out.

use std::sync::OnceLock;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand_core::RngCore;

use crate::crypto::hash::{domain, hash_parts};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

/// One-line description of the crypto kernel, for config banners.
pub const GROUP_DESCRIPTION: &str = "ristretto255, schnorr signatures, sha-256";

/// The standard basepoint.
pub fn g() -> RistrettoPoint {
    RISTRETTO_BASEPOINT_POINT
}

/// Second generator with unknown discrete log relative to `g`.
pub fn h() -> RistrettoPoint {
    static H: OnceLock<RistrettoPoint> = OnceLock::new();
    *H.get_or_init(|| RistrettoPoint::from_uniform_bytes(&wide_bytes(domain::GROUP_H, b"")))
}

/// 64 uniform-ish bytes from two tagged hash invocations, the input shape
/// `from_uniform_bytes` and `from_bytes_mod_order_wide` want.
fn wide_bytes(tag: &str, payload: &[u8]) -> [u8; 64] {
    let lo = hash_parts(tag, &[&[1u8], payload]);
    let hi = hash_parts(tag, &[&[2u8], payload]);
    let mut out = [0u8; 64];
    out[..32].copy_from_slice(&lo.0);
    out[32..].copy_from_slice(&hi.0);
    out
}

/// Hash arbitrary bytes to a scalar, with negligible bias.
pub fn hash_to_scalar(tag: &str, payload: &[u8]) -> Scalar {
    Scalar::from_bytes_mod_order_wide(&wide_bytes(domain::SCALAR_WIDE, &{
        let mut buf = Vec::with_capacity(tag.len() + 1 + payload.len());
        buf.push(tag.len() as u8);
        buf.extend_from_slice(tag.as_bytes());
        buf.extend_from_slice(payload);
        buf
    }))
}

/// Uniform random scalar from any RNG.
pub fn random_scalar(rng: &mut impl RngCore) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

pub fn encode_point(e: &mut Enc, p: &RistrettoPoint) -> Result<(), EncodeError> {
    e.fixed32(tag::POINT, &p.compress().to_bytes())
}

pub fn decode_point(d: &mut Dec<'_>) -> Result<RistrettoPoint, DecodeError> {
    let raw = d.fixed32(tag::POINT)?;
    CompressedRistretto(raw)
        .decompress()
        .ok_or(DecodeError::BadGroupElement)
}

pub fn encode_scalar(e: &mut Enc, s: &Scalar) -> Result<(), EncodeError> {
    e.fixed32(tag::SCALAR, &s.to_bytes())
}

pub fn decode_scalar(d: &mut Dec<'_>) -> Result<Scalar, DecodeError> {
    let raw = d.fixed32(tag::SCALAR)?;
    Option::<Scalar>::from(Scalar::from_canonical_bytes(raw)).ok_or(DecodeError::BadGroupElement)
}

impl Encode for RistrettoPoint {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        encode_point(e, self)
    }
}

impl Decode for RistrettoPoint {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        decode_point(d)
    }
}

impl Encode for Scalar {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        encode_scalar(e, self)
    }
}

impl Decode for Scalar {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        decode_scalar(d)
    }
}
