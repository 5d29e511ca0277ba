//! Crypto kernel: hashing, Merkle trees, Schnorr signatures, Pedersen
//! commitments, exponential ElGamal, and the sigma protocols built on them.

pub mod elgamal;
pub mod group;
pub mod hash;
pub mod merkle;
pub mod pedersen;
pub mod sig;
pub mod zkp;

pub use hash::{hash, hash_parts, Digest};
