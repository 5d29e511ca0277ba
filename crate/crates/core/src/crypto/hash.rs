//! Domain-separated hashing.
//!
//! Every digest in the system is SHA-256 over `tag || payload` where `tag`
//! names the domain. The tag set is prefix-free, so two distinct tags can
//! never produce the same input bytes for the same payload.

use sha2::{Digest as _, Sha256};

use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

/// Domain tags in use. Kept in one place so the prefix-free property can be
/// checked by a test instead of by inspection.
pub mod domain {
    pub const LEAF: &str = "leaf";
    pub const NODE: &str = "node";
    pub const OBJECT: &str = "object";
    pub const TRACE: &str = "trace";
    pub const TX: &str = "tx";
    pub const CHAIN: &str = "chain";
    pub const GENESIS: &str = "genesis";
    pub const SIG_NONCE: &str = "sig-nonce";
    pub const SIG_CHAL: &str = "sig-chal";
    pub const ZK_BINARY: &str = "zk-binary";
    pub const ZK_SUM_ONE: &str = "zk-sumone";
    pub const ZK_ZERO_INIT: &str = "zk-zeroinit";
    pub const ZK_DECRYPT: &str = "zk-decrypt";
    pub const ZK_BILL: &str = "zk-bill";
    pub const GROUP_H: &str = "group-h";
    pub const SCALAR_WIDE: &str = "scalar-wide";
    pub const RNG_STREAM: &str = "rng-stream";
    pub const MEMO: &str = "memo";
    pub const SEQ_ITEM: &str = "seq-item";
    pub const CONTRACT: &str = "contract";

    pub const ALL: &[&str] = &[
        LEAF, NODE, OBJECT, TRACE, TX, CHAIN, GENESIS, SIG_NONCE, SIG_CHAL, ZK_BINARY, ZK_SUM_ONE,
        ZK_ZERO_INIT, ZK_DECRYPT, ZK_BILL, GROUP_H, SCALAR_WIDE, RNG_STREAM, MEMO, SEQ_ITEM,
        CONTRACT,
    ];
}

/// A 256-bit digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    /// The last 8 bytes interpreted as a big-endian integer. Shard placement
    /// keys off this value.
    pub fn low_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[24..32].try_into().unwrap())
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl std::fmt::Display for Digest {
    /// Full lowercase hex, the form used in reports and logs.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Digest {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.fixed32(tag::DIGEST, &self.0)
    }
}

impl Decode for Digest {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(d.fixed32(tag::DIGEST)?))
    }
}

/// SHA-256 over `tag || payload`.
pub fn hash(tag: &str, payload: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(payload);
    Digest(h.finalize().into())
}

/// Same, for payloads assembled from several slices without copying.
pub fn hash_parts(tag: &str, parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}
