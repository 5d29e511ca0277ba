//! The built-in smart contracts.
//!
//! Each contract is a pair: procedures that clients run to build traces
//! (these may consume secrets — signing keys, blindings, plaintexts), and a
//! pure checker registered here that anyone can run over the trace's public
//! content to confirm an honest procedure could have produced it.
//!
//! Two contracts manage the system itself: `manage-shards` tracks shard
//! membership and `manage-contracts` registers the rest. Each contract owns
//! a singleton `Token` object created at genesis; creation procedures
//! consume and reissue it, which both serializes them and proves lineage.

pub mod cscoin;
pub mod manage_contracts;
pub mod manage_shards;
pub mod smet;
pub mod svote;

use crate::crypto::hash::{domain, hash};
use crate::crypto::sig::{Signature, VerifyKey};
use crate::crypto::zkp::ZkProof;
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{genesis_object, ContractId, Object, TypeTag};
use crate::validity::{CheckerContext, CheckerRegistry};

/// Wire tag of a proof variant, for mismatch diagnostics when parameters
/// demand one specific proof family.
pub(crate) fn proof_tag(p: &ZkProof) -> u8 {
    match p {
        ZkProof::BinaryVote(_) => tag::PROOF_BINARY_VOTE,
        ZkProof::SumOne(_) => tag::PROOF_SUM_ONE,
        ZkProof::ZeroInit(_) => tag::PROOF_ZERO_INIT,
        ZkProof::Decryption(_) => tag::PROOF_DECRYPTION,
        ZkProof::BillOpening(_) => tag::PROOF_BILL_OPENING,
    }
}

pub const MANAGE_SHARDS: &str = "manage-shards";
pub const MANAGE_CONTRACTS: &str = "manage-contracts";
pub const CSCOIN: &str = "cscoin";
pub const SMET: &str = "smet";
pub const SVOTE: &str = "svote";

/// Every contract this build can check, in genesis-token order.
pub const KNOWN: &[&str] = &[MANAGE_SHARDS, MANAGE_CONTRACTS, CSCOIN, SMET, SVOTE];

/// Contract identifiers are digests of their registry name, so every party
/// derives the same id without coordination.
pub fn contract_id(name: &str) -> ContractId {
    ContractId(hash(domain::CONTRACT, name.as_bytes()))
}

/// The singleton-token type of a contract.
pub fn token_type(name: &str) -> TypeTag {
    TypeTag::new(contract_id(name), "Token")
}

/// The registry with all built-in checkers installed.
pub fn standard_registry() -> CheckerRegistry {
    let mut reg = CheckerRegistry::new();
    reg.register(manage_shards::contract_checker());
    reg.register(manage_contracts::contract_checker());
    reg.register(cscoin::contract_checker());
    reg.register(smet::contract_checker());
    reg.register(svote::contract_checker());
    reg
}

/// One genesis token per known contract. Token for `KNOWN[i]` sits at
/// genesis index `i`.
pub fn genesis_tokens(seed: u64) -> Vec<Object> {
    KNOWN
        .iter()
        .enumerate()
        .map(|(i, name)| genesis_object(seed, i as u64, token_type(name), Vec::new()))
        .collect()
}

/// A key/signature pair as carried in contract parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySig {
    pub key: VerifyKey,
    pub sig: Signature,
}

impl Encode for KeySig {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::SIG_ENTRY, |e| {
            self.key.encode_into(e)?;
            self.sig.encode_into(e)
        })
    }
}

impl Decode for KeySig {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::SIG_ENTRY, |d| {
            Ok(KeySig {
                key: VerifyKey::decode_from(d)?,
                sig: Signature::decode_from(d)?,
            })
        })
    }
}

/// The objects in `objs` whose type name matches.
pub(crate) fn of_type<'a>(objs: &'a [Object], name: &str) -> Vec<&'a Object> {
    objs.iter().filter(|o| o.type_tag.name == name).collect()
}

/// The single object of the given type name, if there is exactly one.
pub(crate) fn exactly_one<'a>(objs: &'a [Object], name: &str) -> Option<&'a Object> {
    let found = of_type(objs, name);
    if found.len() == 1 {
        Some(found[0])
    } else {
        None
    }
}

/// Common shape for creation procedures: one consumed token, one reissued
/// token among the outputs, nothing read by reference.
pub(crate) fn token_reissued(ctx: &CheckerContext<'_>) -> bool {
    ctx.references.is_empty()
        && exactly_one(ctx.inputs, "Token").is_some_and(|t| t.payload.is_empty())
        && exactly_one(ctx.outputs, "Token").is_some_and(|t| t.payload.is_empty())
}
