//! Shard membership management.
//!
//! A `Shard` object holds the member roster: node names, network addresses,
//! and verification keys. Rosters change only with supermajority consent
//! (`2f + 1` member signatures over the new roster) or with hard evidence of
//! misbehavior — two contradictory signed protocol statements by one member,
//! which no honest node can produce.

use crate::crypto::sig::{verify, SigningKey, VerifyKey};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{Object, ObjectId, OutputSpec, Trace, TypeTag};
use crate::orderer::fault_threshold;
use crate::sbac::SignedPrepared;
use crate::validity::{CheckerContext, ContractChecker};

use super::{contract_id, exactly_one, token_reissued, KeySig, MANAGE_SHARDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDescriptor {
    pub name: String,
    pub address: String,
    pub key: VerifyKey,
}

impl Encode for NodeDescriptor {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::DESCRIPTOR, |e| {
            e.string(&self.name)?;
            e.string(&self.address)?;
            self.key.encode_into(e)
        })
    }
}

impl Decode for NodeDescriptor {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::DESCRIPTOR, |d| {
            Ok(NodeDescriptor {
                name: d.string()?,
                address: d.string()?,
                key: VerifyKey::decode_from(d)?,
            })
        })
    }
}

/// The payload of a `Shard` object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardMeta {
    pub descriptors: Vec<NodeDescriptor>,
}

impl ShardMeta {
    /// Non-empty roster, no key listed twice.
    pub fn well_formed(&self) -> bool {
        let keys: std::collections::BTreeSet<_> =
            self.descriptors.iter().map(|d| d.key).collect();
        !self.descriptors.is_empty() && keys.len() == self.descriptors.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = VerifyKey> + '_ {
        self.descriptors.iter().map(|d| d.key)
    }
}

impl Encode for ShardMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::SHARD_META, |e| e.list(&self.descriptors))
    }
}

impl Decode for ShardMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::SHARD_META, |d| {
            Ok(ShardMeta {
                descriptors: d.list()?,
            })
        })
    }
}

/// Parameters of `update`: member signatures approving the new roster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateParams {
    pub approvals: Vec<KeySig>,
}

impl Encode for UpdateParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_MS_UPDATE, |e| e.list(&self.approvals))
    }
}

impl Decode for UpdateParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_MS_UPDATE, |d| {
            Ok(UpdateParams {
                approvals: d.list()?,
            })
        })
    }
}

/// Parameters of `evict`: the offender and the contradictory statement pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvictParams {
    pub evicted: VerifyKey,
    pub first: SignedPrepared,
    pub second: SignedPrepared,
}

impl Encode for EvictParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_MS_EVICT, |e| {
            self.evicted.encode_into(e)?;
            self.first.encode_into(e)?;
            self.second.encode_into(e)
        })
    }
}

impl Decode for EvictParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_MS_EVICT, |d| {
            Ok(EvictParams {
                evicted: VerifyKey::decode_from(d)?,
                first: SignedPrepared::decode_from(d)?,
                second: SignedPrepared::decode_from(d)?,
            })
        })
    }
}

fn shard_type() -> TypeTag {
    TypeTag::new(contract_id(MANAGE_SHARDS), "Shard")
}

fn token_spec() -> OutputSpec {
    OutputSpec {
        type_tag: super::token_type(MANAGE_SHARDS),
        payload: Vec::new(),
    }
}

fn shard_spec(meta: &ShardMeta) -> OutputSpec {
    OutputSpec {
        type_tag: shard_type(),
        payload: meta.encode(),
    }
}

/// Found a shard: consume the singleton token, emit it back plus the roster.
pub fn create(token: &Object, descriptors: Vec<NodeDescriptor>) -> Trace {
    let meta = ShardMeta { descriptors };
    Trace::build(
        contract_id(MANAGE_SHARDS),
        "create",
        vec![token.id],
        vec![],
        vec![token_spec(), shard_spec(&meta)],
        vec![],
        vec![],
        vec![],
    )
}

/// The bytes members sign to approve replacing `shard`'s roster. Binding the
/// consumed object id makes each approval single-use.
pub fn update_intent(shard: &ObjectId, new_meta: &ShardMeta) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::INTENT_MS_UPDATE, |e| {
        shard.encode_into(e)?;
        new_meta.encode_into(e)
    })
    .expect("intent fits");
    e.into_bytes()
}

/// Replace the roster with approval signatures from current members.
pub fn update(shard: &Object, new_meta: ShardMeta, approvers: &[&SigningKey]) -> Trace {
    let intent = update_intent(&shard.id, &new_meta);
    let approvals = approvers
        .iter()
        .map(|k| KeySig {
            key: k.verify_key(),
            sig: k.sign(&intent),
        })
        .collect();
    Trace::build(
        contract_id(MANAGE_SHARDS),
        "update",
        vec![shard.id],
        vec![],
        vec![shard_spec(&new_meta)],
        UpdateParams { approvals }.encode(),
        vec![],
        vec![],
    )
}

/// Remove a member against whom a contradictory signed statement pair
/// exists.
pub fn evict(shard: &Object, first: SignedPrepared, second: SignedPrepared) -> Trace {
    let evicted = first.node;
    let old: ShardMeta = ShardMeta::decode(&shard.payload).expect("shard object payload");
    let new_meta = ShardMeta {
        descriptors: old
            .descriptors
            .into_iter()
            .filter(|d| d.key != evicted)
            .collect(),
    };
    Trace::build(
        contract_id(MANAGE_SHARDS),
        "evict",
        vec![shard.id],
        vec![],
        vec![shard_spec(&new_meta)],
        EvictParams {
            evicted,
            first,
            second,
        }
        .encode(),
        vec![],
        vec![],
    )
}

fn check_create(ctx: &CheckerContext<'_>) -> bool {
    if !token_reissued(ctx) || ctx.outputs.len() != 2 || !ctx.lparams.is_empty() {
        return false;
    }
    let Some(shard) = exactly_one(ctx.outputs, "Shard") else {
        return false;
    };
    ShardMeta::decode(&shard.payload).is_ok_and(|m| m.well_formed())
}

fn check_update(ctx: &CheckerContext<'_>) -> bool {
    let (Some(old_obj), Some(new_obj)) = (
        exactly_one(ctx.inputs, "Shard"),
        exactly_one(ctx.outputs, "Shard"),
    ) else {
        return false;
    };
    if ctx.inputs.len() != 1 || ctx.outputs.len() != 1 || !ctx.references.is_empty() {
        return false;
    }
    let (Ok(old), Ok(new)) = (
        ShardMeta::decode(&old_obj.payload),
        ShardMeta::decode(&new_obj.payload),
    ) else {
        return false;
    };
    let Ok(params) = UpdateParams::decode(ctx.lparams) else {
        return false;
    };
    if !new.well_formed() {
        return false;
    }
    let members: std::collections::BTreeSet<_> = old.keys().collect();
    let intent = update_intent(&old_obj.id, &new);
    let mut approved = std::collections::BTreeSet::new();
    for ks in &params.approvals {
        if members.contains(&ks.key) && verify(&ks.key, &intent, &ks.sig) {
            approved.insert(ks.key);
        }
    }
    // Supermajority of the roster being replaced.
    approved.len() >= 2 * fault_threshold(old.descriptors.len()) + 1
}

fn check_evict(ctx: &CheckerContext<'_>) -> bool {
    let (Some(old_obj), Some(new_obj)) = (
        exactly_one(ctx.inputs, "Shard"),
        exactly_one(ctx.outputs, "Shard"),
    ) else {
        return false;
    };
    if ctx.inputs.len() != 1 || ctx.outputs.len() != 1 || !ctx.references.is_empty() {
        return false;
    }
    let (Ok(old), Ok(new)) = (
        ShardMeta::decode(&old_obj.payload),
        ShardMeta::decode(&new_obj.payload),
    ) else {
        return false;
    };
    let Ok(params) = EvictParams::decode(ctx.lparams) else {
        return false;
    };
    // The evidence must be contradictory, by the named member.
    if params.first.node != params.evicted || !params.first.contradicts(&params.second) {
        return false;
    }
    if !old.keys().any(|k| k == params.evicted) {
        return false;
    }
    let expected: Vec<NodeDescriptor> = old
        .descriptors
        .into_iter()
        .filter(|d| d.key != params.evicted)
        .collect();
    new.descriptors == expected && new.well_formed()
}

fn checker(ctx: &CheckerContext<'_>) -> bool {
    match ctx.procedure {
        "create" => check_create(ctx),
        "update" => check_update(ctx),
        "evict" => check_evict(ctx),
        _ => false,
    }
}

pub fn contract_checker() -> ContractChecker {
    ContractChecker {
        contract: contract_id(MANAGE_SHARDS),
        name: MANAGE_SHARDS.to_string(),
        types: ["Token", "Shard"].iter().map(|s| s.to_string()).collect(),
        checker,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::genesis_tokens;
    use crate::model::{ActiveSet, Transaction};
    use crate::shard::Decision;
    use crate::validity::{validate_transaction, AbortReason};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys(n: usize) -> Vec<SigningKey> {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        (0..n).map(|_| SigningKey::generate(&mut rng)).collect()
    }

    fn descriptors(keys: &[SigningKey]) -> Vec<NodeDescriptor> {
        keys.iter()
            .enumerate()
            .map(|(i, k)| NodeDescriptor {
                name: format!("node-{i}"),
                address: format!("10.0.0.{i}:9000"),
                key: k.verify_key(),
            })
            .collect()
    }

    fn ms_token() -> Object {
        genesis_tokens(7)[0].clone()
    }

    fn run(trace: Trace, alpha: &ActiveSet) -> Result<ActiveSet, AbortReason> {
        validate_transaction(
            &Transaction::new(vec![trace]),
            alpha,
            &crate::contracts::standard_registry(),
        )
    }

    fn created_shard() -> (Object, Vec<SigningKey>, ActiveSet) {
        let ks = keys(4);
        let token = ms_token();
        let alpha = ActiveSet::from_objects([token.clone()]);
        let trace = create(&token, descriptors(&ks));
        let shard = trace.outputs[1].clone();
        let after = run(trace, &alpha).expect("create validates");
        (shard, ks, after)
    }

    #[test]
    fn create_emits_roster_and_reissues_token() {
        let (shard, ks, after) = created_shard();
        assert_eq!(after.len(), 2);
        let meta = ShardMeta::decode(&shard.payload).unwrap();
        assert_eq!(meta.descriptors.len(), ks.len());
        assert!(meta.well_formed());
        assert!(after.get(&shard.id).is_some());
    }

    #[test]
    fn create_rejects_empty_or_duplicate_rosters() {
        let ks = keys(2);
        let token = ms_token();
        let alpha = ActiveSet::from_objects([token.clone()]);
        assert!(run(create(&token, vec![]), &alpha).is_err());
        let mut dup = descriptors(&ks);
        dup.push(dup[0].clone());
        assert!(run(create(&token, dup), &alpha).is_err());
    }

    #[test]
    fn update_needs_two_f_plus_one_member_signatures() {
        let (shard, ks, alpha) = created_shard();
        let new_keys = keys(5);
        let new_meta = ShardMeta {
            descriptors: descriptors(&new_keys[..4]),
        };
        // n = 4 so f = 1: three approvals pass, two fail.
        let enough: Vec<&SigningKey> = ks[..3].iter().collect();
        assert!(run(update(&shard, new_meta.clone(), &enough), &alpha).is_ok());
        let short: Vec<&SigningKey> = ks[..2].iter().collect();
        assert!(run(update(&shard, new_meta.clone(), &short), &alpha).is_err());
        // Outsider signatures do not count toward the threshold.
        let outsiders: Vec<&SigningKey> =
            ks[..2].iter().chain(new_keys[4..5].iter()).collect();
        assert!(run(update(&shard, new_meta, &outsiders), &alpha).is_err());
    }

    #[test]
    fn update_approvals_bind_the_consumed_roster() {
        let (shard, ks, alpha) = created_shard();
        let new_meta = ShardMeta {
            descriptors: descriptors(&ks[..3]),
        };
        let approvers: Vec<&SigningKey> = ks[..3].iter().collect();
        let signed = update(&shard, new_meta, &approvers);
        // Divert the approvals to a different roster: signatures no longer
        // match the intent for the roster actually emitted.
        let other = ShardMeta {
            descriptors: descriptors(&ks[..2]),
        };
        let diverted = Trace::build(
            contract_id(MANAGE_SHARDS),
            "update",
            vec![shard.id],
            vec![],
            vec![shard_spec(&other)],
            signed.lparams.clone(),
            vec![],
            vec![],
        );
        assert!(run(diverted, &alpha).is_err());
    }

    #[test]
    fn evict_removes_the_double_signer() {
        let (shard, ks, alpha) = created_shard();
        let txd = crate::crypto::hash::hash("tx", b"equivocation");
        let first = SignedPrepared::sign(&ks[1], txd, 0, Decision::Commit);
        let second = SignedPrepared::sign(
            &ks[1],
            txd,
            0,
            Decision::Abort(AbortReason::OutputsWithoutInputs),
        );
        let trace = evict(&shard, first, second);
        let after = run(trace.clone(), &alpha).expect("evict validates");
        let successor = after.get(&trace.outputs[0].id).unwrap();
        let meta = ShardMeta::decode(&successor.payload).unwrap();
        assert_eq!(meta.descriptors.len(), 3);
        assert!(!meta.keys().any(|k| k == ks[1].verify_key()));
    }

    #[test]
    fn evict_rejects_consistent_or_foreign_evidence() {
        let (shard, ks, alpha) = created_shard();
        let txd = crate::crypto::hash::hash("tx", b"no-equivocation");
        // Two identical statements: no contradiction.
        let same = SignedPrepared::sign(&ks[1], txd, 0, Decision::Commit);
        assert!(run(evict(&shard, same.clone(), same), &alpha).is_err());
        // A contradiction by a non-member proves nothing about this roster.
        let outsider = keys(6).pop().unwrap();
        let a = SignedPrepared::sign(&outsider, txd, 0, Decision::Commit);
        let b = SignedPrepared::sign(
            &outsider,
            txd,
            0,
            Decision::Abort(AbortReason::OutputsWithoutInputs),
        );
        assert!(run(evict(&shard, a, b), &alpha).is_err());
    }

    #[test]
    fn meta_encoding_round_trips() {
        let ks = keys(3);
        let meta = ShardMeta {
            descriptors: descriptors(&ks),
        };
        assert_eq!(ShardMeta::decode(&meta.encode()).unwrap(), meta);
    }
}
