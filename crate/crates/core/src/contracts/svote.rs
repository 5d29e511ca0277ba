//! Privacy-preserving voting.
//!
//! An election object carries one ElGamal ciphertext per option, all under
//! the tally authority's key. A ballot homomorphically adds an encryption of
//! a unit vector to the running totals; zero-knowledge proofs pin each added
//! ciphertext to {0, 1} and their sum to exactly one, so a voter can neither
//! stuff multiple votes into one ballot nor subtract from an option. Voters
//! are struck from the roll as they vote. The final tally decrypts the
//! totals with per-option decryption proofs, so the counts are verifiable
//! without ever revealing who voted for what.

use curve25519_dalek::scalar::Scalar;
use rand_chacha::rand_core::RngCore;

use crate::crypto::elgamal::{encrypt_rand, Ciphertext, ElgamalPublic};
use crate::crypto::sig::{verify, Signature, SigningKey, VerifyKey};
use crate::crypto::zkp::{
    prove_binary_vote, prove_decryption, prove_sum_one, prove_zero_init, verify_binary_vote,
    verify_decryption, verify_sum_one, verify_zero_init, BinaryVoteProof, BinaryVoteStatement,
    DecryptionProof, DecryptionStatement, SumOneProof, SumOneStatement, ZeroInitProof,
    ZeroInitStatement, ZkProof,
};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{Object, ObjectId, OutputSpec, Trace, TypeTag};
use crate::validity::{CheckerContext, ContractChecker};

use super::{contract_id, token_reissued, SVOTE};

/// Payload of a `Vote` (running election) object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMeta {
    pub authority: VerifyKey,
    pub options: Vec<String>,
    /// Voters still entitled to cast a ballot.
    pub voters: Vec<VerifyKey>,
    pub tally_key: ElgamalPublic,
    /// One running encrypted total per option.
    pub cts: Vec<Ciphertext>,
    /// Ballots cast so far; the decryption bound for the tally.
    pub cast: u64,
}

impl Encode for VoteMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::VOTE, |e| {
            self.authority.encode_into(e)?;
            e.list(&self.options)?;
            e.list(&self.voters)?;
            self.tally_key.encode_into(e)?;
            e.list(&self.cts)?;
            e.u64(self.cast)
        })
    }
}

impl Decode for VoteMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::VOTE, |d| {
            Ok(VoteMeta {
                authority: VerifyKey::decode_from(d)?,
                options: d.list()?,
                voters: d.list()?,
                tally_key: ElgamalPublic::decode_from(d)?,
                cts: d.list()?,
                cast: d.u64()?,
            })
        })
    }
}

/// Payload of a `Tally` (closed election) object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyMeta {
    pub options: Vec<String>,
    pub counts: Vec<u64>,
}

impl Encode for TallyMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::TALLY, |e| {
            e.list(&self.options)?;
            e.list(&self.counts)
        })
    }
}

impl Decode for TallyMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::TALLY, |d| {
            Ok(TallyMeta {
                options: d.list()?,
                counts: d.list()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateElectionParams {
    pub sig: Signature,
    /// One zero-encryption proof per initial total.
    pub proofs: Vec<ZeroInitProof>,
}

impl Encode for CreateElectionParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_SVOTE_CREATE, |e| {
            self.sig.encode_into(e)?;
            let wrapped: Vec<ZkProof> = self.proofs.iter().map(|p| ZkProof::ZeroInit(*p)).collect();
            e.list(&wrapped)
        })
    }
}

impl Decode for CreateElectionParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_SVOTE_CREATE, |d| {
            let sig = Signature::decode_from(d)?;
            let wrapped: Vec<ZkProof> = d.list()?;
            let proofs = wrapped
                .into_iter()
                .map(|p| match p {
                    ZkProof::ZeroInit(p) => Ok(p),
                    other => Err(DecodeError::UnexpectedTag {
                        expected: tag::PROOF_ZERO_INIT,
                        found: super::proof_tag(&other),
                    }),
                })
                .collect::<Result<_, _>>()?;
            Ok(CreateElectionParams { sig, proofs })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallotParams {
    pub voter: VerifyKey,
    /// The encrypted unit vector added to the running totals.
    pub cts: Vec<Ciphertext>,
    pub binary: Vec<BinaryVoteProof>,
    pub sum: SumOneProof,
    pub sig: Signature,
}

impl Encode for BallotParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_SVOTE_VOTE, |e| {
            self.voter.encode_into(e)?;
            e.list(&self.cts)?;
            let binary: Vec<ZkProof> = self.binary.iter().map(|p| ZkProof::BinaryVote(*p)).collect();
            e.list(&binary)?;
            ZkProof::SumOne(self.sum).encode_into(e)?;
            self.sig.encode_into(e)
        })
    }
}

impl Decode for BallotParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_SVOTE_VOTE, |d| {
            let voter = VerifyKey::decode_from(d)?;
            let cts = d.list()?;
            let wrapped: Vec<ZkProof> = d.list()?;
            let binary = wrapped
                .into_iter()
                .map(|p| match p {
                    ZkProof::BinaryVote(p) => Ok(p),
                    other => Err(DecodeError::UnexpectedTag {
                        expected: tag::PROOF_BINARY_VOTE,
                        found: super::proof_tag(&other),
                    }),
                })
                .collect::<Result<_, _>>()?;
            let sum = match ZkProof::decode_from(d)? {
                ZkProof::SumOne(p) => p,
                other => {
                    return Err(DecodeError::UnexpectedTag {
                        expected: tag::PROOF_SUM_ONE,
                        found: super::proof_tag(&other),
                    })
                }
            };
            let sig = Signature::decode_from(d)?;
            Ok(BallotParams {
                voter,
                cts,
                binary,
                sum,
                sig,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyParams {
    pub proofs: Vec<DecryptionProof>,
}

impl Encode for TallyParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_SVOTE_TALLY, |e| {
            let wrapped: Vec<ZkProof> = self
                .proofs
                .iter()
                .map(|p| ZkProof::Decryption(*p))
                .collect();
            e.list(&wrapped)
        })
    }
}

impl Decode for TallyParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_SVOTE_TALLY, |d| {
            let wrapped: Vec<ZkProof> = d.list()?;
            let proofs = wrapped
                .into_iter()
                .map(|p| match p {
                    ZkProof::Decryption(p) => Ok(p),
                    other => Err(DecodeError::UnexpectedTag {
                        expected: tag::PROOF_DECRYPTION,
                        found: super::proof_tag(&other),
                    }),
                })
                .collect::<Result<_, _>>()?;
            Ok(TallyParams { proofs })
        })
    }
}

fn vote_type() -> TypeTag {
    TypeTag::new(contract_id(SVOTE), "Vote")
}

fn tally_type() -> TypeTag {
    TypeTag::new(contract_id(SVOTE), "Tally")
}

fn vote_spec(meta: &VoteMeta) -> OutputSpec {
    OutputSpec {
        type_tag: vote_type(),
        payload: meta.encode(),
    }
}

/// What the election authority signs: the consumed token id and the full
/// election definition.
pub fn election_intent(
    token: &ObjectId,
    options: &[String],
    voters: &[VerifyKey],
    tally_key: &ElgamalPublic,
) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::INTENT_ELECTION, |e| {
        token.encode_into(e)?;
        e.list(&options.to_vec())?;
        e.list(&voters.to_vec())?;
        tally_key.encode_into(e)
    })
    .expect("intent fits");
    e.into_bytes()
}

/// What a voter signs: the consumed election id (so a ballot cannot be
/// replayed against a successor) and the encrypted unit vector.
pub fn ballot_intent(vote: &ObjectId, cts: &[Ciphertext]) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::INTENT_BALLOT, |e| {
        vote.encode_into(e)?;
        e.list(&cts.to_vec())
    })
    .expect("intent fits");
    e.into_bytes()
}

/// Consume the voting token and open an election with every running total
/// provably encrypting zero.
pub fn create_election(
    token: &Object,
    authority: &SigningKey,
    options: &[String],
    voters: &[VerifyKey],
    tally_key: ElgamalPublic,
    rng: &mut impl RngCore,
) -> Trace {
    let mut cts = Vec::new();
    let mut proofs = Vec::new();
    for _ in options {
        let (ct, r) = encrypt_rand(&tally_key, 0, rng);
        let st = ZeroInitStatement {
            key: tally_key,
            ct,
            context: token.id.0,
        };
        proofs.push(prove_zero_init(&st, &r).expect("fresh encryption of zero"));
        cts.push(ct);
    }
    let sig = authority.sign(&election_intent(&token.id, options, voters, &tally_key));
    let meta = VoteMeta {
        authority: authority.verify_key(),
        options: options.to_vec(),
        voters: voters.to_vec(),
        tally_key,
        cts,
        cast: 0,
    };
    Trace::build(
        contract_id(SVOTE),
        "create",
        vec![token.id],
        vec![],
        vec![
            OutputSpec {
                type_tag: super::token_type(SVOTE),
                payload: Vec::new(),
            },
            vote_spec(&meta),
        ],
        CreateElectionParams { sig, proofs }.encode(),
        Vec::new(),
        vec![],
    )
}

/// Cast a ballot for `choice`. Consumes the election, emits the successor
/// with this voter struck off and the totals advanced. `None` if the voter
/// is not on the roll or `choice` is out of range.
pub fn add_vote(
    vote: &Object,
    voter: &SigningKey,
    choice: usize,
    rng: &mut impl RngCore,
) -> Option<Trace> {
    let mut meta = VoteMeta::decode(&vote.payload).ok()?;
    if choice >= meta.options.len() {
        return None;
    }
    let voter_key = voter.verify_key();
    let pos = meta.voters.iter().position(|v| *v == voter_key)?;

    let mut cts = Vec::new();
    let mut binary = Vec::new();
    let mut total_r = Scalar::from(0u64);
    for i in 0..meta.options.len() {
        let value = u64::from(i == choice);
        let (ct, r) = encrypt_rand(&meta.tally_key, value, rng);
        let st = BinaryVoteStatement {
            key: meta.tally_key,
            ct,
            context: vote.id.0,
        };
        binary.push(prove_binary_vote(&st, value, &r).expect("fresh binary encryption"));
        total_r += r;
        cts.push(ct);
    }
    let sum = prove_sum_one(
        &SumOneStatement {
            key: meta.tally_key,
            cts: cts.clone(),
            context: vote.id.0,
        },
        &total_r,
    )
    .expect("unit vector sums to one");
    let sig = voter.sign(&ballot_intent(&vote.id, &cts));

    meta.voters.remove(pos);
    for (total, add) in meta.cts.iter_mut().zip(&cts) {
        *total = *total + *add;
    }
    meta.cast += 1;
    Some(Trace::build(
        contract_id(SVOTE),
        "vote",
        vec![vote.id],
        vec![],
        vec![vote_spec(&meta)],
        BallotParams {
            voter: voter_key,
            cts,
            binary,
            sum,
            sig,
        }
        .encode(),
        Vec::new(),
        vec![],
    ))
}

/// Close the election: decrypt every running total and emit the tally with
/// decryption proofs. `None` if `secret` does not match the tally key or a
/// total exceeds the cast bound (impossible for honest histories).
pub fn tally(vote: &Object, secret: &Scalar) -> Option<Trace> {
    let meta = VoteMeta::decode(&vote.payload).ok()?;
    let mut counts = Vec::new();
    let mut proofs = Vec::new();
    for ct in &meta.cts {
        let count = crate::crypto::elgamal::decrypt(secret, ct, meta.cast).ok()?;
        let st = DecryptionStatement {
            key: meta.tally_key,
            ct: *ct,
            plaintext: count,
            context: vote.id.0,
        };
        proofs.push(prove_decryption(&st, secret).ok()?);
        counts.push(count);
    }
    Some(Trace::build(
        contract_id(SVOTE),
        "tally",
        vec![vote.id],
        vec![],
        vec![OutputSpec {
            type_tag: tally_type(),
            payload: TallyMeta {
                options: meta.options,
                counts,
            }
            .encode(),
        }],
        TallyParams { proofs }.encode(),
        Vec::new(),
        vec![],
    ))
}

fn check_create(ctx: &CheckerContext<'_>) -> bool {
    if !token_reissued(ctx) || ctx.outputs.len() != 2 {
        return false;
    }
    let out = &ctx.outputs[1];
    if out.type_tag != vote_type() {
        return false;
    }
    let (Ok(meta), Ok(params)) = (
        VoteMeta::decode(&out.payload),
        CreateElectionParams::decode(ctx.lparams),
    ) else {
        return false;
    };
    if meta.options.is_empty()
        || meta.cast != 0
        || meta.cts.len() != meta.options.len()
        || params.proofs.len() != meta.cts.len()
    {
        return false;
    }
    let token_id = ctx.inputs[0].id;
    // Every running total provably starts at zero.
    for (ct, proof) in meta.cts.iter().zip(&params.proofs) {
        let st = ZeroInitStatement {
            key: meta.tally_key,
            ct: *ct,
            context: token_id.0,
        };
        if !verify_zero_init(&st, proof) {
            return false;
        }
    }
    verify(
        &meta.authority,
        &election_intent(&token_id, &meta.options, &meta.voters, &meta.tally_key),
        &params.sig,
    )
}

fn check_vote(ctx: &CheckerContext<'_>) -> bool {
    let [input] = ctx.inputs else { return false };
    let [output] = ctx.outputs else { return false };
    if !ctx.references.is_empty()
        || input.type_tag != vote_type()
        || output.type_tag != vote_type()
    {
        return false;
    }
    let (Ok(before), Ok(after), Ok(params)) = (
        VoteMeta::decode(&input.payload),
        VoteMeta::decode(&output.payload),
        BallotParams::decode(ctx.lparams),
    ) else {
        return false;
    };
    // The voter must hold an entitlement and lose exactly it.
    let Some(pos) = before.voters.iter().position(|v| *v == params.voter) else {
        return false;
    };
    let mut expected_voters = before.voters.clone();
    expected_voters.remove(pos);
    if after.authority != before.authority
        || after.options != before.options
        || after.tally_key != before.tally_key
        || after.voters != expected_voters
        || after.cast != before.cast.wrapping_add(1)
        || params.cts.len() != before.options.len()
        || params.binary.len() != params.cts.len()
        || after.cts.len() != before.cts.len()
    {
        return false;
    }
    // Totals advance by exactly the proven ballot.
    for ((prev, add), next) in before.cts.iter().zip(&params.cts).zip(&after.cts) {
        if *prev + *add != *next {
            return false;
        }
    }
    for (ct, proof) in params.cts.iter().zip(&params.binary) {
        let st = BinaryVoteStatement {
            key: before.tally_key,
            ct: *ct,
            context: input.id.0,
        };
        if !verify_binary_vote(&st, proof) {
            return false;
        }
    }
    if !verify_sum_one(
        &SumOneStatement {
            key: before.tally_key,
            cts: params.cts.clone(),
            context: input.id.0,
        },
        &params.sum,
    ) {
        return false;
    }
    verify(
        &params.voter,
        &ballot_intent(&input.id, &params.cts),
        &params.sig,
    )
}

fn check_tally(ctx: &CheckerContext<'_>) -> bool {
    let [input] = ctx.inputs else { return false };
    let [output] = ctx.outputs else { return false };
    if !ctx.references.is_empty()
        || input.type_tag != vote_type()
        || output.type_tag != tally_type()
    {
        return false;
    }
    let (Ok(before), Ok(meta), Ok(params)) = (
        VoteMeta::decode(&input.payload),
        TallyMeta::decode(&output.payload),
        TallyParams::decode(ctx.lparams),
    ) else {
        return false;
    };
    if meta.options != before.options
        || meta.counts.len() != before.cts.len()
        || params.proofs.len() != before.cts.len()
    {
        return false;
    }
    let mut total: u64 = 0;
    for ((ct, count), proof) in before.cts.iter().zip(&meta.counts).zip(&params.proofs) {
        let st = DecryptionStatement {
            key: before.tally_key,
            ct: *ct,
            plaintext: *count,
            context: input.id.0,
        };
        if !verify_decryption(&st, proof) {
            return false;
        }
        let Some(t) = total.checked_add(*count) else {
            return false;
        };
        total = t;
    }
    // Conservation: every cast ballot lands in exactly one count.
    total == before.cast
}

fn checker(ctx: &CheckerContext<'_>) -> bool {
    match ctx.procedure {
        "create" => check_create(ctx),
        "vote" => check_vote(ctx),
        "tally" => check_tally(ctx),
        _ => false,
    }
}

pub fn contract_checker() -> ContractChecker {
    ContractChecker {
        contract: contract_id(SVOTE),
        name: SVOTE.to_string(),
        types: ["Token", "Vote", "Tally"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        checker,
    }
}
