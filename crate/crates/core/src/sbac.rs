//! Cross-shard atomic commit messages and decision tracking.
//!
//! A transaction touching several shards commits in two phases. Each
//! concerned shard first sequences the transaction internally and its nodes
//! each sign a statement — a promise — saying how their shard voted. A
//! shard's verdict counts once `f + 1` distinct members have signed the same
//! way, since at most `f` of them lie. A transaction commits only when every
//! concerned shard reaches a counted commit verdict; a single counted abort
//! verdict aborts it everywhere. The evidence for either outcome is the
//! bundle of signed statements itself, which is independently verifiable
//! and, because signatures are non-repudiable, feeds the audit trail.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::hash::Digest;
use crate::crypto::sig::{verify_cached, Signature, SigningKey, VerifyKey};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{Object, TxEnvelope};
use crate::shard::{Decision, ShardId};

/// A node's signed verdict on one transaction, on behalf of its shard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPrepared {
    pub txd: Digest,
    pub shard: ShardId,
    pub decision: Decision,
    pub node: VerifyKey,
    pub sig: Signature,
}

/// The exact bytes a prepared statement signs.
pub fn prepared_statement(txd: &Digest, shard: ShardId, decision: &Decision) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::STMT_PREPARED, |e| {
        txd.encode_into(e)?;
        e.u64(shard as u64)?;
        decision.encode_into(e)
    })
    .expect("statement fits");
    e.into_bytes()
}

impl SignedPrepared {
    pub fn sign(key: &SigningKey, txd: Digest, shard: ShardId, decision: Decision) -> Self {
        let msg = prepared_statement(&txd, shard, &decision);
        SignedPrepared {
            txd,
            shard,
            decision: decision.clone(),
            node: key.verify_key(),
            sig: key.sign(&msg),
        }
    }

    pub fn verify(&self) -> bool {
        let msg = prepared_statement(&self.txd, self.shard, &self.decision);
        verify_cached(&self.node, &msg, &self.sig)
    }

    /// Two statements that cannot both come from one honest node: same
    /// transaction and shard, same signer, different verdicts, both signed.
    pub fn contradicts(&self, other: &SignedPrepared) -> bool {
        self.txd == other.txd
            && self.shard == other.shard
            && self.node == other.node
            && self.decision.encode() != other.decision.encode()
            && self.verify()
            && other.verify()
    }
}

impl Encode for SignedPrepared {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MSG_PREPARED, |e| {
            self.txd.encode_into(e)?;
            e.u64(self.shard as u64)?;
            self.decision.encode_into(e)?;
            self.node.encode_into(e)?;
            self.sig.encode_into(e)
        })
    }
}

impl Decode for SignedPrepared {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MSG_PREPARED, |d| {
            let txd = Digest::decode_from(d)?;
            let shard = d.u64()?;
            if shard > u32::MAX as u64 {
                return Err(DecodeError::UnknownDiscriminant(shard));
            }
            Ok(SignedPrepared {
                txd,
                shard: shard as ShardId,
                decision: Decision::decode_from(d)?,
                node: VerifyKey::decode_from(d)?,
                sig: Signature::decode_from(d)?,
            })
        })
    }
}

/// The final verdict on a transaction together with the signed statements
/// justifying it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accept {
    pub txd: Digest,
    pub decision: Decision,
    pub evidence: Vec<SignedPrepared>,
}

impl Accept {
    /// Check the evidence actually supports the verdict for a transaction
    /// concerning these shards: a commit needs `f + 1` distinct commit
    /// signers from every shard, an abort needs `f + 1` distinct abort
    /// signers from at least one.
    pub fn verify(&self, concerned: &BTreeSet<ShardId>, f: usize) -> bool {
        let mut commit_signers: BTreeMap<ShardId, BTreeSet<VerifyKey>> = BTreeMap::new();
        let mut abort_signers: BTreeMap<ShardId, BTreeSet<VerifyKey>> = BTreeMap::new();
        for sp in &self.evidence {
            if sp.txd != self.txd || !concerned.contains(&sp.shard) || !sp.verify() {
                return false;
            }
            let bucket = match sp.decision {
                Decision::Commit => &mut commit_signers,
                Decision::Abort(_) => &mut abort_signers,
            };
            bucket.entry(sp.shard).or_default().insert(sp.node);
        }
        match self.decision {
            Decision::Commit => concerned
                .iter()
                .all(|s| commit_signers.get(s).map_or(0, |ks| ks.len()) > f),
            Decision::Abort(_) => abort_signers.values().any(|ks| ks.len() > f),
        }
    }
}

impl Encode for Accept {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MSG_ACCEPT, |e| {
            self.txd.encode_into(e)?;
            self.decision.encode_into(e)?;
            e.list(&self.evidence)
        })
    }
}

impl Decode for Accept {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MSG_ACCEPT, |d| {
            Ok(Accept {
                txd: Digest::decode_from(d)?,
                decision: Decision::decode_from(d)?,
                evidence: d.list()?,
            })
        })
    }
}

/// A committed output shipped to the shard that will manage it, along with
/// the transaction and evidence that justify its creation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateObject {
    pub object: Object,
    pub envelope: TxEnvelope,
    pub evidence: Accept,
}

impl CreateObject {
    /// The shipped object must be an output of the carried transaction, and
    /// the carried evidence must be a verifiable commit of that transaction.
    pub fn verify(&self, shard_count: u32, f: usize) -> bool {
        let txd = self.envelope.digest();
        if self.evidence.txd != txd || !self.evidence.decision.is_commit() {
            return false;
        }
        if !crate::model::net_outputs(&self.envelope.tx)
            .iter()
            .any(|o| *o == self.object)
        {
            return false;
        }
        match crate::shard::concerned_shards(&self.envelope, shard_count) {
            Ok(concerned) => self.evidence.verify(&concerned, f),
            Err(_) => false,
        }
    }
}

impl Encode for CreateObject {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MSG_CREATE_OBJECT, |e| {
            self.object.encode_into(e)?;
            self.envelope.encode_into(e)?;
            self.evidence.encode_into(e)
        })
    }
}

impl Decode for CreateObject {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MSG_CREATE_OBJECT, |d| {
            Ok(CreateObject {
                object: Object::decode_from(d)?,
                envelope: TxEnvelope::decode_from(d)?,
                evidence: Accept::decode_from(d)?,
            })
        })
    }
}

/// The protocol's wire messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SbacMessage {
    /// A client (or a forwarding peer) asks a shard to sequence and decide
    /// a transaction.
    Prepare { envelope: TxEnvelope },
    /// One node's signed shard verdict.
    Prepared(SignedPrepared),
    /// The assembled final verdict with its evidence.
    Accept(Accept),
    /// A committed output delivered to the shard that manages it.
    CreateObject(CreateObject),
}

impl Encode for SbacMessage {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        match self {
            SbacMessage::Prepare { envelope } => {
                e.node(tag::MSG_PREPARE, |e| envelope.encode_into(e))
            }
            SbacMessage::Prepared(sp) => sp.encode_into(e),
            SbacMessage::Accept(a) => a.encode_into(e),
            SbacMessage::CreateObject(c) => c.encode_into(e),
        }
    }
}

impl Decode for SbacMessage {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        match d.peek_tag()? {
            tag::MSG_PREPARE => d.node(tag::MSG_PREPARE, |d| {
                Ok(SbacMessage::Prepare {
                    envelope: TxEnvelope::decode_from(d)?,
                })
            }),
            tag::MSG_PREPARED => Ok(SbacMessage::Prepared(SignedPrepared::decode_from(d)?)),
            tag::MSG_ACCEPT => Ok(SbacMessage::Accept(Accept::decode_from(d)?)),
            tag::MSG_CREATE_OBJECT => Ok(SbacMessage::CreateObject(CreateObject::decode_from(d)?)),
            other => Err(DecodeError::UnexpectedTag {
                expected: tag::MSG_PREPARE,
                found: other,
            }),
        }
    }
}

/// What a tracker concludes once enough statements are in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Every concerned shard counted commit.
    AllCommit,
    /// Some shard counted abort.
    SomeAbort,
}

/// Collects verified prepared statements for one transaction and watches
/// for the commit and abort thresholds.
#[derive(Debug, Clone)]
pub struct DecisionTracker {
    txd: Digest,
    concerned: BTreeSet<ShardId>,
    f: usize,
    /// Every distinct verified statement seen, keyed to dedupe: one slot per
    /// (shard, signer, verdict kind). An equivocating signer occupies two.
    statements: BTreeMap<(ShardId, VerifyKey, u8), SignedPrepared>,
}

impl DecisionTracker {
    pub fn new(txd: Digest, concerned: BTreeSet<ShardId>, f: usize) -> Self {
        DecisionTracker {
            txd,
            concerned,
            f,
            statements: BTreeMap::new(),
        }
    }

    pub fn concerned(&self) -> &BTreeSet<ShardId> {
        &self.concerned
    }

    /// Absorb a statement. Returns false (and ignores it) unless it is for
    /// this transaction, from a concerned shard, and properly signed.
    pub fn record(&mut self, sp: SignedPrepared) -> bool {
        if sp.txd != self.txd || !self.concerned.contains(&sp.shard) || !sp.verify() {
            return false;
        }
        self.statements
            .entry((sp.shard, sp.node, sp.decision.kind()))
            .or_insert(sp);
        true
    }

    fn counted(&self, shard: ShardId, kind: u8) -> usize {
        self.statements
            .keys()
            .filter(|(s, _, k)| *s == shard && *k == kind)
            .count()
    }

    /// Whether this shard's verdict of the given kind has passed the
    /// `f + 1` distinct-signer threshold.
    pub fn locally_prepared(&self, shard: ShardId, kind: u8) -> bool {
        self.counted(shard, kind) > self.f
    }

    pub fn outcome(&self) -> Option<Outcome> {
        if self
            .concerned
            .iter()
            .any(|s| self.locally_prepared(*s, 1))
        {
            return Some(Outcome::SomeAbort);
        }
        if self
            .concerned
            .iter()
            .all(|s| self.locally_prepared(*s, 0))
        {
            return Some(Outcome::AllCommit);
        }
        None
    }

    /// Assemble the final verdict once a threshold holds: the decision plus
    /// a trimmed evidence bundle of exactly `f + 1` statements per shard
    /// that needs them, lowest signer keys first for determinism.
    pub fn assemble(&self) -> Option<Accept> {
        match self.outcome()? {
            Outcome::AllCommit => {
                let mut evidence = Vec::new();
                for shard in &self.concerned {
                    evidence.extend(self.take(*shard, 0));
                }
                Some(Accept {
                    txd: self.txd,
                    decision: Decision::Commit,
                    evidence,
                })
            }
            Outcome::SomeAbort => {
                let shard = *self
                    .concerned
                    .iter()
                    .find(|s| self.locally_prepared(**s, 1))
                    .expect("outcome says some shard counted abort");
                let evidence = self.take(shard, 1);
                let reason = match &evidence[0].decision {
                    Decision::Abort(r) => r.clone(),
                    Decision::Commit => unreachable!("abort bucket holds aborts"),
                };
                Some(Accept {
                    txd: self.txd,
                    decision: Decision::Abort(reason),
                    evidence,
                })
            }
        }
    }

    fn take(&self, shard: ShardId, kind: u8) -> Vec<SignedPrepared> {
        self.statements
            .iter()
            .filter(|((s, _, k), _)| *s == shard && *k == kind)
            .take(self.f + 1)
            .map(|(_, sp)| sp.clone())
            .collect()
    }

    /// Every statement this tracker has verified and kept, for audit
    /// harvesting.
    pub fn all_statements(&self) -> impl Iterator<Item = &SignedPrepared> {
        self.statements.values()
    }
}

/// The dedupe key under which an item enters a shard's internal sequence.
/// Distinct per item kind so a transaction's prepare and its accept both
/// get sequenced, while resubmissions collapse.
pub fn sequence_key(msg: &SbacMessage) -> Digest {
    use crate::crypto::hash::hash_parts;
    match msg {
        SbacMessage::Prepare { envelope } => {
            hash_parts("seq-item", &[&[0u8], envelope.digest().as_bytes()])
        }
        SbacMessage::Prepared(sp) => {
            // Never sequenced, but every message gets a stable key.
            hash_parts("seq-item", &[&[1u8], &sp.encode()])
        }
        SbacMessage::Accept(a) => hash_parts(
            "seq-item",
            &[&[2u8], a.txd.as_bytes(), &[a.decision.kind()]],
        ),
        SbacMessage::CreateObject(c) => {
            hash_parts("seq-item", &[&[3u8], c.object.id.0.as_bytes()])
        }
    }
}
