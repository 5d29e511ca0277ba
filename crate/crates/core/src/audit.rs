//! Hash-chain checkpoints and the audit machinery built on them.
//!
//! Every node appends the protocol facts it sequences — transaction bodies,
//! signed promises, accept evidence, outcomes, shipped objects — to a log,
//! and periodically seals the log into a checkpoint: a Merkle root over the
//! entries chained to the previous head. Honest nodes of a shard sequence
//! identical facts, so they independently seal identical chains, and f+1
//! signatures over a head make it the shard's collective word.
//!
//! Three audits read these chains back:
//!
//! * a **partial audit** answers "what happened to transaction T?" with one
//!   entry, a Merkle path, and a threshold-signed head — O(f + log N) bytes;
//! * a **full audit** replays a chain from genesis through the validity
//!   engine and flags every logged claim the replay contradicts;
//! * a **cross audit** replays two chains and hunts for a shard's signed
//!   promise that its own chain proves wrong — the pair of irreconcilable
//!   signed statements convicts the shard.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::contracts::KeySig;
use crate::crypto::hash::{domain, hash_parts, Digest};
use crate::crypto::merkle::{merkle_proof, merkle_root, merkle_verify, MerkleProof};
use crate::crypto::sig::{verify_cached, Signature, SigningKey, VerifyKey};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{free_inputs, Object, ObjectId, TxEnvelope};
use crate::sbac::{Accept, CreateObject, SignedPrepared};
use crate::shard::{concerned_shards, Decision, ShardId, ShardStore};
use crate::validity::{AbortReason, CheckerRegistry};

// ---------------------------------------------------------------------------
// Chain entries
// ---------------------------------------------------------------------------

/// One logged fact. Every entry derives from data the shard's orderer
/// sequenced, so honest nodes of a shard log identical entry streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointEntry {
    /// A transaction body at the position its prepare was sequenced; the
    /// replay anchor for everything that follows.
    PrepareSeq { envelope: TxEnvelope },
    /// A signed shard promise observed in sequenced evidence.
    PromiseSeen { stmt: SignedPrepared },
    /// A sequenced terminal verdict with its justifying evidence.
    AcceptSeen { accept: Accept },
    /// The transaction committed here, with its full body.
    CommittedTx { envelope: TxEnvelope },
    /// The transaction aborted here.
    AbortedTx { txd: Digest, reason: AbortReason },
    /// An output homed on this shard, shipped from the committing shards
    /// and sequenced on arrival.
    ObjectCreated { create: CreateObject },
}

impl CheckpointEntry {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckpointEntry::PrepareSeq { .. } => "prepare",
            CheckpointEntry::PromiseSeen { .. } => "promise",
            CheckpointEntry::AcceptSeen { .. } => "accept",
            CheckpointEntry::CommittedTx { .. } => "committed",
            CheckpointEntry::AbortedTx { .. } => "aborted",
            CheckpointEntry::ObjectCreated { .. } => "object-created",
        }
    }

    /// The transaction this entry passes terminal judgement on, if any.
    pub fn decided_txd(&self) -> Option<Digest> {
        match self {
            CheckpointEntry::CommittedTx { envelope } => Some(envelope.digest()),
            CheckpointEntry::AbortedTx { txd, .. } => Some(*txd),
            _ => None,
        }
    }
}

impl Encode for CheckpointEntry {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        match self {
            CheckpointEntry::PrepareSeq { envelope } => {
                e.node(tag::ENTRY_PREPARE_SEQ, |e| envelope.encode_into(e))
            }
            CheckpointEntry::PromiseSeen { stmt } => {
                e.node(tag::ENTRY_PROMISE, |e| stmt.encode_into(e))
            }
            CheckpointEntry::AcceptSeen { accept } => {
                e.node(tag::ENTRY_ACCEPT, |e| accept.encode_into(e))
            }
            CheckpointEntry::CommittedTx { envelope } => {
                e.node(tag::ENTRY_COMMITTED, |e| envelope.encode_into(e))
            }
            CheckpointEntry::AbortedTx { txd, reason } => e.node(tag::ENTRY_ABORTED, |e| {
                txd.encode_into(e)?;
                reason.encode_into(e)
            }),
            CheckpointEntry::ObjectCreated { create } => {
                e.node(tag::ENTRY_OBJECT_CREATED, |e| create.encode_into(e))
            }
        }
    }
}

impl Decode for CheckpointEntry {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        match d.peek_tag()? {
            tag::ENTRY_PREPARE_SEQ => d.node(tag::ENTRY_PREPARE_SEQ, |d| {
                Ok(CheckpointEntry::PrepareSeq {
                    envelope: TxEnvelope::decode_from(d)?,
                })
            }),
            tag::ENTRY_PROMISE => d.node(tag::ENTRY_PROMISE, |d| {
                Ok(CheckpointEntry::PromiseSeen {
                    stmt: SignedPrepared::decode_from(d)?,
                })
            }),
            tag::ENTRY_ACCEPT => d.node(tag::ENTRY_ACCEPT, |d| {
                Ok(CheckpointEntry::AcceptSeen {
                    accept: Accept::decode_from(d)?,
                })
            }),
            tag::ENTRY_COMMITTED => d.node(tag::ENTRY_COMMITTED, |d| {
                Ok(CheckpointEntry::CommittedTx {
                    envelope: TxEnvelope::decode_from(d)?,
                })
            }),
            tag::ENTRY_ABORTED => d.node(tag::ENTRY_ABORTED, |d| {
                Ok(CheckpointEntry::AbortedTx {
                    txd: Digest::decode_from(d)?,
                    reason: AbortReason::decode_from(d)?,
                })
            }),
            tag::ENTRY_OBJECT_CREATED => d.node(tag::ENTRY_OBJECT_CREATED, |d| {
                Ok(CheckpointEntry::ObjectCreated {
                    create: CreateObject::decode_from(d)?,
                })
            }),
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// The chaining hash: Merkle root, block sequence number, previous head.
pub fn chain_head(merkle_root: &Digest, seq_no: u64, prev_head: &Digest) -> Digest {
    hash_parts(
        domain::CHAIN,
        &[&merkle_root.0, &seq_no.to_be_bytes(), &prev_head.0],
    )
}

/// A sealed block of the node's chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub seq_no: u64,
    pub entries: Vec<CheckpointEntry>,
    pub merkle_root: Digest,
    pub prev_head: Digest,
    pub head: Digest,
}

/// Root over the entry encodings; the zero digest for an empty epoch.
pub fn entries_root(entries: &[CheckpointEntry]) -> Digest {
    if entries.is_empty() {
        return Digest::ZERO;
    }
    let leaves: Vec<Vec<u8>> = entries.iter().map(|e| e.encode()).collect();
    merkle_root(&leaves).expect("non-empty leaf list")
}

/// Seal `entries` into the checkpoint following `prev_head`. Deterministic:
/// two nodes sealing the same entry sequence produce the same head.
pub fn seal_checkpoint(seq_no: u64, prev_head: Digest, entries: Vec<CheckpointEntry>) -> Checkpoint {
    let merkle_root = entries_root(&entries);
    let head = chain_head(&merkle_root, seq_no, &prev_head);
    Checkpoint {
        seq_no,
        entries,
        merkle_root,
        prev_head,
        head,
    }
}

impl Encode for Checkpoint {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CHECKPOINT, |e| {
            e.u64(self.seq_no)?;
            e.list(&self.entries)?;
            self.merkle_root.encode_into(e)?;
            self.prev_head.encode_into(e)?;
            self.head.encode_into(e)
        })
    }
}

impl Decode for Checkpoint {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CHECKPOINT, |d| {
            Ok(Checkpoint {
                seq_no: d.u64()?,
                entries: d.list()?,
                merkle_root: Digest::decode_from(d)?,
                prev_head: Digest::decode_from(d)?,
                head: Digest::decode_from(d)?,
            })
        })
    }
}

/// The head-defining fields of a checkpoint, carried in partial-audit
/// proofs so the verifier can recompute the head without the entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub seq_no: u64,
    pub merkle_root: Digest,
    pub prev_head: Digest,
}

impl CheckpointHeader {
    pub fn of(cp: &Checkpoint) -> CheckpointHeader {
        CheckpointHeader {
            seq_no: cp.seq_no,
            merkle_root: cp.merkle_root,
            prev_head: cp.prev_head,
        }
    }

    pub fn head(&self) -> Digest {
        chain_head(&self.merkle_root, self.seq_no, &self.prev_head)
    }
}

impl Encode for CheckpointHeader {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CHECKPOINT_HEADER, |e| {
            e.u64(self.seq_no)?;
            self.merkle_root.encode_into(e)?;
            self.prev_head.encode_into(e)
        })
    }
}

impl Decode for CheckpointHeader {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CHECKPOINT_HEADER, |d| {
            Ok(CheckpointHeader {
                seq_no: d.u64()?,
                merkle_root: Digest::decode_from(d)?,
                prev_head: Digest::decode_from(d)?,
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Signed heads
// ---------------------------------------------------------------------------

/// The exact bytes a node signs to endorse a sealed head.
pub fn head_statement(shard: ShardId, seq_no: u64, head: &Digest) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::STMT_HEAD, |e| {
        e.u64(shard as u64)?;
        e.u64(seq_no)?;
        head.encode_into(e)
    })
    .expect("statement fits");
    e.into_bytes()
}

/// One node's endorsement of a head, as gossiped between peers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadSig {
    pub shard: ShardId,
    pub seq_no: u64,
    pub head: Digest,
    pub node: VerifyKey,
    pub sig: Signature,
}

impl HeadSig {
    pub fn sign(key: &SigningKey, shard: ShardId, seq_no: u64, head: Digest) -> HeadSig {
        let msg = head_statement(shard, seq_no, &head);
        HeadSig {
            shard,
            seq_no,
            head,
            node: key.verify_key(),
            sig: key.sign(&msg),
        }
    }

    pub fn verify(&self) -> bool {
        let msg = head_statement(self.shard, self.seq_no, &self.head);
        verify_cached(&self.node, &msg, &self.sig)
    }
}

impl Encode for HeadSig {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::HEAD_SIG, |e| {
            e.u64(self.shard as u64)?;
            e.u64(self.seq_no)?;
            self.head.encode_into(e)?;
            self.node.encode_into(e)?;
            self.sig.encode_into(e)
        })
    }
}

impl Decode for HeadSig {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::HEAD_SIG, |d| {
            let shard = d.u64()?;
            if shard > u32::MAX as u64 {
                return Err(DecodeError::UnknownDiscriminant(shard));
            }
            Ok(HeadSig {
                shard: shard as ShardId,
                seq_no: d.u64()?,
                head: Digest::decode_from(d)?,
                node: VerifyKey::decode_from(d)?,
                sig: Signature::decode_from(d)?,
            })
        })
    }
}

/// A shard's collective endorsement of one head: f+1 distinct node
/// signatures make it impossible for an honest shard to disown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardDecision {
    pub shard: ShardId,
    pub seq_no: u64,
    pub head: Digest,
    pub sigs: Vec<KeySig>,
}

impl ShardDecision {
    /// Threshold check against the shard's known key set.
    pub fn verify(&self, keys: &BTreeSet<VerifyKey>, f: usize) -> bool {
        let msg = head_statement(self.shard, self.seq_no, &self.head);
        let valid: BTreeSet<VerifyKey> = self
            .sigs
            .iter()
            .filter(|ks| keys.contains(&ks.key) && verify_cached(&ks.key, &msg, &ks.sig))
            .map(|ks| ks.key)
            .collect();
        valid.len() > f
    }
}

impl Encode for ShardDecision {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::SHARD_DECISION, |e| {
            e.u64(self.shard as u64)?;
            e.u64(self.seq_no)?;
            self.head.encode_into(e)?;
            e.list(&self.sigs)
        })
    }
}

impl Decode for ShardDecision {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::SHARD_DECISION, |d| {
            let shard = d.u64()?;
            if shard > u32::MAX as u64 {
                return Err(DecodeError::UnknownDiscriminant(shard));
            }
            Ok(ShardDecision {
                shard: shard as ShardId,
                seq_no: d.u64()?,
                head: Digest::decode_from(d)?,
                sigs: d.list()?,
            })
        })
    }
}

// ---------------------------------------------------------------------------
// Partial audits
// ---------------------------------------------------------------------------

/// The exact bytes a node signs to state it has never decided a tx.
pub fn unknown_tx_statement(txd: &Digest, shard: ShardId) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::STMT_UNKNOWN_TX, |e| {
        txd.encode_into(e)?;
        e.u64(shard as u64)
    })
    .expect("statement fits");
    e.into_bytes()
}

/// A single node's signed statement that a transaction is unknown to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTx {
    pub txd: Digest,
    pub shard: ShardId,
    pub node: VerifyKey,
    pub sig: Signature,
}

impl UnknownTx {
    pub fn sign(key: &SigningKey, txd: Digest, shard: ShardId) -> UnknownTx {
        let msg = unknown_tx_statement(&txd, shard);
        UnknownTx {
            txd,
            shard,
            node: key.verify_key(),
            sig: key.sign(&msg),
        }
    }

    pub fn verify(&self) -> bool {
        let msg = unknown_tx_statement(&self.txd, self.shard);
        verify_cached(&self.node, &msg, &self.sig)
    }
}

impl Encode for UnknownTx {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::AUDIT_PROOF_UNKNOWN, |e| {
            self.txd.encode_into(e)?;
            e.u64(self.shard as u64)?;
            self.node.encode_into(e)?;
            self.sig.encode_into(e)
        })
    }
}

impl Decode for UnknownTx {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::AUDIT_PROOF_UNKNOWN, |d| {
            let txd = Digest::decode_from(d)?;
            let shard = d.u64()?;
            if shard > u32::MAX as u64 {
                return Err(DecodeError::UnknownDiscriminant(shard));
            }
            Ok(UnknownTx {
                txd,
                shard: shard as ShardId,
                node: VerifyKey::decode_from(d)?,
                sig: Signature::decode_from(d)?,
            })
        })
    }
}

/// What a shard hands a client asking about one transaction: either the
/// logged verdict with everything needed to check it against a signed head,
/// or a signed statement that the transaction is unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartialAuditProof {
    Known {
        decision: ShardDecision,
        header: CheckpointHeader,
        entry: CheckpointEntry,
        inclusion: MerkleProof,
    },
    Unknown(UnknownTx),
}

impl Encode for PartialAuditProof {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        match self {
            PartialAuditProof::Known {
                decision,
                header,
                entry,
                inclusion,
            } => e.node(tag::AUDIT_PROOF_KNOWN, |e| {
                decision.encode_into(e)?;
                header.encode_into(e)?;
                entry.encode_into(e)?;
                inclusion.encode_into(e)
            }),
            PartialAuditProof::Unknown(stmt) => stmt.encode_into(e),
        }
    }
}

impl Decode for PartialAuditProof {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        match d.peek_tag()? {
            tag::AUDIT_PROOF_KNOWN => d.node(tag::AUDIT_PROOF_KNOWN, |d| {
                Ok(PartialAuditProof::Known {
                    decision: ShardDecision::decode_from(d)?,
                    header: CheckpointHeader::decode_from(d)?,
                    entry: CheckpointEntry::decode_from(d)?,
                    inclusion: MerkleProof::decode_from(d)?,
                })
            }),
            tag::AUDIT_PROOF_UNKNOWN => Ok(PartialAuditProof::Unknown(UnknownTx::decode_from(d)?)),
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}

/// Check a partial-audit proof about `txd` against the shard's key set.
///
/// The `Known` arm demands: a threshold-signed head, recomputed from the
/// carried checkpoint header; Merkle inclusion of the entry under that
/// header's root; and that the entry actually decides `txd`. The `Unknown`
/// arm demands a valid member signature (the single responding node's word).
pub fn verify_partial(
    proof: &PartialAuditProof,
    txd: &Digest,
    keys: &BTreeSet<VerifyKey>,
    f: usize,
) -> bool {
    match proof {
        PartialAuditProof::Known {
            decision,
            header,
            entry,
            inclusion,
        } => {
            if !decision.verify(keys, f) {
                return false;
            }
            if header.head() != decision.head || header.seq_no != decision.seq_no {
                return false;
            }
            if entry.decided_txd() != Some(*txd) {
                return false;
            }
            merkle_verify(&header.merkle_root, &entry.encode(), inclusion)
        }
        PartialAuditProof::Unknown(stmt) => {
            stmt.txd == *txd && keys.contains(&stmt.node) && stmt.verify()
        }
    }
}

// ---------------------------------------------------------------------------
// A node's live chain
// ---------------------------------------------------------------------------

/// The chain as a node builds it: an open epoch of pending entries plus the
/// sealed history.
#[derive(Debug, Clone)]
pub struct ChainLog {
    shard: ShardId,
    pending: Vec<CheckpointEntry>,
    sealed: Vec<Checkpoint>,
}

impl ChainLog {
    pub fn new(shard: ShardId) -> ChainLog {
        ChainLog {
            shard,
            pending: Vec::new(),
            sealed: Vec::new(),
        }
    }

    pub fn shard(&self) -> ShardId {
        self.shard
    }

    pub fn push(&mut self, entry: CheckpointEntry) {
        self.pending.push(entry);
    }

    /// Current head: the last sealed head, or zero before the first seal.
    pub fn head(&self) -> Digest {
        self.sealed.last().map(|cp| cp.head).unwrap_or(Digest::ZERO)
    }

    pub fn next_seq(&self) -> u64 {
        self.sealed.len() as u64
    }

    /// Seal the open epoch — even an empty one — into the next checkpoint.
    pub fn seal(&mut self) -> &Checkpoint {
        let entries = std::mem::take(&mut self.pending);
        let cp = seal_checkpoint(self.next_seq(), self.head(), entries);
        self.sealed.push(cp);
        self.sealed.last().expect("just pushed")
    }

    pub fn sealed(&self) -> &[Checkpoint] {
        &self.sealed
    }

    pub fn pending(&self) -> &[CheckpointEntry] {
        &self.pending
    }

    /// Locate the sealed terminal-decision entry for a transaction and
    /// build its inclusion proof.
    pub fn find_decision(
        &self,
        txd: &Digest,
    ) -> Option<(CheckpointHeader, CheckpointEntry, MerkleProof)> {
        for cp in &self.sealed {
            for (i, entry) in cp.entries.iter().enumerate() {
                if entry.decided_txd() == Some(*txd) {
                    let leaves: Vec<Vec<u8>> = cp.entries.iter().map(|e| e.encode()).collect();
                    let proof = merkle_proof(&leaves, i).expect("index in range");
                    return Some((CheckpointHeader::of(cp), entry.clone(), proof));
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Chain files
// ---------------------------------------------------------------------------

/// Everything an auditor needs to interpret a chain without other inputs:
/// the shard's place in the network, its node key table, and the genesis
/// objects the replay starts from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHeader {
    pub shard: ShardId,
    pub shard_count: u32,
    pub f: u64,
    pub epoch: u64,
    pub keys: Vec<VerifyKey>,
    pub genesis: Vec<Object>,
}

impl ChainHeader {
    pub fn key_set(&self) -> BTreeSet<VerifyKey> {
        self.keys.iter().copied().collect()
    }
}

impl Encode for ChainHeader {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CHAIN_HEADER, |e| {
            e.u64(self.shard as u64)?;
            e.u64(self.shard_count as u64)?;
            e.u64(self.f)?;
            e.u64(self.epoch)?;
            e.list(&self.keys)?;
            e.list(&self.genesis)
        })
    }
}

impl Decode for ChainHeader {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CHAIN_HEADER, |d| {
            let shard = d.u64()?;
            let shard_count = d.u64()?;
            if shard > u32::MAX as u64 || shard_count > u32::MAX as u64 {
                return Err(DecodeError::UnknownDiscriminant(shard.max(shard_count)));
            }
            Ok(ChainHeader {
                shard: shard as ShardId,
                shard_count: shard_count as u32,
                f: d.u64()?,
                epoch: d.u64()?,
                keys: d.list()?,
                genesis: d.list()?,
            })
        })
    }
}

/// One sealed checkpoint with the shard's endorsement of its head. The
/// endorsement may hold fewer than f+1 signatures if the run ended before
/// gossip completed; verifiers treat such heads as unendorsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRecord {
    pub checkpoint: Checkpoint,
    pub decision: ShardDecision,
}

impl Encode for ChainRecord {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CHAIN_RECORD, |e| {
            self.checkpoint.encode_into(e)?;
            self.decision.encode_into(e)
        })
    }
}

impl Decode for ChainRecord {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CHAIN_RECORD, |d| {
            Ok(ChainRecord {
                checkpoint: Checkpoint::decode_from(d)?,
                decision: ShardDecision::decode_from(d)?,
            })
        })
    }
}

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record {index}: {source}")]
    Record {
        index: usize,
        source: DecodeError,
    },
    #[error("file ends mid-record at byte {0}")]
    TruncatedRecord(usize),
    #[error("chain file holds no header record")]
    Empty,
}

/// Serialize a chain as a stream of length-prefixed records: the header
/// first, then one record per checkpoint.
pub fn encode_chain(header: &ChainHeader, records: &[ChainRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut put = |bytes: Vec<u8>| {
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    };
    put(header.encode());
    for rec in records {
        put(rec.encode());
    }
    out
}

pub fn decode_chain(bytes: &[u8]) -> Result<(ChainHeader, Vec<ChainRecord>), ChainFileError> {
    let mut frames = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if pos + 4 > bytes.len() {
            return Err(ChainFileError::TruncatedRecord(pos));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        pos += 4;
        if pos + len > bytes.len() {
            return Err(ChainFileError::TruncatedRecord(pos));
        }
        frames.push(&bytes[pos..pos + len]);
        pos += len;
    }
    let mut it = frames.into_iter();
    let header_bytes = it.next().ok_or(ChainFileError::Empty)?;
    let header = ChainHeader::decode(header_bytes)
        .map_err(|source| ChainFileError::Record { index: 0, source })?;
    let mut records = Vec::new();
    for (i, frame) in it.enumerate() {
        records.push(
            ChainRecord::decode(frame)
                .map_err(|source| ChainFileError::Record { index: i + 1, source })?,
        );
    }
    Ok((header, records))
}

pub fn write_chain(
    path: &Path,
    header: &ChainHeader,
    records: &[ChainRecord],
) -> Result<(), ChainFileError> {
    Ok(std::fs::write(path, encode_chain(header, records))?)
}

pub fn read_chain(path: &Path) -> Result<(ChainHeader, Vec<ChainRecord>), ChainFileError> {
    decode_chain(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Audit reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingKind {
    /// Head linkage or sequence numbering broken.
    ChainBroken,
    /// A checkpoint's Merkle root does not match its entries.
    BadRoot,
    /// A logged claim the replay contradicts.
    Divergence,
    /// A chain ends earlier than its counterpart.
    Truncation,
    /// Informational; not a fault.
    Note,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::ChainBroken => "chain-broken",
            FindingKind::BadRoot => "bad-root",
            FindingKind::Divergence => "divergence",
            FindingKind::Truncation => "truncation",
            FindingKind::Note => "note",
        })
    }
}

/// One audit finding, reported as `seq_no TAB kind TAB detail`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    /// The checkpoint the finding points at.
    pub seq_no: u64,
    pub kind: FindingKind,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.seq_no, self.kind, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub shard: ShardId,
    pub checkpoints: u64,
    pub findings: Vec<Finding>,
}

impl AuditReport {
    /// True when nothing fault-like was found (plain notes are fine).
    pub fn is_clean(&self) -> bool {
        self.findings
            .iter()
            .all(|f| matches!(f.kind, FindingKind::Note))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&f.to_string());
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Replay (shared by full and cross audits)
// ---------------------------------------------------------------------------

/// Everything the replay of one chain learns.
struct Replay {
    findings: Vec<Finding>,
    checkpoints: u64,
    /// Replayed honest local decision per prepared transaction.
    decisions: BTreeMap<Digest, Decision>,
    /// Which committed transaction consumed each input.
    consumed_by: BTreeMap<ObjectId, Digest>,
    /// Own-shard promises logged anywhere in this chain, deduplicated.
    own_stmts: Vec<SignedPrepared>,
    /// Foreign-shard promises logged in this chain, with the checkpoint
    /// they appear in — the raw material of a cross audit.
    foreign_stmts: Vec<(u64, SignedPrepared)>,
}

fn check_linkage(records: &[ChainRecord]) -> Option<Finding> {
    let mut prev = Digest::ZERO;
    for (i, rec) in records.iter().enumerate() {
        let cp = &rec.checkpoint;
        if cp.seq_no != i as u64 {
            return Some(Finding {
                seq_no: i as u64,
                kind: FindingKind::ChainBroken,
                detail: format!("expected seq {} found {}", i, cp.seq_no),
            });
        }
        if cp.prev_head != prev {
            return Some(Finding {
                seq_no: cp.seq_no,
                kind: FindingKind::ChainBroken,
                detail: format!("prev head mismatch at seq {}", cp.seq_no),
            });
        }
        if cp.head != chain_head(&cp.merkle_root, cp.seq_no, &cp.prev_head) {
            return Some(Finding {
                seq_no: cp.seq_no,
                kind: FindingKind::ChainBroken,
                detail: format!("head does not recompute at seq {}", cp.seq_no),
            });
        }
        if cp.merkle_root != entries_root(&cp.entries) {
            return Some(Finding {
                seq_no: cp.seq_no,
                kind: FindingKind::BadRoot,
                detail: format!("merkle root does not match entries at seq {}", cp.seq_no),
            });
        }
        prev = cp.head;
    }
    None
}

fn replay_chain(header: &ChainHeader, records: &[ChainRecord], reg: &CheckerRegistry) -> Replay {
    let mut replay = Replay {
        findings: Vec::new(),
        checkpoints: records.len() as u64,
        decisions: BTreeMap::new(),
        consumed_by: BTreeMap::new(),
        own_stmts: Vec::new(),
        foreign_stmts: Vec::new(),
    };

    if let Some(broken) = check_linkage(records) {
        replay.checkpoints = broken.seq_no;
        replay.findings.push(broken);
        return replay;
    }

    let keys = header.key_set();
    let f = header.f as usize;
    let mut store = ShardStore::new(header.shard, header.shard_count, &header.genesis);
    let mut envelopes: BTreeMap<Digest, TxEnvelope> = BTreeMap::new();
    let mut outcomes: BTreeMap<Digest, Decision> = BTreeMap::new();
    let mut stmt_seen: BTreeSet<Vec<u8>> = BTreeSet::new();

    for rec in records {
        let cp = &rec.checkpoint;
        let seq = cp.seq_no;
        let diverge = |findings: &mut Vec<Finding>, detail: String| {
            findings.push(Finding {
                seq_no: seq,
                kind: FindingKind::Divergence,
                detail,
            });
        };

        // Harvesting promises wherever they ride keeps the statement pools
        // complete even if a logger skipped the mirror entries.
        let harvest =
            |replay: &mut Replay, stmt_seen: &mut BTreeSet<Vec<u8>>, stmt: &SignedPrepared| {
                if !stmt_seen.insert(stmt.encode()) {
                    return;
                }
                if stmt.shard == header.shard {
                    replay.own_stmts.push(stmt.clone());
                } else {
                    replay.foreign_stmts.push((seq, stmt.clone()));
                }
            };

        for (idx, entry) in cp.entries.iter().enumerate() {
            match entry {
                CheckpointEntry::PrepareSeq { envelope } => {
                    let txd = envelope.digest();
                    if replay.decisions.contains_key(&txd) {
                        diverge(
                            &mut replay.findings,
                            format!("entry {idx}: duplicate prepare for tx {txd}"),
                        );
                        continue;
                    }
                    let decision = store.local_decision(envelope, reg);
                    if decision.is_commit() {
                        store.lock(envelope);
                    }
                    replay.decisions.insert(txd, decision);
                    envelopes.insert(txd, envelope.clone());
                }
                CheckpointEntry::PromiseSeen { stmt } => {
                    if !stmt.verify() {
                        diverge(
                            &mut replay.findings,
                            format!("entry {idx}: unverifiable promise for tx {}", stmt.txd),
                        );
                        continue;
                    }
                    harvest(&mut replay, &mut stmt_seen, stmt);
                    if stmt.shard != header.shard {
                        continue;
                    }
                    if !keys.contains(&stmt.node) {
                        diverge(
                            &mut replay.findings,
                            format!("entry {idx}: own-shard promise signed by a non-member"),
                        );
                        continue;
                    }
                    match replay.decisions.get(&stmt.txd) {
                        None => diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: own-shard promise for tx {} never prepared here",
                                stmt.txd
                            ),
                        ),
                        Some(expected) if expected.kind() != stmt.decision.kind() => diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: own-shard promise says {} but replay says {} for tx {}",
                                stmt.decision, expected, stmt.txd
                            ),
                        ),
                        Some(_) => {}
                    }
                }
                CheckpointEntry::AcceptSeen { accept } => {
                    for stmt in &accept.evidence {
                        if stmt.verify() {
                            harvest(&mut replay, &mut stmt_seen, stmt);
                        }
                    }
                    let txd = accept.txd;
                    if outcomes.contains_key(&txd) {
                        diverge(
                            &mut replay.findings,
                            format!("entry {idx}: second accept for tx {txd}"),
                        );
                        continue;
                    }
                    let verified = match envelopes.get(&txd) {
                        Some(env) => match concerned_shards(env, header.shard_count) {
                            Ok(concerned) => accept.verify(&concerned, f),
                            Err(_) => false,
                        },
                        // An abort can be accepted before (or without) our
                        // own prepare: another shard's quorum suffices and
                        // travels without the body. Check what is checkable.
                        None => !accept.decision.is_commit() && standalone_abort_ok(accept, f),
                    };
                    if !verified {
                        diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: accept for tx {txd} with evidence that does not verify"
                            ),
                        );
                        continue;
                    }
                    outcomes.insert(txd, accept.decision.clone());
                    if let Some(env) = envelopes.get(&txd) {
                        if accept.decision.is_commit() {
                            store.release(env);
                            for id in free_inputs(&env.tx) {
                                // First consumer wins: a later force-applied
                                // commit of the same object is the fault the
                                // cross audit wants to pin, not the record.
                                replay.consumed_by.entry(id).or_insert(txd);
                            }
                            store.consume_and_create(env);
                        } else {
                            store.release(env);
                        }
                    }
                }
                CheckpointEntry::CommittedTx { envelope } => {
                    let txd = envelope.digest();
                    match outcomes.get(&txd) {
                        Some(Decision::Commit) => {}
                        Some(other) => diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: committed tx {txd} whose accepted outcome was {other}"
                            ),
                        ),
                        None => diverge(
                            &mut replay.findings,
                            format!("entry {idx}: committed tx {txd} without a sequenced accept"),
                        ),
                    }
                    match replay.decisions.get(&txd) {
                        Some(Decision::Abort(reason)) => diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: committed tx {txd} that replay rejects ({reason})"
                            ),
                        ),
                        Some(Decision::Commit) => {}
                        None => diverge(
                            &mut replay.findings,
                            format!("entry {idx}: committed tx {txd} never prepared here"),
                        ),
                    }
                }
                CheckpointEntry::AbortedTx { txd, reason } => match outcomes.get(txd) {
                    Some(Decision::Abort(logged)) if logged == reason => {}
                    Some(Decision::Abort(logged)) => diverge(
                        &mut replay.findings,
                        format!(
                            "entry {idx}: aborted tx {txd} logs reason {reason} but evidence says {logged}"
                        ),
                    ),
                    Some(Decision::Commit) => diverge(
                        &mut replay.findings,
                        format!("entry {idx}: aborted tx {txd} whose accepted outcome was commit"),
                    ),
                    None => diverge(
                        &mut replay.findings,
                        format!("entry {idx}: aborted tx {txd} without a sequenced accept"),
                    ),
                },
                CheckpointEntry::ObjectCreated { create } => {
                    for stmt in &create.evidence.evidence {
                        if stmt.verify() {
                            harvest(&mut replay, &mut stmt_seen, stmt);
                        }
                    }
                    if !create.verify(header.shard_count, f) {
                        diverge(
                            &mut replay.findings,
                            format!(
                                "entry {idx}: object {} created with evidence that does not verify",
                                create.object.id.0
                            ),
                        );
                        continue;
                    }
                    store.insert_object(create.object.clone());
                }
            }
        }
    }
    replay
}

/// The checks possible on an abort accept when the transaction body is not
/// in this chain: every statement verifies, names this tx, and some single
/// shard contributed more than f distinct abort signers.
fn standalone_abort_ok(accept: &Accept, f: usize) -> bool {
    let mut by_shard: BTreeMap<ShardId, BTreeSet<VerifyKey>> = BTreeMap::new();
    for stmt in &accept.evidence {
        if stmt.txd != accept.txd || !stmt.verify() {
            return false;
        }
        if !stmt.decision.is_commit() {
            by_shard.entry(stmt.shard).or_default().insert(stmt.node);
        }
    }
    by_shard.values().any(|signers| signers.len() > f)
}

/// Replay a chain from genesis and report every contradiction between the
/// log and the replay. A clean report is the shard's certificate of honest
/// bookkeeping; any divergence is evidence of a faulty quorum.
pub fn full_audit(
    header: &ChainHeader,
    records: &[ChainRecord],
    reg: &CheckerRegistry,
) -> AuditReport {
    let replay = replay_chain(header, records, reg);
    AuditReport {
        shard: header.shard,
        checkpoints: replay.checkpoints,
        findings: replay.findings,
    }
}

// ---------------------------------------------------------------------------
// Cross audits
// ---------------------------------------------------------------------------

/// The signed artifact that clashes with the convicting statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Conflicting {
    /// A second signed promise from the same shard that cannot coexist with
    /// the first (for example, two commits consuming one object).
    Promise(SignedPrepared),
    /// The shard's threshold-signed chain head sealing a history the
    /// statement contradicts.
    SealedChain(ShardDecision),
}

/// A conviction: the statement, the conflicting signed artifact, and a
/// human-readable account of why they cannot both be correct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conviction {
    pub shard: ShardId,
    pub statement: SignedPrepared,
    pub conflict: Conflicting,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditVerdict {
    Ok,
    Guilty(Conviction),
}

impl fmt::Display for AuditVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditVerdict::Ok => write!(f, "ok"),
            AuditVerdict::Guilty(c) => write!(f, "guilty shard {}: {}", c.shard, c.detail),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossReport {
    pub verdict: AuditVerdict,
    pub findings: Vec<Finding>,
}

impl CrossReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&f.to_string());
            out.push('\n');
        }
        out.push_str(&format!("verdict\t{}\n", self.verdict));
        out
    }
}

/// The latest threshold-endorsed head of a chain, if any.
fn best_decision(
    header: &ChainHeader,
    records: &[ChainRecord],
    upto: u64,
) -> Option<ShardDecision> {
    let keys = header.key_set();
    records
        .iter()
        .rev()
        .filter(|r| r.checkpoint.seq_no < upto)
        .map(|r| &r.decision)
        .find(|d| d.verify(&keys, header.f as usize))
        .cloned()
}

/// Hunt one direction: every statement signed by `suspect`'s nodes found in
/// the other chain must agree with what `suspect`'s own chain proves its
/// honest decision was.
///
/// Two passes. The first looks only for promise pairs — two signed
/// statements from the suspect that cannot coexist, the self-contained form
/// of proof. The second falls back to citing the suspect's threshold-signed
/// head against any remaining mismatch.
fn convict(
    suspect: &ChainHeader,
    suspect_records: &[ChainRecord],
    suspect_replay: &Replay,
    other_replay: &Replay,
    suspect_complete: bool,
    findings: &mut Vec<Finding>,
) -> Option<Conviction> {
    let keys = suspect.key_set();
    let attributed: Vec<&SignedPrepared> = other_replay
        .foreign_stmts
        .iter()
        .map(|(_, stmt)| stmt)
        .filter(|stmt| {
            stmt.shard == suspect.shard && keys.contains(&stmt.node) && stmt.verify()
        })
        .collect();

    for stmt in &attributed {
        // Any same-node pair of contradicting promises convicts outright.
        for own in &suspect_replay.own_stmts {
            if own.contradicts(stmt) {
                return Some(Conviction {
                    shard: suspect.shard,
                    statement: (*stmt).clone(),
                    conflict: Conflicting::Promise(own.clone()),
                    detail: format!(
                        "node signed both {} and {} for tx {}",
                        stmt.decision, own.decision, stmt.txd
                    ),
                });
            }
        }
        // A commit promise for a transaction whose input the suspect's own
        // chain shows consumed: cite the suspect's signed commit for the
        // consumer. Two commits of one object cannot both be honest.
        if !stmt.decision.is_commit() {
            continue;
        }
        let Some(Decision::Abort(AbortReason::InactiveInput(id))) =
            suspect_replay.decisions.get(&stmt.txd)
        else {
            continue;
        };
        let Some(consumer) = suspect_replay.consumed_by.get(id) else {
            continue;
        };
        if let Some(prior) = suspect_replay.own_stmts.iter().find(|s| {
            s.txd == *consumer && s.txd != stmt.txd && s.decision.is_commit() && s.verify()
        }) {
            return Some(Conviction {
                shard: suspect.shard,
                statement: (*stmt).clone(),
                conflict: Conflicting::Promise(prior.clone()),
                detail: format!(
                    "shard {} signed commit for tx {} whose input {} its own chain shows consumed by tx {}, also signed commit",
                    suspect.shard, stmt.txd, id.0, consumer
                ),
            });
        }
    }

    for (seq, stmt) in &other_replay.foreign_stmts {
        if stmt.shard != suspect.shard || !keys.contains(&stmt.node) || !stmt.verify() {
            continue;
        }
        match suspect_replay.decisions.get(&stmt.txd) {
            Some(expected) if expected.kind() == stmt.decision.kind() => {}
            Some(expected) => {
                let detail = format!(
                    "shard {} signed {} for tx {} but its own chain proves {}",
                    suspect.shard, stmt.decision, stmt.txd, expected
                );
                if let Some(decision) = best_decision(suspect, suspect_records, u64::MAX) {
                    return Some(Conviction {
                        shard: suspect.shard,
                        statement: stmt.clone(),
                        conflict: Conflicting::SealedChain(decision),
                        detail,
                    });
                }
                findings.push(Finding {
                    seq_no: *seq,
                    kind: FindingKind::Note,
                    detail: format!("{detail}; no endorsed head to cite"),
                });
            }
            None if suspect_complete => {
                let detail = format!(
                    "shard {} signed {} for tx {} absent from its complete chain",
                    suspect.shard, stmt.decision, stmt.txd
                );
                if let Some(decision) = best_decision(suspect, suspect_records, u64::MAX) {
                    return Some(Conviction {
                        shard: suspect.shard,
                        statement: stmt.clone(),
                        conflict: Conflicting::SealedChain(decision),
                        detail,
                    });
                }
                findings.push(Finding {
                    seq_no: *seq,
                    kind: FindingKind::Note,
                    detail: format!("{detail}; no endorsed head to cite"),
                });
            }
            None => findings.push(Finding {
                seq_no: *seq,
                kind: FindingKind::Note,
                detail: format!(
                    "statement for tx {} beyond the truncated counterpart chain",
                    stmt.txd
                ),
            }),
        }
    }
    None
}

/// Audit two chains against each other. Each shard's signed promises found
/// in the other's log are checked against the shard's own replayed history;
/// the first irreconcilable pair convicts. Honest shards are never
/// convicted: their every signed statement matches their own replay.
pub fn cross_audit(
    a: (&ChainHeader, &[ChainRecord]),
    b: (&ChainHeader, &[ChainRecord]),
    reg: &CheckerRegistry,
) -> CrossReport {
    let (a_header, a_records) = a;
    let (b_header, b_records) = b;
    let mut findings = Vec::new();

    let a_replay = replay_chain(a_header, a_records, reg);
    let b_replay = replay_chain(b_header, b_records, reg);
    for (replay, header) in [(&a_replay, a_header), (&b_replay, b_header)] {
        if let Some(broken) = replay
            .findings
            .iter()
            .find(|f| matches!(f.kind, FindingKind::ChainBroken | FindingKind::BadRoot))
        {
            findings.push(Finding {
                seq_no: broken.seq_no,
                kind: broken.kind,
                detail: format!("shard {} chain: {}", header.shard, broken.detail),
            });
        }
    }
    if !findings.is_empty() {
        // Unsound chains cannot support a conviction.
        return CrossReport {
            verdict: AuditVerdict::Ok,
            findings,
        };
    }

    match a_records.len().cmp(&b_records.len()) {
        std::cmp::Ordering::Less => findings.push(Finding {
            seq_no: a_records.len() as u64,
            kind: FindingKind::Truncation,
            detail: format!(
                "shard {} chain ends at checkpoint {} while shard {} reaches {}",
                a_header.shard,
                a_records.len(),
                b_header.shard,
                b_records.len()
            ),
        }),
        std::cmp::Ordering::Greater => findings.push(Finding {
            seq_no: b_records.len() as u64,
            kind: FindingKind::Truncation,
            detail: format!(
                "shard {} chain ends at checkpoint {} while shard {} reaches {}",
                b_header.shard,
                b_records.len(),
                a_header.shard,
                a_records.len()
            ),
        }),
        std::cmp::Ordering::Equal => {}
    }

    let b_complete = b_records.len() >= a_records.len();
    let a_complete = a_records.len() >= b_records.len();
    let verdict = convict(
        b_header,
        b_records,
        &b_replay,
        &a_replay,
        b_complete,
        &mut findings,
    )
    .or_else(|| {
        convict(
            a_header,
            a_records,
            &a_replay,
            &b_replay,
            a_complete,
            &mut findings,
        )
    })
    .map(AuditVerdict::Guilty)
    .unwrap_or(AuditVerdict::Ok);

    CrossReport { verdict, findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash::hash;
    use crate::model::{genesis_object, ActiveSet, ContractId, OutputSpec, Trace, Transaction, TypeTag};
    use crate::shard::shard_of;
    use crate::validity::{CheckerContext, ContractChecker};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn contract() -> ContractId {
        ContractId(hash("contract-for-test", b""))
    }

    fn always_true(_: &CheckerContext<'_>) -> bool {
        true
    }

    fn registry() -> CheckerRegistry {
        let mut reg = CheckerRegistry::new();
        reg.register(ContractChecker {
            contract: contract(),
            name: "widget".into(),
            types: BTreeSet::from(["W".to_string()]),
            checker: always_true,
        });
        reg
    }

    fn w() -> TypeTag {
        TypeTag::new(contract(), "W")
    }

    fn gen_on_shard(shard: ShardId, shard_count: u32, salt: u64) -> Object {
        for idx in 0.. {
            let obj = genesis_object(salt, idx, w(), vec![]);
            if shard_of(&obj.id, shard_count) == shard {
                return obj;
            }
        }
        unreachable!()
    }

    fn consume_tx(objs: &[&Object], outputs: usize) -> TxEnvelope {
        let trace = Trace::build(
            contract(),
            "consume",
            objs.iter().map(|o| o.id).collect(),
            vec![],
            (0..outputs)
                .map(|_| OutputSpec {
                    type_tag: w(),
                    payload: vec![],
                })
                .collect(),
            vec![],
            vec![],
            vec![],
        );
        let view = ActiveSet::from_objects(objs.iter().map(|o| (*o).clone()));
        TxEnvelope::package(Transaction::new(vec![trace]), &view)
    }

    fn keys(n: usize, seed: u64) -> Vec<SigningKey> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| SigningKey::generate(&mut rng)).collect()
    }

    fn commit_stmts(
        keys: &[SigningKey],
        count: usize,
        txd: Digest,
        shard: ShardId,
    ) -> Vec<SignedPrepared> {
        keys.iter()
            .take(count)
            .map(|k| SignedPrepared::sign(k, txd, shard, Decision::Commit))
            .collect()
    }

    fn entry_bundle(env: &TxEnvelope, evidence: Vec<SignedPrepared>) -> Vec<CheckpointEntry> {
        let accept = Accept {
            txd: env.digest(),
            decision: Decision::Commit,
            evidence: evidence.clone(),
        };
        let mut entries = vec![CheckpointEntry::PrepareSeq {
            envelope: env.clone(),
        }];
        entries.extend(
            evidence
                .into_iter()
                .map(|stmt| CheckpointEntry::PromiseSeen { stmt }),
        );
        entries.push(CheckpointEntry::AcceptSeen { accept });
        entries.push(CheckpointEntry::CommittedTx {
            envelope: env.clone(),
        });
        entries
    }

    /// Seal a chain of one checkpoint per entry batch, with head
    /// endorsements from the first f+1 keys.
    fn sealed_chain(
        shard: ShardId,
        node_keys: &[SigningKey],
        f: usize,
        batches: Vec<Vec<CheckpointEntry>>,
    ) -> Vec<ChainRecord> {
        let mut records = Vec::new();
        let mut prev = Digest::ZERO;
        for (i, entries) in batches.into_iter().enumerate() {
            let cp = seal_checkpoint(i as u64, prev, entries);
            prev = cp.head;
            let sigs = node_keys
                .iter()
                .take(f + 1)
                .map(|k| {
                    let hs = HeadSig::sign(k, shard, cp.seq_no, cp.head);
                    KeySig {
                        key: hs.node,
                        sig: hs.sig,
                    }
                })
                .collect();
            let decision = ShardDecision {
                shard,
                seq_no: cp.seq_no,
                head: cp.head,
                sigs,
            };
            records.push(ChainRecord {
                checkpoint: cp,
                decision,
            });
        }
        records
    }

    fn header_for(
        shard: ShardId,
        shard_count: u32,
        f: u64,
        node_keys: &[SigningKey],
        genesis: Vec<Object>,
    ) -> ChainHeader {
        ChainHeader {
            shard,
            shard_count,
            f,
            epoch: 16,
            keys: node_keys.iter().map(|k| k.verify_key()).collect(),
            genesis,
        }
    }

    #[test]
    fn identical_entries_seal_identical_heads() {
        let g = gen_on_shard(0, 2, 1);
        let env = consume_tx(&[&g], 1);
        let entries = vec![CheckpointEntry::PrepareSeq { envelope: env }];
        let a = seal_checkpoint(0, Digest::ZERO, entries.clone());
        let b = seal_checkpoint(0, Digest::ZERO, entries.clone());
        assert_eq!(a.head, b.head);
        // Reordering changes the head.
        let g2 = gen_on_shard(0, 2, 2);
        let env2 = consume_tx(&[&g2], 1);
        let two = vec![
            entries[0].clone(),
            CheckpointEntry::PrepareSeq { envelope: env2 },
        ];
        let mut swapped = two.clone();
        swapped.reverse();
        assert_ne!(
            seal_checkpoint(0, Digest::ZERO, two).head,
            seal_checkpoint(0, Digest::ZERO, swapped).head
        );
    }

    #[test]
    fn empty_epochs_seal_and_link() {
        let mut log = ChainLog::new(0);
        assert_eq!(log.head(), Digest::ZERO);
        let first = log.seal().clone();
        assert_eq!(first.prev_head, Digest::ZERO);
        assert_eq!(first.merkle_root, Digest::ZERO);
        let second = log.seal().clone();
        assert_eq!(second.prev_head, first.head);
        assert_eq!(second.seq_no, 1);
        assert_ne!(first.head, second.head);
    }

    #[test]
    fn linkage_faults_are_found_at_the_right_seq() {
        let ks = keys(4, 7);
        let mut records = sealed_chain(0, &ks, 1, vec![vec![], vec![], vec![]]);
        // Skip a sequence number.
        records[2].checkpoint.seq_no = 5;
        let broken = check_linkage(&records).expect("broken");
        assert_eq!(broken.kind, FindingKind::ChainBroken);
        assert_eq!(broken.seq_no, 2);

        let mut records = sealed_chain(0, &ks, 1, vec![vec![], vec![]]);
        records[1].checkpoint.prev_head = Digest::ZERO;
        assert_eq!(
            check_linkage(&records).expect("broken").kind,
            FindingKind::ChainBroken
        );

        let g = gen_on_shard(0, 2, 3);
        let env = consume_tx(&[&g], 1);
        let mut records = sealed_chain(
            0,
            &ks,
            1,
            vec![vec![CheckpointEntry::PrepareSeq { envelope: env }]],
        );
        records[0].checkpoint.entries.clear();
        assert_eq!(
            check_linkage(&records).expect("broken").kind,
            FindingKind::BadRoot
        );
    }

    #[test]
    fn shard_decision_needs_threshold_of_members() {
        let ks = keys(4, 11);
        let head = hash("chain", b"h");
        let member_set: BTreeSet<VerifyKey> = ks.iter().map(|k| k.verify_key()).collect();
        let sig_of = |k: &SigningKey| {
            let hs = HeadSig::sign(k, 0, 3, head);
            KeySig {
                key: hs.node,
                sig: hs.sig,
            }
        };
        let mut decision = ShardDecision {
            shard: 0,
            seq_no: 3,
            head,
            sigs: vec![sig_of(&ks[0])],
        };
        assert!(!decision.verify(&member_set, 1), "one signer is not f+1");
        decision.sigs.push(sig_of(&ks[0]));
        assert!(!decision.verify(&member_set, 1), "duplicates count once");
        decision.sigs.push(sig_of(&ks[1]));
        assert!(decision.verify(&member_set, 1));
        // Outsiders do not count toward the threshold.
        let outsider = keys(1, 99).remove(0);
        let mut foreign = decision.clone();
        foreign.sigs = vec![sig_of(&ks[0]), sig_of(&outsider)];
        assert!(!foreign.verify(&member_set, 1));
    }

    #[test]
    fn partial_audit_round_trip_and_binding() {
        let ks = keys(4, 13);
        let g = gen_on_shard(0, 2, 5);
        let env = consume_tx(&[&g], 1);
        let txd = env.digest();
        let evidence = commit_stmts(&ks, 2, txd, 0);
        let records = sealed_chain(0, &ks, 1, vec![entry_bundle(&env, evidence)]);
        let member_set: BTreeSet<VerifyKey> = ks.iter().map(|k| k.verify_key()).collect();

        let mut log = ChainLog::new(0);
        for e in &records[0].checkpoint.entries {
            log.push(e.clone());
        }
        log.seal();
        let (header, entry, inclusion) = log.find_decision(&txd).expect("committed entry");
        let proof = PartialAuditProof::Known {
            decision: records[0].decision.clone(),
            header,
            entry,
            inclusion,
        };
        assert!(verify_partial(&proof, &txd, &member_set, 1));

        // Tampered entry bytes fail Merkle binding.
        if let PartialAuditProof::Known {
            decision,
            header,
            inclusion,
            ..
        } = proof.clone()
        {
            let forged = PartialAuditProof::Known {
                decision,
                header,
                entry: CheckpointEntry::AbortedTx {
                    txd,
                    reason: AbortReason::OutputsWithoutInputs,
                },
                inclusion,
            };
            assert!(!verify_partial(&forged, &txd, &member_set, 1));
        }
        // A proof about a different transaction fails.
        let other = hash("tx", b"other");
        assert!(!verify_partial(&proof, &other, &member_set, 1));
        // Encode round-trip.
        let bytes = proof.encode();
        assert_eq!(PartialAuditProof::decode(&bytes), Ok(proof));

        // Unknown arm.
        let unknown = PartialAuditProof::Unknown(UnknownTx::sign(&ks[2], other, 0));
        assert!(verify_partial(&unknown, &other, &member_set, 1));
        assert!(!verify_partial(&unknown, &txd, &member_set, 1));
        let bytes = unknown.encode();
        assert_eq!(PartialAuditProof::decode(&bytes), Ok(unknown));
    }

    #[test]
    fn proof_paths_grow_one_digest_per_doubling() {
        let log = ChainLog::new(0);
        let mut sizes = Vec::new();
        for n in [4usize, 8, 16, 32] {
            let mut log2 = ChainLog::new(0);
            let mut first_txd = None;
            for i in 0..n {
                let g = gen_on_shard(0, 2, 1000 + i as u64);
                let env = consume_tx(&[&g], 0);
                if first_txd.is_none() {
                    first_txd = Some(env.digest());
                }
                log2.push(CheckpointEntry::CommittedTx { envelope: env });
            }
            log2.seal();
            let (_, _, proof) = log2.find_decision(&first_txd.unwrap()).unwrap();
            sizes.push(proof.path.len());
        }
        assert_eq!(sizes, vec![2, 3, 4, 5]);
        drop(log);
    }

    #[test]
    fn honest_chain_audits_clean() {
        let ks = keys(4, 17);
        let g = gen_on_shard(0, 2, 21);
        let env = consume_tx(&[&g], 1);
        let evidence = commit_stmts(&ks, 2, env.digest(), 0);
        let records = sealed_chain(0, &ks, 1, vec![entry_bundle(&env, evidence), vec![]]);
        let header = header_for(0, 2, 1, &ks, vec![g]);
        let report = full_audit(&header, &records, &registry());
        assert!(report.is_clean(), "findings: {}", report.render());
        assert_eq!(report.checkpoints, 2);
    }

    #[test]
    fn committed_but_checker_rejected_diverges() {
        let ks = keys(4, 19);
        let g = gen_on_shard(0, 2, 23);
        // The replayed store knows g is on shard 0; consuming it twice in
        // two transactions makes the second one invalid.
        let env1 = consume_tx(&[&g], 1);
        let env2 = {
            // Different tx body (two outputs) consuming the same input.
            let trace = Trace::build(
                contract(),
                "consume",
                vec![g.id],
                vec![],
                vec![
                    OutputSpec {
                        type_tag: w(),
                        payload: b"x".to_vec(),
                    },
                ],
                vec![],
                vec![],
                vec![],
            );
            let view = ActiveSet::from_objects([g.clone()]);
            TxEnvelope::package(Transaction::new(vec![trace]), &view)
        };
        let records = sealed_chain(
            0,
            &ks,
            1,
            vec![
                entry_bundle(&env1, commit_stmts(&ks, 2, env1.digest(), 0)),
                entry_bundle(&env2, commit_stmts(&ks, 2, env2.digest(), 0)),
            ],
        );
        let header = header_for(0, 2, 1, &ks, vec![g]);
        let report = full_audit(&header, &records, &registry());
        assert!(!report.is_clean());
        // The lying promises and the committed entry are both flagged, at
        // the checkpoint that holds them.
        assert!(report
            .findings
            .iter()
            .any(|f| f.seq_no == 1 && f.detail.contains("replay rejects")));
        assert!(report
            .findings
            .iter()
            .any(|f| f.seq_no == 1 && f.detail.contains("own-shard promise says")));
    }

    /// Build the canonical dishonest-shard pair: shard 1 signs commit for
    /// two transactions consuming the same object; shard 0 is honest and
    /// holds the other transaction legs.
    fn ds_chains() -> (
        (ChainHeader, Vec<ChainRecord>),
        (ChainHeader, Vec<ChainRecord>),
    ) {
        let a_keys = keys(4, 31);
        let b_keys = keys(4, 37);
        let a0 = gen_on_shard(0, 2, 41);
        let a1 = gen_on_shard(0, 2, 43);
        let b0 = gen_on_shard(1, 2, 47);
        let genesis = vec![a0.clone(), a1.clone(), b0.clone()];

        // tx1 consumes {a0, b0}; tx2 consumes {a1, b0} — b0 twice.
        let tx1 = consume_tx(&[&a0, &b0], 1);
        let tx2 = consume_tx(&[&a1, &b0], 1);
        let ev1: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx1.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx1.digest(), 1))
            .collect();
        let ev2: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx2.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx2.digest(), 1))
            .collect();

        let a_records = sealed_chain(
            0,
            &a_keys,
            1,
            vec![
                entry_bundle(&tx1, ev1.clone()),
                entry_bundle(&tx2, ev2.clone()),
            ],
        );
        let b_records = sealed_chain(
            1,
            &b_keys,
            1,
            vec![entry_bundle(&tx1, ev1), entry_bundle(&tx2, ev2)],
        );
        (
            (header_for(0, 2, 1, &a_keys, genesis.clone()), a_records),
            (header_for(1, 2, 1, &b_keys, genesis), b_records),
        )
    }

    #[test]
    fn cross_audit_convicts_the_double_spending_shard() {
        let ((a_header, a_records), (b_header, b_records)) = ds_chains();
        // Shard 0 validated only its own objects, both of which were fresh,
        // so its chain is honest; shard 1 signed commit for two transactions
        // consuming b0 and its own chain proves the second was a lie.
        let report = cross_audit(
            (&a_header, &a_records),
            (&b_header, &b_records),
            &registry(),
        );
        let AuditVerdict::Guilty(c) = &report.verdict else {
            panic!("expected a conviction");
        };
        let Conflicting::Promise(second) = &c.conflict else {
            panic!("expected a promise pair, got {:?}", c.conflict);
        };
        assert_eq!(c.statement.shard, c.shard);
        assert_eq!(second.shard, c.shard);
        assert!(c.statement.decision.is_commit() && second.decision.is_commit());
        assert_ne!(c.statement.txd, second.txd, "two different transactions");
        assert!(c.detail.contains("consumed"));
    }

    #[test]
    fn cross_audit_of_honest_chains_is_ok() {
        let a_keys = keys(4, 51);
        let b_keys = keys(4, 53);
        let a0 = gen_on_shard(0, 2, 55);
        let b0 = gen_on_shard(1, 2, 57);
        let genesis = vec![a0.clone(), b0.clone()];
        let tx1 = consume_tx(&[&a0, &b0], 1);
        let ev: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx1.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx1.digest(), 1))
            .collect();
        let a_records = sealed_chain(0, &a_keys, 1, vec![entry_bundle(&tx1, ev.clone())]);
        let b_records = sealed_chain(1, &b_keys, 1, vec![entry_bundle(&tx1, ev)]);
        let a_header = header_for(0, 2, 1, &a_keys, genesis.clone());
        let b_header = header_for(1, 2, 1, &b_keys, genesis);
        let report = cross_audit((&a_header, &a_records), (&b_header, &b_records), &registry());
        assert_eq!(report.verdict, AuditVerdict::Ok);
        assert!(report.findings.is_empty(), "{}", report.render());
        // And each chain independently audits clean.
        assert!(full_audit(&a_header, &a_records, &registry()).is_clean());
        assert!(full_audit(&b_header, &b_records, &registry()).is_clean());
    }

    #[test]
    fn truncated_honest_chain_reports_truncation_not_guilt() {
        let a_keys = keys(4, 61);
        let b_keys = keys(4, 63);
        let a0 = gen_on_shard(0, 2, 65);
        let a1 = gen_on_shard(0, 2, 66);
        let b0 = gen_on_shard(1, 2, 67);
        let b1 = gen_on_shard(1, 2, 68);
        let genesis = vec![a0.clone(), a1.clone(), b0.clone(), b1.clone()];
        let tx1 = consume_tx(&[&a0, &b0], 1);
        let tx2 = consume_tx(&[&a1, &b1], 1);
        let ev1: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx1.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx1.digest(), 1))
            .collect();
        let ev2: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx2.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx2.digest(), 1))
            .collect();
        let a_records = sealed_chain(
            0,
            &a_keys,
            1,
            vec![entry_bundle(&tx1, ev1.clone()), entry_bundle(&tx2, ev2)],
        );
        // B's chain stops before tx2's epoch.
        let b_records = sealed_chain(1, &b_keys, 1, vec![entry_bundle(&tx1, ev1)]);
        let a_header = header_for(0, 2, 1, &a_keys, genesis.clone());
        let b_header = header_for(1, 2, 1, &b_keys, genesis);
        let report = cross_audit((&a_header, &a_records), (&b_header, &b_records), &registry());
        assert_eq!(report.verdict, AuditVerdict::Ok);
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == FindingKind::Truncation));
    }

    #[test]
    fn statement_missing_from_a_complete_chain_convicts() {
        let a_keys = keys(4, 71);
        let b_keys = keys(4, 73);
        let a0 = gen_on_shard(0, 2, 75);
        let b0 = gen_on_shard(1, 2, 77);
        let genesis = vec![a0.clone(), b0.clone()];
        let tx1 = consume_tx(&[&a0, &b0], 1);
        let ev: Vec<SignedPrepared> = commit_stmts(&a_keys, 2, tx1.digest(), 0)
            .into_iter()
            .chain(commit_stmts(&b_keys, 2, tx1.digest(), 1))
            .collect();
        let a_records = sealed_chain(0, &a_keys, 1, vec![entry_bundle(&tx1, ev)]);
        // B's chain has the same number of checkpoints but never mentions
        // the transaction it signed.
        let b_records = sealed_chain(1, &b_keys, 1, vec![vec![]]);
        let a_header = header_for(0, 2, 1, &a_keys, genesis.clone());
        let b_header = header_for(1, 2, 1, &b_keys, genesis);
        let report = cross_audit((&a_header, &a_records), (&b_header, &b_records), &registry());
        let AuditVerdict::Guilty(c) = &report.verdict else {
            panic!("expected conviction, got ok: {}", report.render());
        };
        assert_eq!(c.shard, 1);
        assert!(matches!(c.conflict, Conflicting::SealedChain(_)));
    }

    #[test]
    fn replay_accepts_shipped_objects_with_evidence() {
        let ks = keys(4, 81);
        let other_keys = keys(4, 83);
        // A transaction on shard 0 whose output lands on shard 1.
        let g = gen_on_shard(0, 2, 85);
        let mut env = consume_tx(&[&g], 3);
        // Find an output homed on shard 1; rebuild with more outputs until
        // one lands there.
        let mut salt = 85;
        let landed = loop {
            let outputs = crate::model::net_outputs(&env.tx);
            if let Some(o) = outputs.iter().find(|o| shard_of(&o.id, 2) == 1) {
                break o.clone();
            }
            salt += 1;
            let g2 = gen_on_shard(0, 2, salt);
            env = consume_tx(&[&g2], 3);
        };
        let evidence = Accept {
            txd: env.digest(),
            decision: Decision::Commit,
            evidence: commit_stmts(&ks, 2, env.digest(), 0),
        };
        let create = CreateObject {
            object: landed.clone(),
            envelope: env.clone(),
            evidence,
        };
        assert!(create.verify(2, 1));
        let records = sealed_chain(
            1,
            &other_keys,
            1,
            vec![
                vec![CheckpointEntry::ObjectCreated { create }],
                // A follow-up transaction consumes the shipped object.
                entry_bundle(
                    &consume_tx(&[&landed], 0),
                    commit_stmts(&other_keys, 2, consume_tx(&[&landed], 0).digest(), 1),
                ),
            ],
        );
        let header = header_for(1, 2, 1, &other_keys, vec![]);
        let report = full_audit(&header, &records, &registry());
        assert!(report.is_clean(), "{}", report.render());
    }

    #[test]
    fn chain_files_round_trip() {
        let ks = keys(4, 91);
        let g = gen_on_shard(0, 2, 93);
        let env = consume_tx(&[&g], 1);
        let records = sealed_chain(
            0,
            &ks,
            1,
            vec![entry_bundle(&env, commit_stmts(&ks, 2, env.digest(), 0))],
        );
        let header = header_for(0, 2, 1, &ks, vec![g]);
        let bytes = encode_chain(&header, &records);
        let (h2, r2) = decode_chain(&bytes).expect("decodes");
        assert_eq!(h2, header);
        assert_eq!(r2, records);
        // Truncating mid-record is an error, not a silent prefix.
        assert!(decode_chain(&bytes[..bytes.len() - 3]).is_err());
    }
}
