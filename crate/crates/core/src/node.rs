//! The per-node protocol state machine.
//!
//! A node belongs to one shard. It takes packets off the wire, feeds its
//! shard's ordering pipeline, reacts to the items that pipeline emits, and
//! keeps a hash-chained log of everything it sequenced. The atomic-commit
//! protocol it speaks: a transaction's body is sequenced on every concerned
//! shard; each member signs its shard's verdict; the signed verdicts travel
//! between shards until some node holds a decisive set, assembles the final
//! verdict with its evidence, and has it sequenced; the commit is then
//! applied and any output homed on an unconcerned shard is shipped there
//! with the evidence attached.
//!
//! The node is deterministic and side-effect free: the embedding simulation
//! delivers packets, steps the shared pipeline, and drains the node's
//! outbox, submissions, and events. Faulty behaviors are implemented here
//! too — a silent node ignores everything, a liar signs the opposite of the
//! verdict it computed, an equivocator shows different verdicts to
//! different peers.

use std::collections::{BTreeMap, BTreeSet};

use crate::audit::{
    ChainHeader, ChainLog, ChainRecord, Checkpoint, CheckpointEntry, HeadSig, ShardDecision,
};
use crate::contracts::KeySig;
use crate::crypto::hash::Digest;
use crate::crypto::sig::{Signature, SigningKey, VerifyKey};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{free_inputs, Object, TxEnvelope};
use crate::orderer::{FaultBehavior, Sequenced};
use crate::sbac::{sequence_key, Accept, CreateObject, DecisionTracker, SbacMessage, SignedPrepared};
use crate::shard::{concerned_shards, shard_of, Decision, ShardId, ShardStore};
use crate::validity::{AbortReason, CheckerRegistry};

// ---------------------------------------------------------------------------
// Addressing and wire format
// ---------------------------------------------------------------------------

/// A node's place in the network: shard number and member index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeAddr {
    pub shard: ShardId,
    pub index: usize,
}

impl std::fmt::Display for NodeAddr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.shard, self.index)
    }
}

/// Where an outbound packet goes. Clients have no protocol address; they
/// are reached through the transaction they submitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Node(NodeAddr),
    Client(Digest),
}

/// A packet queued for the network.
#[derive(Debug, Clone)]
pub struct Outbound {
    pub to: Dest,
    pub msg: WireMsg,
}

/// Everything that travels between nodes (and back to clients).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMsg {
    Sbac(SbacMessage),
    /// The final verdict, with evidence, returned to the submitting client.
    Notice { accept: Accept },
    /// One node's signature over a sealed checkpoint head.
    HeadSig(HeadSig),
}

impl Encode for WireMsg {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        match self {
            WireMsg::Sbac(m) => m.encode_into(e),
            WireMsg::Notice { accept } => e.node(tag::MSG_NOTICE, |e| accept.encode_into(e)),
            WireMsg::HeadSig(hs) => hs.encode_into(e),
        }
    }
}

impl Decode for WireMsg {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        match d.peek_tag()? {
            tag::MSG_NOTICE => d.node(tag::MSG_NOTICE, |d| {
                Ok(WireMsg::Notice {
                    accept: Accept::decode_from(d)?,
                })
            }),
            tag::HEAD_SIG => Ok(WireMsg::HeadSig(HeadSig::decode_from(d)?)),
            _ => Ok(WireMsg::Sbac(SbacMessage::decode_from(d)?)),
        }
    }
}

// ---------------------------------------------------------------------------
// Protocol parameters
// ---------------------------------------------------------------------------

/// Network-wide protocol constants every node agrees on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Params {
    pub shard_count: u32,
    pub nodes_per_shard: usize,
    /// Byzantine members tolerated per shard.
    pub f: usize,
    /// Ordering-pipeline latency in rounds.
    pub latency: u64,
    /// Rounds after a sequenced prepare before a node starts re-sending its
    /// own verdict to every concerned shard's coordinator.
    pub delta1: u64,
    /// Rounds after a sequenced prepare before every node broadcasts all
    /// the verdicts it holds — the coordinator is presumed failed.
    pub delta2: u64,
    /// Rounds a committed cross-shard output keeps being re-shipped.
    pub create_window: u64,
    /// Rounds between checkpoint seals.
    pub epoch: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            shard_count: 2,
            nodes_per_shard: 4,
            f: 1,
            latency: 2,
            delta1: 4,
            delta2: 8,
            create_window: 8,
            epoch: 16,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("nodes_per_shard must be at least 3f+1 (got n={n}, f={f})")]
    TooFewNodes { n: usize, f: usize },
    #[error("delta2 must exceed delta1 (got delta1={delta1}, delta2={delta2})")]
    TimerOrder { delta1: u64, delta2: u64 },
    #[error("shard count must be positive")]
    NoShards,
    #[error("epoch length must be positive")]
    ZeroEpoch,
}

impl Params {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.shard_count == 0 {
            return Err(ParamError::NoShards);
        }
        if self.nodes_per_shard < 3 * self.f + 1 {
            return Err(ParamError::TooFewNodes {
                n: self.nodes_per_shard,
                f: self.f,
            });
        }
        if self.delta2 <= self.delta1 {
            return Err(ParamError::TimerOrder {
                delta1: self.delta1,
                delta2: self.delta2,
            });
        }
        if self.epoch == 0 {
            return Err(ParamError::ZeroEpoch);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-transaction state
// ---------------------------------------------------------------------------

/// A terminal decision observed by this node, reported to the embedding
/// simulation for latency accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedEvent {
    pub txd: Digest,
    pub round: u64,
    pub committed: bool,
}

#[derive(Debug, Clone)]
struct TxState {
    envelope: TxEnvelope,
    tracker: DecisionTracker,
    /// Round our shard sequenced the prepare; reference for the timers.
    seq_round: u64,
    /// The verdict this node signed and shows (liars sign a lie here).
    my_stmt: SignedPrepared,
    resolved: Option<(u64, Decision)>,
    /// Outputs of a committed transaction homed on unconcerned shards,
    /// re-shipped until the window closes.
    ship: Vec<CreateObject>,
}

// ---------------------------------------------------------------------------
// The node
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Node {
    addr: NodeAddr,
    behavior: FaultBehavior,
    key: SigningKey,
    /// Every member key in the network, indexed `[shard][member]`.
    directory: Vec<Vec<VerifyKey>>,
    params: Params,
    store: ShardStore,
    chain: ChainLog,
    /// Promise statements already written to the chain, first observation
    /// wins.
    logged_stmts: BTreeSet<Vec<u8>>,
    txs: BTreeMap<Digest, TxState>,
    /// Signed verdicts that arrived before our shard sequenced the body.
    early_stmts: BTreeMap<Digest, Vec<SignedPrepared>>,
    /// Items queued for our shard's ordering pipeline.
    submissions: Vec<(Digest, SbacMessage)>,
    outbox: Vec<Outbound>,
    /// Peer signatures over our sealed heads, per checkpoint number.
    head_sigs: BTreeMap<u64, BTreeMap<VerifyKey, Signature>>,
    /// Collective endorsements assembled once f+1 signatures agree.
    endorsements: BTreeMap<u64, ShardDecision>,
    events: Vec<ResolvedEvent>,
    genesis: Vec<Object>,
}

impl Node {
    pub fn new(
        addr: NodeAddr,
        behavior: FaultBehavior,
        key: SigningKey,
        directory: Vec<Vec<VerifyKey>>,
        params: Params,
        genesis: &[Object],
    ) -> Node {
        params.validate().expect("validated parameters");
        assert_eq!(directory.len(), params.shard_count as usize);
        let store = ShardStore::new(addr.shard, params.shard_count, genesis);
        Node {
            addr,
            behavior,
            key,
            directory,
            params,
            store,
            chain: ChainLog::new(addr.shard),
            logged_stmts: BTreeSet::new(),
            txs: BTreeMap::new(),
            early_stmts: BTreeMap::new(),
            submissions: Vec::new(),
            outbox: Vec::new(),
            head_sigs: BTreeMap::new(),
            endorsements: BTreeMap::new(),
            events: Vec::new(),
            genesis: genesis.to_vec(),
        }
    }

    pub fn addr(&self) -> NodeAddr {
        self.addr
    }

    pub fn behavior(&self) -> FaultBehavior {
        self.behavior
    }

    pub fn verify_key(&self) -> VerifyKey {
        self.key.verify_key()
    }

    pub fn store(&self) -> &ShardStore {
        &self.store
    }

    pub fn chain(&self) -> &ChainLog {
        &self.chain
    }

    /// The decision this node has observed for a transaction, if any.
    pub fn resolution(&self, txd: &Digest) -> Option<&Decision> {
        self.txs
            .get(txd)
            .and_then(|st| st.resolved.as_ref())
            .map(|(_, d)| d)
    }

    fn member(&self, shard: ShardId, key: &VerifyKey) -> bool {
        self.directory
            .get(shard as usize)
            .is_some_and(|keys| keys.contains(key))
    }

    fn coordinator(&self, shard: ShardId) -> NodeAddr {
        NodeAddr { shard, index: 0 }
    }

    fn shard_members(&self, shard: ShardId) -> impl Iterator<Item = NodeAddr> + '_ {
        (0..self.params.nodes_per_shard).map(move |index| NodeAddr { shard, index })
    }

    fn send(&mut self, to: NodeAddr, msg: WireMsg) {
        if to != self.addr {
            self.outbox.push(Outbound {
                to: Dest::Node(to),
                msg,
            });
        }
    }

    // -- inbound packets ----------------------------------------------------

    /// Absorb one delivered packet. Call once per packet per round, before
    /// `drive`.
    pub fn handle_packet(&mut self, msg: WireMsg, _round: u64) {
        if self.behavior.is_silent() {
            return;
        }
        match msg {
            WireMsg::Sbac(SbacMessage::Prepare { envelope }) => self.on_prepare(envelope),
            WireMsg::Sbac(SbacMessage::Prepared(sp)) => self.absorb_statement(sp),
            WireMsg::Sbac(SbacMessage::Accept(a)) => {
                // Not part of the node-to-node flow, but evidence is
                // evidence wherever it arrives.
                for sp in a.evidence {
                    self.absorb_statement(sp);
                }
            }
            WireMsg::Sbac(SbacMessage::CreateObject(c)) => self.on_create(c),
            WireMsg::Notice { accept } => {
                for sp in accept.evidence {
                    self.absorb_statement(sp);
                }
            }
            WireMsg::HeadSig(hs) => self.on_head_sig(hs),
        }
    }

    fn on_prepare(&mut self, envelope: TxEnvelope) {
        let txd = envelope.digest();
        if let Some(st) = self.txs.get(&txd) {
            // The client retries until it hears a verdict; if ours is in,
            // answer straight away — the original notice may have been lost.
            if let Some((_, decision)) = st.resolved.clone() {
                let accept = st.tracker.assemble().unwrap_or(Accept {
                    txd,
                    decision,
                    evidence: Vec::new(),
                });
                self.outbox.push(Outbound {
                    to: Dest::Client(txd),
                    msg: WireMsg::Notice { accept },
                });
            }
            return;
        }
        let Ok(concerned) = concerned_shards(&envelope, self.params.shard_count) else {
            return;
        };
        if !concerned.contains(&self.addr.shard) {
            return;
        }
        let key = sequence_key(&SbacMessage::Prepare {
            envelope: envelope.clone(),
        });
        self.submissions.push((key, SbacMessage::Prepare { envelope }));
    }

    fn absorb_statement(&mut self, sp: SignedPrepared) {
        if !self.member(sp.shard, &sp.node) || !sp.verify() {
            return;
        }
        match self.txs.get_mut(&sp.txd) {
            Some(st) => {
                st.tracker.record(sp);
            }
            None => {
                let buf = self.early_stmts.entry(sp.txd).or_default();
                if !buf.contains(&sp) {
                    buf.push(sp);
                }
            }
        }
    }

    fn on_create(&mut self, c: CreateObject) {
        if shard_of(&c.object.id, self.params.shard_count) != self.addr.shard {
            return;
        }
        if !c.verify(self.params.shard_count, self.params.f) {
            return;
        }
        let key = sequence_key(&SbacMessage::CreateObject(c.clone()));
        self.submissions.push((key, SbacMessage::CreateObject(c)));
    }

    fn on_head_sig(&mut self, hs: HeadSig) {
        if hs.shard != self.addr.shard || !self.member(hs.shard, &hs.node) || !hs.verify() {
            return;
        }
        // Only collect signatures over the head we ourselves sealed.
        let Some(cp) = self.chain.sealed().get(hs.seq_no as usize) else {
            return;
        };
        if cp.head != hs.head {
            return;
        }
        self.head_sigs
            .entry(hs.seq_no)
            .or_default()
            .insert(hs.node, hs.sig);
        self.try_endorse(hs.seq_no);
    }

    fn try_endorse(&mut self, seq_no: u64) {
        if self.endorsements.contains_key(&seq_no) {
            return;
        }
        let Some(cp) = self.chain.sealed().get(seq_no as usize) else {
            return;
        };
        let Some(sigs) = self.head_sigs.get(&seq_no) else {
            return;
        };
        if sigs.len() > self.params.f {
            let decision = ShardDecision {
                shard: self.addr.shard,
                seq_no,
                head: cp.head,
                sigs: sigs
                    .iter()
                    .map(|(key, sig)| KeySig {
                        key: *key,
                        sig: *sig,
                    })
                    .collect(),
            };
            self.endorsements.insert(seq_no, decision);
        }
    }

    // -- the shared ordering pipeline ---------------------------------------

    /// Drain the items this node wants its shard's pipeline to sequence.
    pub fn take_submissions(&mut self) -> Vec<(Digest, SbacMessage)> {
        if self.behavior.is_silent() {
            self.submissions.clear();
        }
        std::mem::take(&mut self.submissions)
    }

    /// React to one item of the shard's total order. Every member is fed
    /// the same sequence; honest members therefore log identical chains.
    pub fn handle_sequenced(
        &mut self,
        s: &Sequenced<SbacMessage>,
        reg: &CheckerRegistry,
        round: u64,
    ) {
        if self.behavior.is_silent() {
            return;
        }
        match &s.item {
            SbacMessage::Prepare { envelope } => self.seq_prepare(envelope, reg, round),
            SbacMessage::Accept(a) => self.seq_accept(a, round),
            SbacMessage::CreateObject(c) => self.seq_create(c),
            SbacMessage::Prepared(_) => {}
        }
    }

    fn seq_prepare(&mut self, envelope: &TxEnvelope, reg: &CheckerRegistry, round: u64) {
        let txd = envelope.digest();
        if self.txs.contains_key(&txd) {
            return;
        }
        let Ok(concerned) = concerned_shards(envelope, self.params.shard_count) else {
            return;
        };
        self.chain.push(CheckpointEntry::PrepareSeq {
            envelope: envelope.clone(),
        });

        let honest = self.store.local_decision(envelope, reg);
        if honest.is_commit() {
            self.store.lock(envelope);
        }
        let (spoken, other_face) = match self.behavior {
            FaultBehavior::Liar => (self.invert(&honest, envelope), None),
            FaultBehavior::Equivocator => {
                let lie = SignedPrepared::sign(
                    &self.key,
                    txd,
                    self.addr.shard,
                    self.invert(&honest, envelope),
                );
                (honest, Some(lie))
            }
            _ => (honest, None),
        };
        let my_stmt = SignedPrepared::sign(&self.key, txd, self.addr.shard, spoken);

        let mut tracker = DecisionTracker::new(txd, concerned.clone(), self.params.f);
        tracker.record(my_stmt.clone());
        if let Some(early) = self.early_stmts.remove(&txd) {
            for sp in early {
                tracker.record(sp);
            }
        }

        // Hand the verdict to our shard's coordinator, which relays every
        // verdict it holds each round. An equivocator bypasses the relay
        // and shows its two faces to everyone directly.
        match self.behavior {
            FaultBehavior::Equivocator => {
                let faces = (my_stmt.clone(), other_face.clone().expect("equivocator"));
                for shard in &concerned {
                    for peer in self.shard_members(*shard).collect::<Vec<_>>() {
                        let face = if peer.index % 2 == 0 {
                            faces.0.clone()
                        } else {
                            faces.1.clone()
                        };
                        self.send(peer, WireMsg::Sbac(SbacMessage::Prepared(face)));
                    }
                }
            }
            _ => {
                let coord = self.coordinator(self.addr.shard);
                self.send(
                    coord,
                    WireMsg::Sbac(SbacMessage::Prepared(my_stmt.clone())),
                );
            }
        }

        self.txs.insert(
            txd,
            TxState {
                envelope: envelope.clone(),
                tracker,
                seq_round: round,
                my_stmt,
                resolved: None,
                ship: Vec::new(),
            },
        );
    }

    /// The lie a faulty node tells: the opposite verdict. An inverted abort
    /// is a commit; an inverted commit needs a pretext, so the first input
    /// is declared spent.
    fn invert(&self, honest: &Decision, envelope: &TxEnvelope) -> Decision {
        match honest {
            Decision::Commit => {
                let id = free_inputs(&envelope.tx)
                    .into_iter()
                    .next()
                    .expect("a committable transaction has inputs");
                Decision::Abort(AbortReason::InactiveInput(id))
            }
            Decision::Abort(_) => Decision::Commit,
        }
    }

    fn seq_accept(&mut self, accept: &Accept, round: u64) {
        let txd = accept.txd;
        let Some(st) = self.txs.get(&txd) else {
            // No body, no basis to apply anything. A real deployment would
            // fetch the body; the simulation never reaches this state
            // because a shard's own members only assemble verdicts for
            // transactions their shard sequenced.
            return;
        };
        if st.resolved.is_some() {
            return;
        }
        let Ok(concerned) = concerned_shards(&st.envelope, self.params.shard_count) else {
            return;
        };
        let membership_ok = accept
            .evidence
            .iter()
            .all(|sp| self.member(sp.shard, &sp.node));
        if !membership_ok || !accept.verify(&concerned, self.params.f) {
            // A forged or under-evidenced verdict: refuse it. It never
            // reaches the chain, so honest logs stay replayable.
            return;
        }

        // Log evidence first, then the verdict, then the outcome — the
        // order the audit replay expects.
        for sp in &accept.evidence {
            if self.logged_stmts.insert(sp.encode()) {
                self.chain
                    .push(CheckpointEntry::PromiseSeen { stmt: sp.clone() });
            }
        }
        self.chain.push(CheckpointEntry::AcceptSeen {
            accept: accept.clone(),
        });

        let envelope = st.envelope.clone();
        if accept.decision.is_commit() {
            self.chain.push(CheckpointEntry::CommittedTx {
                envelope: envelope.clone(),
            });
            self.store.release(&envelope);
            let foreign = self.store.consume_and_create(&envelope);
            let shippable: Vec<CreateObject> = foreign
                .into_iter()
                .map(|object| CreateObject {
                    object,
                    envelope: envelope.clone(),
                    evidence: accept.clone(),
                })
                .collect();
            let st = self.txs.get_mut(&txd).expect("state exists");
            // Shipping duty falls on the lowest concerned shard.
            if self.addr.shard == *concerned.iter().next().expect("non-empty") {
                st.ship = shippable;
            }
            st.resolved = Some((round, Decision::Commit));
        } else {
            self.chain.push(CheckpointEntry::AbortedTx {
                txd,
                reason: match &accept.decision {
                    Decision::Abort(r) => r.clone(),
                    Decision::Commit => unreachable!("branch is abort"),
                },
            });
            self.store.release(&envelope);
            let st = self.txs.get_mut(&txd).expect("state exists");
            st.resolved = Some((round, accept.decision.clone()));
        }

        self.events.push(ResolvedEvent {
            txd,
            round,
            committed: accept.decision.is_commit(),
        });
        self.outbox.push(Outbound {
            to: Dest::Client(txd),
            msg: WireMsg::Notice {
                accept: accept.clone(),
            },
        });
    }

    fn seq_create(&mut self, c: &CreateObject) {
        if !c.verify(self.params.shard_count, self.params.f) {
            return;
        }
        if shard_of(&c.object.id, self.params.shard_count) != self.addr.shard {
            return;
        }
        self.chain
            .push(CheckpointEntry::ObjectCreated { create: c.clone() });
        self.store.insert_object(c.object.clone());
    }

    // -- per-round duties ---------------------------------------------------

    /// Run this node's timers and relays for `round`. Call after packets
    /// are delivered and before the pipeline is stepped, once per round.
    pub fn drive(&mut self, round: u64) {
        if self.behavior.is_silent() {
            return;
        }
        self.relay_statements(round);
        self.stage_accepts();
        self.ship_outputs(round);
        self.seal_if_due(round);
        self.gossip_heads();
    }

    fn relay_statements(&mut self, round: u64) {
        let mut sends: Vec<(NodeAddr, SignedPrepared)> = Vec::new();
        for st in self.txs.values() {
            if st.resolved.is_some() {
                continue;
            }
            let concerned: Vec<ShardId> = st.tracker.concerned().iter().copied().collect();
            // The coordinator relays everything it holds, every round,
            // to every member of every concerned shard.
            if self.addr.index == 0 {
                for sp in st.tracker.all_statements() {
                    for shard in &concerned {
                        for peer in self.shard_members(*shard) {
                            sends.push((peer, sp.clone()));
                        }
                    }
                }
            } else {
                // Non-coordinators nudge the coordinators once the first
                // timer fires, and flood everyone once the second does.
                if round >= st.seq_round + self.params.delta1 {
                    for shard in &concerned {
                        sends.push((self.coordinator(*shard), st.my_stmt.clone()));
                    }
                }
                if round >= st.seq_round + self.params.delta2 {
                    for sp in st.tracker.all_statements() {
                        for shard in &concerned {
                            for peer in self.shard_members(*shard) {
                                sends.push((peer, sp.clone()));
                            }
                        }
                    }
                }
            }
        }
        for (peer, sp) in sends {
            self.send(peer, WireMsg::Sbac(SbacMessage::Prepared(sp)));
        }
    }

    fn stage_accepts(&mut self) {
        let mut staged = Vec::new();
        for st in self.txs.values() {
            if st.resolved.is_some() {
                continue;
            }
            if let Some(accept) = st.tracker.assemble() {
                let msg = SbacMessage::Accept(accept);
                staged.push((sequence_key(&msg), msg));
            }
        }
        self.submissions.extend(staged);
    }

    fn ship_outputs(&mut self, round: u64) {
        let mut sends: Vec<(NodeAddr, CreateObject)> = Vec::new();
        for st in self.txs.values() {
            let Some((resolved_round, _)) = st.resolved else {
                continue;
            };
            if st.ship.is_empty() || round >= resolved_round + self.params.create_window {
                continue;
            }
            // The coordinator ships immediately; everyone joins in if the
            // first timer passes and the window is still open.
            if self.addr.index != 0 && round < resolved_round + self.params.delta1 {
                continue;
            }
            for create in &st.ship {
                let home = shard_of(&create.object.id, self.params.shard_count);
                for peer in self.shard_members(home) {
                    sends.push((peer, create.clone()));
                }
            }
        }
        for (peer, create) in sends {
            self.send(peer, WireMsg::Sbac(SbacMessage::CreateObject(create)));
        }
    }

    fn seal_if_due(&mut self, round: u64) {
        if round == 0 || round % self.params.epoch != 0 {
            return;
        }
        let expected = round / self.params.epoch;
        // Seal exactly once per epoch boundary even if called twice.
        if self.chain.next_seq() >= expected {
            return;
        }
        self.seal_now();
    }

    fn seal_now(&mut self) {
        let cp = self.chain.seal();
        let (seq_no, head) = (cp.seq_no, cp.head);
        let hs = HeadSig::sign(&self.key, self.addr.shard, seq_no, head);
        self.head_sigs
            .entry(seq_no)
            .or_default()
            .insert(hs.node, hs.sig);
        self.try_endorse(seq_no);
    }

    /// Seal whatever is pending at end of run so every entry is covered by
    /// a checkpoint, then keep gossiping until endorsements complete.
    pub fn seal_final(&mut self) {
        if self.behavior.is_silent() {
            return;
        }
        if !self.chain.pending().is_empty() || self.chain.sealed().is_empty() {
            self.seal_now();
        }
    }

    fn gossip_heads(&mut self) {
        let mut sends = Vec::new();
        for cp in self.chain.sealed() {
            if self.endorsements.contains_key(&cp.seq_no) {
                continue;
            }
            let hs = HeadSig::sign(&self.key, self.addr.shard, cp.seq_no, cp.head);
            for peer in self.shard_members(self.addr.shard) {
                if peer != self.addr {
                    sends.push((peer, WireMsg::HeadSig(hs.clone())));
                }
            }
        }
        for (peer, msg) in sends {
            self.send(peer, msg);
        }
    }

    // -- drains for the embedding simulation --------------------------------

    pub fn take_outbox(&mut self) -> Vec<Outbound> {
        if self.behavior.is_silent() {
            self.outbox.clear();
        }
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<ResolvedEvent> {
        std::mem::take(&mut self.events)
    }

    /// Export the chain for audit: header, plus one record per sealed
    /// checkpoint carrying whatever endorsement signatures were collected.
    pub fn export_chain(&self) -> (ChainHeader, Vec<ChainRecord>) {
        let header = ChainHeader {
            shard: self.addr.shard,
            shard_count: self.params.shard_count,
            f: self.params.f as u64,
            epoch: self.params.epoch,
            keys: self.directory[self.addr.shard as usize].clone(),
            genesis: self.genesis.clone(),
        };
        let records = self
            .chain
            .sealed()
            .iter()
            .map(|cp: &Checkpoint| ChainRecord {
                checkpoint: cp.clone(),
                decision: self.endorsements.get(&cp.seq_no).cloned().unwrap_or_else(
                    || ShardDecision {
                        shard: self.addr.shard,
                        seq_no: cp.seq_no,
                        head: cp.head,
                        sigs: self
                            .head_sigs
                            .get(&cp.seq_no)
                            .map(|sigs| {
                                sigs.iter()
                                    .map(|(key, sig)| KeySig {
                                        key: *key,
                                        sig: *sig,
                                    })
                                    .collect()
                            })
                            .unwrap_or_default(),
                    },
                ),
            })
            .collect();
        (header, records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{cross_audit, full_audit, AuditVerdict, Conflicting};
    use crate::crypto::hash::hash;
    use crate::model::{
        genesis_object, ActiveSet, ContractId, OutputSpec, Trace, Transaction, TypeTag,
    };
    use crate::orderer::Orderer;
    use crate::validity::{CheckerContext, ContractChecker};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn contract() -> ContractId {
        ContractId(hash("contract-for-test", b""))
    }

    fn checker(ctx: &CheckerContext<'_>) -> bool {
        // Reject the magic payload so tests can exercise checker aborts.
        ctx.outputs.iter().all(|o| o.payload != b"reject-me".to_vec())
    }

    fn registry() -> CheckerRegistry {
        let mut reg = CheckerRegistry::new();
        reg.register(ContractChecker {
            contract: contract(),
            name: "widget".into(),
            types: BTreeSet::from(["W".to_string()]),
            checker,
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

    fn tx_consuming(objs: &[&Object], payloads: Vec<Vec<u8>>) -> TxEnvelope {
        let trace = Trace::build(
            contract(),
            "consume",
            objs.iter().map(|o| o.id).collect(),
            vec![],
            payloads
                .into_iter()
                .map(|payload| OutputSpec {
                    type_tag: w(),
                    payload,
                })
                .collect(),
            vec![],
            vec![],
            vec![],
        );
        let view = ActiveSet::from_objects(objs.iter().map(|o| (*o).clone()));
        TxEnvelope::package(Transaction::new(vec![trace]), &view)
    }

    /// A tiny deterministic harness: fixed one-round delay, no drops, one
    /// pipeline per shard shared by its members.
    struct Net {
        nodes: Vec<Node>,
        orderers: Vec<Orderer<SbacMessage>>,
        /// Packets in flight: (deliver_round, destination, message).
        wire: Vec<(u64, NodeAddr, WireMsg)>,
        notices: BTreeMap<Digest, Vec<Accept>>,
        params: Params,
    }

    impl Net {
        fn new(params: Params, behaviors: &[(usize, usize, FaultBehavior)], genesis: &[Object]) -> Net {
            let mut rng = ChaCha20Rng::seed_from_u64(4242);
            let shards = params.shard_count as usize;
            let keys: Vec<Vec<SigningKey>> = (0..shards)
                .map(|_| {
                    (0..params.nodes_per_shard)
                        .map(|_| SigningKey::generate(&mut rng))
                        .collect()
                })
                .collect();
            let directory: Vec<Vec<VerifyKey>> = keys
                .iter()
                .map(|ks| ks.iter().map(|k| k.verify_key()).collect())
                .collect();
            let behavior_of = |s: usize, i: usize| {
                behaviors
                    .iter()
                    .find(|(bs, bi, _)| *bs == s && *bi == i)
                    .map(|(_, _, b)| *b)
                    .unwrap_or(FaultBehavior::Honest)
            };
            let mut nodes = Vec::new();
            for s in 0..shards {
                for i in 0..params.nodes_per_shard {
                    nodes.push(Node::new(
                        NodeAddr {
                            shard: s as ShardId,
                            index: i,
                        },
                        behavior_of(s, i),
                        keys[s][i].clone(),
                        directory.clone(),
                        params,
                        genesis,
                    ));
                }
            }
            let orderers = (0..shards)
                .map(|s| {
                    let silent = (0..params.nodes_per_shard)
                        .filter(|i| behavior_of(s, *i).is_silent())
                        .count();
                    Orderer::new(params.nodes_per_shard, silent, params.latency)
                })
                .collect();
            Net {
                nodes,
                orderers,
                wire: Vec::new(),
                notices: BTreeMap::new(),
                params,
            }
        }

        fn node_index(&self, addr: NodeAddr) -> usize {
            addr.shard as usize * self.params.nodes_per_shard + addr.index
        }

        fn node(&self, addr: NodeAddr) -> &Node {
            &self.nodes[self.node_index(addr)]
        }

        /// Send a client prepare to the first f+1 members of every
        /// concerned shard, delivered next round.
        fn submit(&mut self, env: &TxEnvelope, round: u64) {
            let concerned = concerned_shards(env, self.params.shard_count).expect("concerned");
            for shard in concerned {
                for index in 0..self.params.f + 1 {
                    self.wire.push((
                        round + 1,
                        NodeAddr { shard, index },
                        WireMsg::Sbac(SbacMessage::Prepare {
                            envelope: env.clone(),
                        }),
                    ));
                }
            }
        }

        fn run(&mut self, from: u64, to: u64, reg: &CheckerRegistry) {
            for round in from..to {
                let due: Vec<(u64, NodeAddr, WireMsg)> =
                    std::mem::take(&mut self.wire)
                        .into_iter()
                        .filter_map(|(r, a, m)| {
                            if r <= round {
                                Some((r, a, m))
                            } else {
                                self.wire.push((r, a, m));
                                None
                            }
                        })
                        .collect();
                for (_, addr, msg) in due {
                    let idx = self.node_index(addr);
                    self.nodes[idx].handle_packet(msg, round);
                }
                for node in &mut self.nodes {
                    node.drive(round);
                }
                for node in &mut self.nodes {
                    let shard = node.addr().shard as usize;
                    for (key, msg) in node.take_submissions() {
                        self.orderers[shard].submit(key, msg, round);
                    }
                }
                for shard in 0..self.orderers.len() {
                    let batch = self.orderers[shard].step(round);
                    for s in &batch {
                        for node in self
                            .nodes
                            .iter_mut()
                            .filter(|n| n.addr().shard as usize == shard)
                        {
                            node.handle_sequenced(s, reg, round);
                        }
                    }
                }
                for i in 0..self.nodes.len() {
                    for out in self.nodes[i].take_outbox() {
                        match out.to {
                            Dest::Node(addr) => self.wire.push((round + 1, addr, out.msg)),
                            Dest::Client(txd) => {
                                if let WireMsg::Notice { accept } = out.msg {
                                    self.notices.entry(txd).or_default().push(accept);
                                }
                            }
                        }
                    }
                }
            }
        }

        fn finish(&mut self) {
            for node in &mut self.nodes {
                node.seal_final();
            }
            // One more beat of gossip so endorsements can form.
            let reg = registry();
            self.run(1000, 1004, &reg);
        }
    }

    fn honest_params() -> Params {
        Params::default()
    }

    #[test]
    fn cross_shard_transaction_commits_and_ships_outputs() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 1);
        let b0 = gen_on_shard(1, 2, 2);
        let genesis = vec![a0.clone(), b0.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let env = tx_consuming(&[&a0, &b0], vec![b"out1".to_vec(), b"out2".to_vec(), b"out3".to_vec()]);
        let txd = env.digest();
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 40, &reg);

        // Every honest node of both shards resolved commit.
        for node in &net.nodes {
            assert_eq!(
                node.resolution(&txd),
                Some(&Decision::Commit),
                "node {} unresolved",
                node.addr()
            );
        }
        // The client heard about it.
        assert!(!net.notices.get(&txd).expect("notices").is_empty());
        // Inputs consumed on their shards.
        assert!(net.nodes[0].store().record(&a0.id).is_some_and(|r| matches!(
            r.state,
            crate::shard::ObjectState::Inactive
        )));
        // Every output is active on its home shard, wherever it landed.
        let outputs = crate::model::net_outputs(&env.tx);
        assert_eq!(outputs.len(), 3);
        for out in &outputs {
            let home = shard_of(&out.id, 2);
            let holder = net.node(NodeAddr {
                shard: home,
                index: 1,
            });
            assert!(
                holder
                    .store()
                    .record(&out.id)
                    .is_some_and(|r| matches!(r.state, crate::shard::ObjectState::Active)),
                "output {} missing on shard {}",
                out.id.0,
                home
            );
        }
    }

    #[test]
    fn conflicting_pair_commits_exactly_one() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 3);
        let a1 = gen_on_shard(0, 2, 4);
        let b0 = gen_on_shard(1, 2, 5);
        let shared = gen_on_shard(0, 2, 6);
        let genesis = vec![a0.clone(), a1.clone(), b0.clone(), shared.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let tx1 = tx_consuming(&[&a0, &shared], vec![b"p".to_vec()]);
        let tx2 = tx_consuming(&[&a1, &shared], vec![b"q".to_vec()]);
        let reg = registry();
        net.submit(&tx1, 0);
        net.submit(&tx2, 0);
        net.run(0, 40, &reg);

        let node = net.node(NodeAddr { shard: 0, index: 2 });
        let r1 = node.resolution(&tx1.digest()).expect("tx1 resolved").clone();
        let r2 = node.resolution(&tx2.digest()).expect("tx2 resolved").clone();
        assert_eq!(
            [r1.is_commit(), r2.is_commit()].iter().filter(|c| **c).count(),
            1,
            "exactly one of the conflicting pair commits (got {r1} / {r2})"
        );
        let loser = if r1.is_commit() { r2 } else { r1 };
        assert!(
            matches!(
                loser,
                Decision::Abort(AbortReason::LockedObject(_))
                    | Decision::Abort(AbortReason::InactiveInput(_))
            ),
            "loser aborts over the shared object, got {loser}"
        );
        // All members of the concerned shard agree.
        for n in net.nodes.iter().filter(|n| n.addr().shard == 0) {
            assert_eq!(n.resolution(&tx1.digest()), node.resolution(&tx1.digest()));
            assert_eq!(n.resolution(&tx2.digest()), node.resolution(&tx2.digest()));
        }
    }

    #[test]
    fn rejected_transaction_aborts_with_checker_reason() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 7);
        let genesis = vec![a0.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let env = tx_consuming(&[&a0], vec![b"reject-me".to_vec()]);
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 30, &reg);
        let node = net.node(NodeAddr { shard: 0, index: 1 });
        assert!(matches!(
            node.resolution(&env.digest()),
            Some(Decision::Abort(AbortReason::CheckerRejected { .. }))
        ));
        // The input survives for another attempt.
        assert!(node.store().record(&a0.id).is_some_and(|r| matches!(
            r.state,
            crate::shard::ObjectState::Active
        )));
    }

    #[test]
    fn commits_despite_f_silent_members_including_the_coordinator() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 8);
        let b0 = gen_on_shard(1, 2, 9);
        let genesis = vec![a0.clone(), b0.clone()];
        // Shard 0's coordinator is down (the worst single choice) and so is
        // one member of shard 1.
        let mut net = Net::new(
            params,
            &[
                (0, 0, FaultBehavior::Silent),
                (1, 3, FaultBehavior::Silent),
            ],
            &genesis,
        );
        let env = tx_consuming(&[&a0, &b0], vec![b"z".to_vec()]);
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 60, &reg);
        for node in net.nodes.iter().filter(|n| !n.behavior().is_silent()) {
            assert_eq!(
                node.resolution(&env.digest()),
                Some(&Decision::Commit),
                "node {} did not commit",
                node.addr()
            );
        }
    }

    #[test]
    fn honest_run_produces_identical_endorsed_auditable_chains() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 10);
        let b0 = gen_on_shard(1, 2, 11);
        let genesis = vec![a0.clone(), b0.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let env = tx_consuming(&[&a0, &b0], vec![b"x".to_vec()]);
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 40, &reg);
        net.finish();

        // All members of a shard sealed identical heads, and the collective
        // endorsement reached threshold.
        for shard in 0..2 {
            let first = net.node(NodeAddr { shard, index: 0 }).export_chain();
            for index in 1..params.nodes_per_shard {
                let other = net.node(NodeAddr { shard, index }).export_chain();
                let heads: Vec<Digest> =
                    other.1.iter().map(|r| r.checkpoint.head).collect();
                let first_heads: Vec<Digest> =
                    first.1.iter().map(|r| r.checkpoint.head).collect();
                assert_eq!(heads, first_heads, "shard {shard} member {index} diverged");
            }
            let keys = first.0.key_set();
            for rec in &first.1 {
                assert!(
                    rec.decision.verify(&keys, params.f),
                    "checkpoint {} of shard {shard} lacks an endorsement",
                    rec.checkpoint.seq_no
                );
            }
            // And the chain replays cleanly.
            let report = full_audit(&first.0, &first.1, &reg);
            assert!(report.is_clean(), "shard {shard}: {}", report.render());
        }
    }

    /// Build the dishonest-shard run: shard 1 has 2f+1 liars. Two
    /// transactions race for the same shard-1 object; the lock-out means
    /// the liars' inverted verdict commits the second one. A third
    /// transaction then reuses the consumed object and the liars commit it
    /// again — the double spend.
    fn dishonest_run() -> (Net, TxEnvelope, TxEnvelope, TxEnvelope, CheckerRegistry) {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 12);
        let a1 = gen_on_shard(0, 2, 13);
        let a2 = gen_on_shard(0, 2, 14);
        let b0 = gen_on_shard(1, 2, 15);
        let genesis = vec![a0.clone(), a1.clone(), a2.clone(), b0.clone()];
        let mut net = Net::new(
            params,
            &[
                (1, 1, FaultBehavior::Liar),
                (1, 2, FaultBehavior::Liar),
                (1, 3, FaultBehavior::Liar),
            ],
            &genesis,
        );
        let tx1 = tx_consuming(&[&a0, &b0], vec![b"first".to_vec()]);
        let tx2 = tx_consuming(&[&a1, &b0], vec![b"second".to_vec()]);
        let tx3 = tx_consuming(&[&a2, &b0], vec![b"third".to_vec()]);
        let reg = registry();
        net.submit(&tx1, 0);
        net.submit(&tx2, 0);
        net.run(0, 60, &reg);
        net.submit(&tx3, 60);
        net.run(60, 120, &reg);
        net.finish();
        (net, tx1, tx2, tx3, reg)
    }

    #[test]
    fn liar_quorum_double_spends_and_cross_audit_convicts_it() {
        let (net, tx1, tx2, tx3, reg) = dishonest_run();
        let honest_a = net.node(NodeAddr { shard: 0, index: 0 });
        let honest_b = net.node(NodeAddr { shard: 1, index: 0 });

        // The race: one of the pair aborts at the hands of the liars, the
        // other commits; the replacement commits too, reusing the object.
        let r1 = honest_a.resolution(&tx1.digest()).expect("tx1").clone();
        let r2 = honest_a.resolution(&tx2.digest()).expect("tx2").clone();
        let r3 = honest_a.resolution(&tx3.digest()).expect("tx3").clone();
        let commits = [&r1, &r2, &r3].iter().filter(|d| d.is_commit()).count();
        assert!(
            commits >= 2 && r3.is_commit(),
            "expected a double spend: {r1} / {r2} / {r3}"
        );

        // Shard 0's chain is honest and replays clean.
        let (a_header, a_records) = honest_a.export_chain();
        let report = full_audit(&a_header, &a_records, &reg);
        assert!(report.is_clean(), "honest shard dirty: {}", report.render());

        // Shard 1's chain does not replay clean even from its own honest
        // member — the liars' promises are sealed into it.
        let (b_header, b_records) = honest_b.export_chain();
        let b_report = full_audit(&b_header, &b_records, &reg);
        assert!(!b_report.is_clean(), "liar shard's chain replayed clean");

        // The cross audit pins shard 1 with two of its own signed commits
        // consuming the same object.
        let cross = cross_audit((&a_header, &a_records), (&b_header, &b_records), &reg);
        let AuditVerdict::Guilty(c) = &cross.verdict else {
            panic!("no conviction: {}", cross.render());
        };
        assert_eq!(c.shard, 1);
        let Conflicting::Promise(second) = &c.conflict else {
            panic!("expected a promise pair, got {:?}", c.conflict);
        };
        assert!(c.statement.decision.is_commit() && second.decision.is_commit());
        assert_ne!(c.statement.txd, second.txd);
    }

    #[test]
    fn honest_shard_is_never_convicted_in_the_dishonest_run() {
        let (net, _, _, _, reg) = dishonest_run();
        let honest_a = net.node(NodeAddr { shard: 0, index: 0 });
        let honest_b = net.node(NodeAddr { shard: 1, index: 0 });
        let (a_header, a_records) = honest_a.export_chain();
        let (b_header, b_records) = honest_b.export_chain();
        // Audit in both argument orders; the verdict must never name shard 0.
        for (x, y) in [
            ((&a_header, &a_records[..]), (&b_header, &b_records[..])),
            ((&b_header, &b_records[..]), (&a_header, &a_records[..])),
        ] {
            match cross_audit(x, y, &reg).verdict {
                AuditVerdict::Guilty(c) => assert_eq!(c.shard, 1),
                AuditVerdict::Ok => panic!("double spend went unconvicted"),
            }
        }
    }

    #[test]
    fn equivocator_does_not_stop_commitment_or_dirty_chains() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 16);
        let b0 = gen_on_shard(1, 2, 17);
        let genesis = vec![a0.clone(), b0.clone()];
        let mut net = Net::new(params, &[(1, 2, FaultBehavior::Equivocator)], &genesis);
        let env = tx_consuming(&[&a0, &b0], vec![b"e".to_vec()]);
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 40, &reg);
        net.finish();
        for node in &net.nodes {
            assert_eq!(node.resolution(&env.digest()), Some(&Decision::Commit));
        }
        for shard in 0..2u32 {
            let (header, records) = net
                .node(NodeAddr { shard, index: 0 })
                .export_chain();
            let report = full_audit(&header, &records, &reg);
            assert!(report.is_clean(), "shard {shard}: {}", report.render());
        }
    }

    #[test]
    fn notice_is_resent_when_a_resolved_prepare_arrives_again() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 18);
        let genesis = vec![a0.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let env = tx_consuming(&[&a0], vec![b"n".to_vec()]);
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 30, &reg);
        let before = net.notices.get(&env.digest()).map_or(0, |v| v.len());
        assert!(before > 0);
        // A retry after resolution gets an immediate answer, not silence.
        net.submit(&env, 30);
        net.run(30, 34, &reg);
        let after = net.notices.get(&env.digest()).map_or(0, |v| v.len());
        assert!(after > before, "retry produced no fresh notice");
    }

    #[test]
    fn wire_messages_round_trip() {
        let a0 = gen_on_shard(0, 2, 19);
        let env = tx_consuming(&[&a0], vec![b"w".to_vec()]);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let key = SigningKey::generate(&mut rng);
        let sp = SignedPrepared::sign(&key, env.digest(), 0, Decision::Commit);
        let accept = Accept {
            txd: env.digest(),
            decision: Decision::Commit,
            evidence: vec![sp.clone()],
        };
        let msgs = vec![
            WireMsg::Sbac(SbacMessage::Prepare {
                envelope: env.clone(),
            }),
            WireMsg::Sbac(SbacMessage::Prepared(sp)),
            WireMsg::Sbac(SbacMessage::Accept(accept.clone())),
            WireMsg::Notice { accept },
            WireMsg::HeadSig(HeadSig::sign(&key, 3, 7, hash("chain", b"head"))),
        ];
        for msg in msgs {
            let bytes = msg.encode();
            assert_eq!(WireMsg::decode(&bytes), Ok(msg));
        }
    }

    #[test]
    fn params_validation_rejects_bad_shapes() {
        let ok = Params::default();
        assert!(ok.validate().is_ok());
        assert_eq!(
            Params {
                nodes_per_shard: 3,
                ..ok
            }
            .validate(),
            Err(ParamError::TooFewNodes { n: 3, f: 1 })
        );
        assert_eq!(
            Params {
                delta1: 8,
                delta2: 8,
                ..ok
            }
            .validate(),
            Err(ParamError::TimerOrder {
                delta1: 8,
                delta2: 8
            })
        );
        assert_eq!(
            Params { epoch: 0, ..ok }.validate(),
            Err(ParamError::ZeroEpoch)
        );
        assert_eq!(
            Params {
                shard_count: 0,
                ..ok
            }
            .validate(),
            Err(ParamError::NoShards)
        );
    }

    #[test]
    fn partial_audit_of_a_live_chain_checks_out() {
        let params = honest_params();
        let a0 = gen_on_shard(0, 2, 20);
        let genesis = vec![a0.clone()];
        let mut net = Net::new(params, &[], &genesis);
        let env = tx_consuming(&[&a0], vec![b"pp".to_vec()]);
        let txd = env.digest();
        let reg = registry();
        net.submit(&env, 0);
        net.run(0, 30, &reg);
        net.finish();
        let node = net.node(NodeAddr { shard: 0, index: 0 });
        let (header, records) = node.export_chain();
        let keys = header.key_set();
        let (cp_header, entry, inclusion) =
            node.chain().find_decision(&txd).expect("decision sealed");
        let decision = records
            .iter()
            .find(|r| r.checkpoint.seq_no == cp_header.seq_no)
            .expect("record")
            .decision
            .clone();
        let proof = crate::audit::PartialAuditProof::Known {
            decision,
            header: cp_header,
            entry,
            inclusion,
        };
        assert!(crate::audit::verify_partial(&proof, &txd, &keys, params.f));
    }
}
