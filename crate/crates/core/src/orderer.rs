//! A simulated per-shard ordering service.
//!
//! Each shard runs an internal byzantine-fault-tolerant consensus that this
//! module abstracts as a black box: items submitted by the shard's members
//! come out the other end as a single totally-ordered sequence that every
//! honest member observes identically. The simulation models the consensus
//! pipeline as a fixed latency of `L` rounds and models loss of liveness
//! (more than `f` members down) by halting the sequence.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::hash::Digest;

/// How a node (mis)behaves in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultBehavior {
    /// Follows the protocol.
    Honest,
    /// Never sends anything.
    Silent,
    /// Sends conflicting signed statements to different recipients.
    Equivocator,
    /// Signs and sends the wrong decision to everyone.
    Liar,
}

impl FaultBehavior {
    pub fn is_silent(&self) -> bool {
        matches!(self, FaultBehavior::Silent)
    }
}

/// The number of byzantine members a group of `n` tolerates: `⌊(n−1)/3⌋`.
pub fn fault_threshold(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// An item the shard's consensus has assigned a place in its sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequenced<T> {
    /// Position in the shard's total order, starting at 0.
    pub seq_no: u64,
    /// The round the item came out of the pipeline.
    pub round: u64,
    pub item: T,
}

/// One shard's ordering pipeline.
#[derive(Debug, Clone)]
pub struct Orderer<T> {
    latency: u64,
    /// Most items sequenced per round; 0 means unbounded.
    capacity: usize,
    next_seq: u64,
    halted: bool,
    seen: BTreeSet<Digest>,
    /// Keyed by (submission round, item key): the delivery order.
    pending: BTreeMap<(u64, Digest), T>,
}

impl<T> Orderer<T> {
    /// A pipeline with the given latency. If more members are down than the
    /// shard tolerates, the consensus never makes progress: the pipeline
    /// starts halted.
    pub fn new(node_count: usize, silent_count: usize, latency: u64) -> Self {
        Orderer {
            latency,
            capacity: 0,
            next_seq: 0,
            halted: silent_count > fault_threshold(node_count),
            seen: BTreeSet::new(),
            pending: BTreeMap::new(),
        }
    }

    /// Cap throughput at `capacity` items per round (0 = unbounded). A full
    /// pipeline carries the excess into later rounds; this is how the
    /// simulation models a consensus engine with finite block space.
    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Stop sequencing permanently.
    pub fn halt(&mut self) {
        self.halted = true;
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    /// Items accepted but not yet sequenced.
    pub fn backlog(&self) -> usize {
        self.pending.len()
    }

    /// Offer an item to the consensus. `key` identifies the item: a second
    /// submission under a key ever seen before is discarded, so resubmission
    /// is cheap and safe.
    pub fn submit(&mut self, key: Digest, item: T, round: u64) {
        if self.halted || !self.seen.insert(key) {
            return;
        }
        self.pending.insert((round, key), item);
    }

    /// Drain everything whose pipeline delay has elapsed by `round`, in
    /// submission-round order with ties broken by key. Call once per round.
    pub fn step(&mut self, round: u64) -> Vec<Sequenced<T>> {
        if self.halted {
            return Vec::new();
        }
        let mut out = Vec::new();
        let ready: Vec<(u64, Digest)> = self
            .pending
            .keys()
            .take_while(|(sub_round, _)| sub_round + self.latency <= round)
            .take(if self.capacity == 0 {
                usize::MAX
            } else {
                self.capacity
            })
            .copied()
            .collect();
        for key in ready {
            let item = self.pending.remove(&key).expect("key just listed");
            out.push(Sequenced {
                seq_no: self.next_seq,
                round,
                item,
            });
            self.next_seq += 1;
        }
        out
    }
}
