//! Shard placement and the per-shard object store.
//!
//! Objects are assigned to shards by their id digest, so placement is
//! uniform, stateless, and agreed by everyone. A shard's store tracks each
//! managed object through its life: active, locked under a preparing
//! transaction, and finally inactive once consumed. Inactive is terminal;
//! nothing resurrects an object.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::hash::Digest;
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{
    free_inputs, free_references, net_outputs, ActiveSet, ContractId, Object, ObjectId, TxEnvelope,
};
use crate::validity::{validate_transaction, AbortReason, CheckerRegistry};

pub type ShardId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShardError {
    #[error("transaction touches no pre-existing object, so no shard is concerned")]
    NoConcernedShard,
}

/// Which shard manages an object: the id digest's trailing 8 bytes, big
/// endian, modulo the shard count.
pub fn shard_of(id: &ObjectId, shard_count: u32) -> ShardId {
    assert!(shard_count > 0, "shard count must be positive");
    (id.0.low_u64() % shard_count as u64) as ShardId
}

/// The shards that must agree before a transaction commits: the shards of
/// every free input and free reference.
pub fn concerned_shards(
    env: &TxEnvelope,
    shard_count: u32,
) -> Result<BTreeSet<ShardId>, ShardError> {
    let mut shards = BTreeSet::new();
    for id in free_inputs(&env.tx).union(&free_references(&env.tx)) {
        shards.insert(shard_of(id, shard_count));
    }
    if shards.is_empty() {
        return Err(ShardError::NoConcernedShard);
    }
    Ok(shards)
}

/// A shard-local commit-or-abort verdict on a transaction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Decision {
    Commit,
    Abort(AbortReason),
}

impl Decision {
    pub fn is_commit(&self) -> bool {
        matches!(self, Decision::Commit)
    }

    /// The signed statement covers only commit-or-abort; reasons are carried
    /// for reporting but two aborts with different reasons still agree.
    pub fn kind(&self) -> u8 {
        match self {
            Decision::Commit => 0,
            Decision::Abort(_) => 1,
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Commit => write!(f, "commit"),
            Decision::Abort(reason) => write!(f, "abort({reason})"),
        }
    }
}

impl Encode for Decision {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::DECISION, |e| match self {
            Decision::Commit => e.u64(0),
            Decision::Abort(reason) => {
                e.u64(1)?;
                reason.encode_into(e)
            }
        })
    }
}

impl Decode for Decision {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::DECISION, |d| {
            Ok(match d.u64()? {
                0 => Decision::Commit,
                1 => Decision::Abort(AbortReason::decode_from(d)?),
                other => return Err(DecodeError::UnknownDiscriminant(other)),
            })
        })
    }
}

/// Lock held on an object while transactions prepare against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockState {
    /// Held by one transaction that intends to consume the object.
    Exclusive { tx: Digest },
    /// Held jointly by transactions that only read the object.
    Shared { count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectState {
    Active,
    Locked(LockState),
    /// Consumed. Terminal: records never leave this state.
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRecord {
    pub object: Object,
    pub state: ObjectState,
}

/// One shard's slice of the object space.
#[derive(Debug, Clone)]
pub struct ShardStore {
    shard: ShardId,
    shard_count: u32,
    records: BTreeMap<ObjectId, ObjectRecord>,
}

impl ShardStore {
    /// Build a store over the genesis objects that land on this shard.
    pub fn new(shard: ShardId, shard_count: u32, genesis: &[Object]) -> Self {
        let mut store = ShardStore {
            shard,
            shard_count,
            records: BTreeMap::new(),
        };
        for obj in genesis {
            if store.manages(&obj.id) {
                store.records.insert(
                    obj.id,
                    ObjectRecord {
                        object: obj.clone(),
                        state: ObjectState::Active,
                    },
                );
            }
        }
        store
    }

    pub fn shard(&self) -> ShardId {
        self.shard
    }

    pub fn shard_count(&self) -> u32 {
        self.shard_count
    }

    pub fn manages(&self, id: &ObjectId) -> bool {
        shard_of(id, self.shard_count) == self.shard
    }

    pub fn record(&self, id: &ObjectId) -> Option<&ObjectRecord> {
        self.records.get(id)
    }

    /// Whether any object of this contract, in any state, lives here.
    pub fn manages_contract(&self, contract: &ContractId) -> bool {
        self.records
            .values()
            .any(|r| r.object.type_tag.contract == *contract)
    }

    /// The currently active objects (shared-locked objects are still live,
    /// merely being read).
    pub fn active_set(&self) -> ActiveSet {
        ActiveSet::from_objects(self.records.values().filter_map(|r| match r.state {
            ObjectState::Active | ObjectState::Locked(LockState::Shared { .. }) => {
                Some(r.object.clone())
            }
            _ => None,
        }))
    }

    fn counts_active(&self, id: &ObjectId) -> Option<&Object> {
        self.records.get(id).and_then(|r| match r.state {
            ObjectState::Active | ObjectState::Locked(LockState::Shared { .. }) => {
                Some(&r.object)
            }
            _ => None,
        })
    }

    /// The free variables split into what this shard manages. References that
    /// are also inputs count as inputs: the exclusive lock subsumes the
    /// shared one.
    fn footprint(&self, env: &TxEnvelope) -> (Vec<ObjectId>, Vec<ObjectId>) {
        let ins = free_inputs(&env.tx);
        let refs = free_references(&env.tx);
        let my_inputs = ins
            .iter()
            .filter(|id| self.manages(id))
            .copied()
            .collect();
        let my_refs = refs
            .difference(&ins)
            .filter(|id| self.manages(id))
            .copied()
            .collect();
        (my_inputs, my_refs)
    }

    /// The shard's verdict on a prepared transaction: are the locally managed
    /// free objects live and unlocked, and does the full validity fold pass
    /// against local state plus the client-supplied foreign objects?
    pub fn local_decision(&self, env: &TxEnvelope, reg: &CheckerRegistry) -> Decision {
        let (my_inputs, my_refs) = self.footprint(env);

        for id in &my_inputs {
            match self.records.get(id).map(|r| &r.state) {
                Some(ObjectState::Active) => {}
                Some(ObjectState::Locked(_)) => {
                    return Decision::Abort(AbortReason::LockedObject(*id))
                }
                Some(ObjectState::Inactive) | None => {
                    return Decision::Abort(AbortReason::InactiveInput(*id))
                }
            }
        }
        for id in &my_refs {
            match self.records.get(id).map(|r| &r.state) {
                Some(ObjectState::Active) | Some(ObjectState::Locked(LockState::Shared { .. })) => {
                }
                Some(ObjectState::Locked(LockState::Exclusive { .. })) => {
                    return Decision::Abort(AbortReason::LockedObject(*id))
                }
                Some(ObjectState::Inactive) | None => {
                    return Decision::Abort(AbortReason::InactiveReference(*id))
                }
            }
        }

        // Resolve exactly the free objects the fold will touch: local store
        // first, client-supplied copies for foreign ids.
        let mut alpha = ActiveSet::new();
        let ins = free_inputs(&env.tx);
        let refs = free_references(&env.tx);
        for id in ins.union(&refs) {
            if self.manages(id) {
                if let Some(obj) = self.counts_active(id) {
                    alpha.insert(obj.clone());
                }
            } else if let Some(obj) = env.supplied_object(id) {
                alpha.insert(obj.clone());
            }
        }
        match validate_transaction(&env.tx, &alpha, reg) {
            Ok(_) => Decision::Commit,
            Err(reason) => Decision::Abort(reason),
        }
    }

    /// Take locks for a transaction this shard has decided to commit:
    /// exclusive on managed free inputs, shared on managed free references.
    /// Calling this against objects the decision did not clear is a protocol
    /// bug, not a runtime condition.
    pub fn lock(&mut self, env: &TxEnvelope) {
        let tx = env.digest();
        let (my_inputs, my_refs) = self.footprint(env);
        for id in &my_inputs {
            let rec = self.records.get_mut(id).expect("locking unknown object");
            assert!(
                rec.state == ObjectState::Active,
                "exclusive lock over non-active object {id:?} in state {:?}",
                rec.state
            );
            rec.state = ObjectState::Locked(LockState::Exclusive { tx });
        }
        for id in &my_refs {
            let rec = self.records.get_mut(id).expect("locking unknown object");
            rec.state = match &rec.state {
                ObjectState::Active => ObjectState::Locked(LockState::Shared { count: 1 }),
                ObjectState::Locked(LockState::Shared { count }) => {
                    ObjectState::Locked(LockState::Shared { count: count + 1 })
                }
                other => panic!("shared lock over object {id:?} in state {other:?}"),
            };
        }
    }

    /// Drop the locks a transaction held, after a global abort.
    ///
    /// Tolerant by design: a node that voted abort holds no locks, and a
    /// quorum of faulty peers can force-commit a competing transaction that
    /// consumes or re-locks an object before this release arrives. A lock
    /// this transaction does not hold is left untouched.
    pub fn release(&mut self, env: &TxEnvelope) {
        let tx = env.digest();
        let (my_inputs, my_refs) = self.footprint(env);
        for id in &my_inputs {
            let Some(rec) = self.records.get_mut(id) else {
                continue;
            };
            if let ObjectState::Locked(LockState::Exclusive { tx: holder }) = &rec.state {
                if *holder == tx {
                    rec.state = ObjectState::Active;
                }
            }
        }
        for id in &my_refs {
            self.release_shared(id);
        }
    }

    fn release_shared(&mut self, id: &ObjectId) {
        let Some(rec) = self.records.get_mut(id) else {
            return;
        };
        match &rec.state {
            ObjectState::Locked(LockState::Shared { count: 1 }) => {
                rec.state = ObjectState::Active;
            }
            ObjectState::Locked(LockState::Shared { count }) => {
                rec.state = ObjectState::Locked(LockState::Shared { count: count - 1 });
            }
            _ => {}
        }
    }

    /// Commit a transaction's effects: consume managed inputs, release
    /// shared reference locks, create managed outputs. Returns the outputs
    /// homed on other shards, for create-object requests.
    ///
    /// Inputs are consumed from whatever state they are in. A sequenced
    /// Accept whose evidence verifies is final even when this node's own
    /// vote was abort (a dishonest quorum can out-vote it), so the node
    /// may be consuming objects it never locked.
    pub fn consume_and_create(&mut self, env: &TxEnvelope) -> Vec<Object> {
        let (my_inputs, my_refs) = self.footprint(env);
        for id in &my_inputs {
            // An id this shard has never materialized stays unknown, which
            // future decisions already treat as inactive.
            if let Some(rec) = self.records.get_mut(id) {
                rec.state = ObjectState::Inactive;
            }
        }
        for id in &my_refs {
            self.release_shared(id);
        }

        let mut foreign = Vec::new();
        for obj in net_outputs(&env.tx) {
            if self.manages(&obj.id) {
                self.records.entry(obj.id).or_insert(ObjectRecord {
                    object: obj,
                    state: ObjectState::Active,
                });
            } else {
                foreign.push(obj);
            }
        }
        foreign
    }

    /// Materialize an output object shipped from another shard. Idempotent:
    /// re-delivery of the same object is a no-op, and an id that was already
    /// consumed here stays consumed.
    pub fn insert_object(&mut self, obj: Object) {
        assert!(
            self.manages(&obj.id),
            "create-object for a foreign id {:?}",
            obj.id
        );
        self.records.entry(obj.id).or_insert(ObjectRecord {
            object: obj,
            state: ObjectState::Active,
        });
    }
}
