//! Core data model: objects, traces, transactions, and the active set.
//!
//! Objects are immutable and identified by a digest derived from the trace
//! that created them, so identifiers can never collide with live state
//! (fresh trace, fresh ids) and can never be chosen by a client. A trace
//! records one procedure call: the objects it consumed, the objects it only
//! read, the objects it created, its public locals, and the sub-calls it
//! depended on. A transaction is a list of traces applied in order.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::hash::{domain, hash, hash_parts, Digest};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

/// Identifies a registered contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContractId(pub Digest);

impl Encode for ContractId {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        self.0.encode_into(e)
    }
}

impl Decode for ContractId {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        Ok(ContractId(Digest::decode_from(d)?))
    }
}

/// Identifies an object; derived, never chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub Digest);

impl Encode for ObjectId {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        self.0.encode_into(e)
    }
}

impl Decode for ObjectId {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        Ok(ObjectId(Digest::decode_from(d)?))
    }
}

/// An object type: which contract owns it and the type's name within that
/// contract.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeTag {
    pub contract: ContractId,
    pub name: String,
}

impl TypeTag {
    pub fn new(contract: ContractId, name: &str) -> Self {
        TypeTag {
            contract,
            name: name.to_string(),
        }
    }
}

impl Encode for TypeTag {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::TYPE_TAG, |e| {
            self.contract.encode_into(e)?;
            e.string(&self.name)
        })
    }
}

impl Decode for TypeTag {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::TYPE_TAG, |d| {
            Ok(TypeTag {
                contract: ContractId::decode_from(d)?,
                name: d.string()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Object {
    pub id: ObjectId,
    pub type_tag: TypeTag,
    pub payload: Vec<u8>,
}

impl Encode for Object {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::OBJECT, |e| {
            self.id.encode_into(e)?;
            self.type_tag.encode_into(e)?;
            e.bytes(&self.payload)
        })
    }
}

impl Decode for Object {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::OBJECT, |d| {
            Ok(Object {
                id: ObjectId::decode_from(d)?,
                type_tag: TypeTag::decode_from(d)?,
                payload: d.bytes()?,
            })
        })
    }
}

/// Derive an object id from its creator digest and a name unique within that
/// creator. Output names are the decimal position index; genesis objects use
/// a per-object creator digest.
pub fn object_id(creator: &Digest, unique_name: &str) -> ObjectId {
    let mut name_node = Enc::new();
    name_node
        .string(unique_name)
        .expect("object name over 4 GiB");
    ObjectId(hash_parts(
        domain::OBJECT,
        &[&creator.0, &name_node.into_bytes()],
    ))
}

/// Creator digest for genesis objects: outside any trace, pinned to the
/// scenario seed and a distinct index per object.
pub fn genesis_creator(seed: u64, index: u64) -> Digest {
    hash_parts(
        domain::GENESIS,
        &[&seed.to_be_bytes(), &index.to_be_bytes()],
    )
}

/// Build a genesis object. These are the axioms of the system: every other
/// object descends from a trace.
pub fn genesis_object(seed: u64, index: u64, type_tag: TypeTag, payload: Vec<u8>) -> Object {
    let creator = genesis_creator(seed, index);
    Object {
        id: object_id(&creator, "0"),
        type_tag,
        payload,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub contract: ContractId,
    pub procedure: String,
    pub inputs: Vec<ObjectId>,
    pub references: Vec<ObjectId>,
    pub outputs: Vec<Object>,
    pub lparams: Vec<u8>,
    pub lreturns: Vec<u8>,
    pub deps: Vec<Trace>,
}

/// Everything about an output except its id, which only exists once the
/// creating trace's identity is fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub type_tag: TypeTag,
    pub payload: Vec<u8>,
}

impl Trace {
    /// Assemble a trace, deriving output ids from the trace id. This is the
    /// only constructor well-formed traces come from.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        contract: ContractId,
        procedure: &str,
        inputs: Vec<ObjectId>,
        references: Vec<ObjectId>,
        outputs: Vec<OutputSpec>,
        lparams: Vec<u8>,
        lreturns: Vec<u8>,
        deps: Vec<Trace>,
    ) -> Trace {
        let mut trace = Trace {
            contract,
            procedure: procedure.to_string(),
            inputs,
            references,
            outputs: Vec::new(),
            lparams,
            lreturns,
            deps,
        };
        let tid = trace.trace_id();
        trace.outputs = outputs
            .into_iter()
            .enumerate()
            .map(|(pos, spec)| Object {
                id: object_id(&tid, &pos.to_string()),
                type_tag: spec.type_tag,
                payload: spec.payload,
            })
            .collect();
        trace
    }

    /// The trace identity: a digest over contract, procedure, input ids,
    /// reference ids, locals, and dep trace ids. Outputs are excluded, which
    /// is what lets output ids be derived from it.
    pub fn trace_id(&self) -> Digest {
        let mut e = Enc::new();
        let build = |e: &mut Enc| -> Result<(), EncodeError> {
            self.contract.encode_into(e)?;
            e.string(&self.procedure)?;
            e.list(&self.inputs)?;
            e.list(&self.references)?;
            e.bytes(&self.lparams)?;
            e.bytes(&self.lreturns)?;
            let dep_ids: Vec<ObjectId> = self
                .deps
                .iter()
                .map(|d| ObjectId(d.trace_id()))
                .collect();
            e.list(&dep_ids)
        };
        build(&mut e).expect("trace fields exceed the encoding length limit");
        hash(domain::TRACE, &e.into_bytes())
    }

    /// Whether every output id derives from this trace at its position.
    pub fn outputs_well_formed(&self) -> bool {
        let tid = self.trace_id();
        self.outputs
            .iter()
            .enumerate()
            .all(|(pos, o)| o.id == object_id(&tid, &pos.to_string()))
    }
}

impl Encode for Trace {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::TRACE, |e| {
            self.contract.encode_into(e)?;
            e.string(&self.procedure)?;
            e.list(&self.inputs)?;
            e.list(&self.references)?;
            e.list(&self.outputs)?;
            e.bytes(&self.lparams)?;
            e.bytes(&self.lreturns)?;
            e.list(&self.deps)
        })
    }
}

impl Decode for Trace {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::TRACE, |d| {
            Ok(Trace {
                contract: ContractId::decode_from(d)?,
                procedure: d.string()?,
                inputs: d.list()?,
                references: d.list()?,
                outputs: d.list()?,
                lparams: d.bytes()?,
                lreturns: d.bytes()?,
                deps: d.list()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub traces: Vec<Trace>,
}

impl Transaction {
    pub fn new(traces: Vec<Trace>) -> Self {
        Transaction { traces }
    }

    /// Transaction identity used for sequencing, locks, and evidence.
    pub fn digest(&self) -> Digest {
        hash(domain::TX, &self.encode())
    }
}

impl Encode for Transaction {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::TRANSACTION, |e| e.list(&self.traces))
    }
}

impl Decode for Transaction {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::TRANSACTION, |d| {
            Ok(Transaction { traces: d.list()? })
        })
    }
}

/// What a client actually submits: the transaction plus its own copies of
/// the free input and reference objects. A shard holds full objects only for
/// ids it manages; the supplied copies let it evaluate checkers that touch
/// objects homed elsewhere. For ids a shard does manage, its own store is
/// authoritative and the supplied copy is ignored, so a lying client gains
/// nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxEnvelope {
    pub tx: Transaction,
    pub supplied: Vec<Object>,
}

impl TxEnvelope {
    /// Package a transaction, pulling the free objects out of `view`.
    /// Missing objects are simply not supplied; the concerned shards will
    /// abort the transaction if they cannot resolve them either.
    pub fn package(tx: Transaction, view: &ActiveSet) -> TxEnvelope {
        let mut supplied = Vec::new();
        for id in free_inputs(&tx).union(&free_references(&tx)) {
            if let Some(obj) = view.get(id) {
                supplied.push(obj.clone());
            }
        }
        TxEnvelope { tx, supplied }
    }

    /// The transaction identity; supplied copies carry no identity weight.
    pub fn digest(&self) -> Digest {
        self.tx.digest()
    }

    pub fn supplied_object(&self, id: &ObjectId) -> Option<&Object> {
        self.supplied.iter().find(|o| o.id == *id)
    }
}

impl Encode for TxEnvelope {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::ENVELOPE, |e| {
            self.tx.encode_into(e)?;
            e.list(&self.supplied)
        })
    }
}

impl Decode for TxEnvelope {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::ENVELOPE, |d| {
            Ok(TxEnvelope {
                tx: Transaction::decode_from(d)?,
                supplied: d.list()?,
            })
        })
    }
}

/// The set of live objects in some scope, keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    objects: BTreeMap<ObjectId, Object>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_objects(objects: impl IntoIterator<Item = Object>) -> Self {
        ActiveSet {
            objects: objects.into_iter().map(|o| (o.id, o)).collect(),
        }
    }

    pub fn insert(&mut self, object: Object) {
        self.objects.insert(object.id, object);
    }

    pub fn remove(&mut self, id: &ObjectId) -> Option<Object> {
        self.objects.remove(id)
    }

    pub fn get(&self, id: &ObjectId) -> Option<&Object> {
        self.objects.get(id)
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.objects.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Object> {
        self.objects.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.objects.keys()
    }

    /// Union with another set. Identical ids must map to identical objects,
    /// which holds whenever both sides derive from valid history.
    pub fn merge(&mut self, other: &ActiveSet) {
        for obj in other.iter() {
            self.objects.insert(obj.id, obj.clone());
        }
    }
}

impl Encode for ActiveSet {
    /// Objects in id order, so equal sets encode to equal bytes.
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.list_with(self.objects.len(), |e| {
            for obj in self.objects.values() {
                obj.encode_into(e)?;
            }
            Ok(())
        })
    }
}

impl Decode for ActiveSet {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        let objects: Vec<Object> = d.list()?;
        Ok(ActiveSet::from_objects(objects))
    }
}

fn walk_traces<'a>(traces: &'a [Trace], f: &mut impl FnMut(&'a Trace)) {
    for t in traces {
        walk_traces(&t.deps, f);
        f(t);
    }
}

/// All input ids across every trace and dep.
pub fn all_inputs(tx: &Transaction) -> BTreeSet<ObjectId> {
    let mut out = BTreeSet::new();
    walk_traces(&tx.traces, &mut |t| out.extend(t.inputs.iter().copied()));
    out
}

/// All reference ids across every trace and dep.
pub fn all_references(tx: &Transaction) -> BTreeSet<ObjectId> {
    let mut out = BTreeSet::new();
    walk_traces(&tx.traces, &mut |t| {
        out.extend(t.references.iter().copied())
    });
    out
}

/// All output ids across every trace and dep.
pub fn all_outputs(tx: &Transaction) -> BTreeSet<ObjectId> {
    let mut out = BTreeSet::new();
    walk_traces(&tx.traces, &mut |t| {
        out.extend(t.outputs.iter().map(|o| o.id))
    });
    out
}

/// Inputs that must already exist before the transaction runs: consumed ids
/// minus ids created inside the transaction.
pub fn free_inputs(tx: &Transaction) -> BTreeSet<ObjectId> {
    let created = all_outputs(tx);
    all_inputs(tx).difference(&created).copied().collect()
}

/// References that must already exist before the transaction runs.
pub fn free_references(tx: &Transaction) -> BTreeSet<ObjectId> {
    let created = all_outputs(tx);
    all_references(tx)
        .difference(&created)
        .copied()
        .collect()
}

/// Objects the transaction leaves behind: outputs never consumed by a later
/// trace of the same transaction, in application order.
pub fn net_outputs(tx: &Transaction) -> Vec<Object> {
    let mut created: BTreeMap<ObjectId, Object> = BTreeMap::new();
    let mut order: Vec<ObjectId> = Vec::new();
    walk_traces(&tx.traces, &mut |t| {
        for input in &t.inputs {
            created.remove(input);
        }
        for output in &t.outputs {
            created.insert(output.id, output.clone());
            order.push(output.id);
        }
    });
    let mut seen = BTreeSet::new();
    order
        .into_iter()
        .filter_map(|id| {
            if seen.insert(id) {
                created.get(&id).cloned()
            } else {
                None
            }
        })
        .collect()
}
