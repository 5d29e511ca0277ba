//! The validity engine: decides whether traces and transactions are
//! acceptable against an active set, and applies their effects.
//!
//! A trace is checked in three stages, and the first failure wins:
//!
//! 1. its deps are checked recursively, in order, threading the active set;
//! 2. structural conditions: the contract resolves, inputs and references
//!    are active, outputs require inputs, every object belongs to the
//!    trace's contract, output ids derive from the trace;
//! 3. the contract checker approves the call.
//!
//! On success the trace's inputs leave the active set and its outputs enter
//! it. A transaction folds its traces through the same procedure; failure
//! anywhere rolls the whole transaction back.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::hash::Digest;
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{ActiveSet, ContractId, Object, ObjectId, Trace, Transaction};

/// Why a transaction cannot commit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AbortReason {
    InactiveInput(ObjectId),
    InactiveReference(ObjectId),
    CheckerRejected {
        contract: ContractId,
        procedure: String,
    },
    OutputsWithoutInputs,
    ForeignType(ObjectId),
    LockedObject(ObjectId),
    UnknownContract(ContractId),
    /// An output id does not derive from its creating trace.
    MalformedOutput,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::InactiveInput(id) => write!(f, "inactive-input {}", id.0),
            AbortReason::InactiveReference(id) => write!(f, "inactive-reference {}", id.0),
            AbortReason::CheckerRejected {
                contract,
                procedure,
            } => write!(f, "checker-rejected {} {}", contract.0, procedure),
            AbortReason::OutputsWithoutInputs => write!(f, "outputs-without-inputs"),
            AbortReason::ForeignType(id) => write!(f, "foreign-type {}", id.0),
            AbortReason::LockedObject(id) => write!(f, "locked-object {}", id.0),
            AbortReason::UnknownContract(c) => write!(f, "unknown-contract {}", c.0),
            AbortReason::MalformedOutput => write!(f, "malformed-output"),
        }
    }
}

impl Encode for AbortReason {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::ABORT_REASON, |e| match self {
            AbortReason::InactiveInput(id) => {
                e.u64(0)?;
                id.encode_into(e)
            }
            AbortReason::InactiveReference(id) => {
                e.u64(1)?;
                id.encode_into(e)
            }
            AbortReason::CheckerRejected {
                contract,
                procedure,
            } => {
                e.u64(2)?;
                contract.encode_into(e)?;
                e.string(procedure)
            }
            AbortReason::OutputsWithoutInputs => e.u64(3),
            AbortReason::ForeignType(id) => {
                e.u64(4)?;
                id.encode_into(e)
            }
            AbortReason::LockedObject(id) => {
                e.u64(5)?;
                id.encode_into(e)
            }
            AbortReason::UnknownContract(c) => {
                e.u64(6)?;
                c.encode_into(e)
            }
            AbortReason::MalformedOutput => e.u64(7),
        })
    }
}

impl Decode for AbortReason {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::ABORT_REASON, |d| {
            Ok(match d.u64()? {
                0 => AbortReason::InactiveInput(ObjectId::decode_from(d)?),
                1 => AbortReason::InactiveReference(ObjectId::decode_from(d)?),
                2 => AbortReason::CheckerRejected {
                    contract: ContractId::decode_from(d)?,
                    procedure: d.string()?,
                },
                3 => AbortReason::OutputsWithoutInputs,
                4 => AbortReason::ForeignType(ObjectId::decode_from(d)?),
                5 => AbortReason::LockedObject(ObjectId::decode_from(d)?),
                6 => AbortReason::UnknownContract(ContractId::decode_from(d)?),
                7 => AbortReason::MalformedOutput,
                other => return Err(DecodeError::UnknownDiscriminant(other)),
            })
        })
    }
}

/// Everything a checker may see. Checkers are pure predicates over public
/// data: no secrets, no ambient state, no way to mutate anything.
pub struct CheckerContext<'a> {
    pub procedure: &'a str,
    pub inputs: &'a [Object],
    pub references: &'a [Object],
    pub outputs: &'a [Object],
    pub lparams: &'a [u8],
    pub lreturns: &'a [u8],
    pub deps: &'a [Trace],
}

pub type CheckerFn = fn(&CheckerContext<'_>) -> bool;

/// A registered contract: its id, the object types it owns, and its checker.
#[derive(Clone)]
pub struct ContractChecker {
    pub contract: ContractId,
    pub name: String,
    pub types: BTreeSet<String>,
    pub checker: CheckerFn,
}

impl std::fmt::Debug for ContractChecker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContractChecker")
            .field("contract", &self.contract)
            .field("name", &self.name)
            .field("types", &self.types)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckerRegistry {
    by_id: BTreeMap<ContractId, ContractChecker>,
}

impl CheckerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, checker: ContractChecker) {
        self.by_id.insert(checker.contract, checker);
    }

    pub fn get(&self, id: &ContractId) -> Option<&ContractChecker> {
        self.by_id.get(id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractChecker> {
        self.by_id.values()
    }
}

struct Undo {
    removed: Vec<Object>,
    inserted: Vec<ObjectId>,
}

fn check_trace_inner(
    trace: &Trace,
    alpha: &mut ActiveSet,
    reg: &CheckerRegistry,
    undo: &mut Undo,
) -> Result<(), AbortReason> {
    for dep in &trace.deps {
        check_trace_inner(dep, alpha, reg, undo)?;
    }

    let checker = reg
        .get(&trace.contract)
        .ok_or(AbortReason::UnknownContract(trace.contract))?;

    let mut seen = BTreeSet::new();
    for id in &trace.inputs {
        // A repeated input would be consumed twice; the second occurrence is
        // as dead as a missing object.
        if !alpha.contains(id) || !seen.insert(*id) {
            return Err(AbortReason::InactiveInput(*id));
        }
    }
    for id in &trace.references {
        if !alpha.contains(id) {
            return Err(AbortReason::InactiveReference(*id));
        }
    }

    if !trace.outputs.is_empty() && trace.inputs.is_empty() {
        return Err(AbortReason::OutputsWithoutInputs);
    }

    let owns = |id: &ObjectId, tag: &crate::model::TypeTag| {
        if tag.contract != trace.contract || !checker.types.contains(&tag.name) {
            Err(AbortReason::ForeignType(*id))
        } else {
            Ok(())
        }
    };
    for id in trace.inputs.iter().chain(&trace.references) {
        let obj = alpha.get(id).expect("activeness checked above");
        owns(id, &obj.type_tag)?;
    }
    for out in &trace.outputs {
        owns(&out.id, &out.type_tag)?;
    }

    if !trace.outputs_well_formed() {
        return Err(AbortReason::MalformedOutput);
    }

    let inputs: Vec<Object> = trace
        .inputs
        .iter()
        .map(|id| alpha.get(id).unwrap().clone())
        .collect();
    let references: Vec<Object> = trace
        .references
        .iter()
        .map(|id| alpha.get(id).unwrap().clone())
        .collect();
    let ctx = CheckerContext {
        procedure: &trace.procedure,
        inputs: &inputs,
        references: &references,
        outputs: &trace.outputs,
        lparams: &trace.lparams,
        lreturns: &trace.lreturns,
        deps: &trace.deps,
    };
    if !(checker.checker)(&ctx) {
        return Err(AbortReason::CheckerRejected {
            contract: trace.contract,
            procedure: trace.procedure.clone(),
        });
    }

    for id in &trace.inputs {
        let obj = alpha.remove(id).expect("activeness checked above");
        undo.removed.push(obj);
    }
    for out in &trace.outputs {
        alpha.insert(out.clone());
        undo.inserted.push(out.id);
    }
    Ok(())
}

fn rollback(alpha: &mut ActiveSet, undo: Undo) {
    for id in undo.inserted.into_iter().rev() {
        alpha.remove(&id);
    }
    for obj in undo.removed.into_iter().rev() {
        alpha.insert(obj);
    }
}

/// Check one trace against `alpha`, returning the resulting active set.
pub fn check_trace(
    trace: &Trace,
    alpha: &ActiveSet,
    reg: &CheckerRegistry,
) -> Result<ActiveSet, AbortReason> {
    let mut working = alpha.clone();
    let mut undo = Undo {
        removed: Vec::new(),
        inserted: Vec::new(),
    };
    check_trace_inner(trace, &mut working, reg, &mut undo)?;
    Ok(working)
}

/// Apply a whole transaction to `alpha` in place. On failure `alpha` is
/// exactly as it was.
pub fn apply_transaction(
    tx: &Transaction,
    alpha: &mut ActiveSet,
    reg: &CheckerRegistry,
) -> Result<(), AbortReason> {
    let mut undo = Undo {
        removed: Vec::new(),
        inserted: Vec::new(),
    };
    for trace in &tx.traces {
        if let Err(reason) = check_trace_inner(trace, alpha, reg, &mut undo) {
            rollback(alpha, undo);
            return Err(reason);
        }
    }
    Ok(())
}

/// Pure form: the active set the transaction leads to, or the first failure.
pub fn validate_transaction(
    tx: &Transaction,
    alpha: &ActiveSet,
    reg: &CheckerRegistry,
) -> Result<ActiveSet, AbortReason> {
    let mut working = alpha.clone();
    apply_transaction(tx, &mut working, reg)?;
    Ok(working)
}

/// Digest of an active set's canonical encoding; two parties agree on state
/// exactly when these match.
pub fn active_set_digest(alpha: &ActiveSet) -> Digest {
    crate::crypto::hash(crate::crypto::hash::domain::TX, &alpha.encode())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash::hash;
    use crate::model::{genesis_object, OutputSpec, TypeTag};

    fn widget_contract() -> ContractId {
        ContractId(hash("contract-for-test", b""))
    }

    fn other_contract() -> ContractId {
        ContractId(hash("other-contract", b""))
    }

    fn widget_checker(ctx: &CheckerContext<'_>) -> bool {
        ctx.procedure != "reject"
    }

    fn always_true(_: &CheckerContext<'_>) -> bool {
        true
    }

    fn registry() -> CheckerRegistry {
        let mut reg = CheckerRegistry::new();
        reg.register(ContractChecker {
            contract: widget_contract(),
            name: "widget".into(),
            types: BTreeSet::from(["W".to_string(), "V".to_string()]),
            checker: widget_checker,
        });
        reg.register(ContractChecker {
            contract: other_contract(),
            name: "other".into(),
            types: BTreeSet::from(["X".to_string()]),
            checker: always_true,
        });
        reg
    }

    fn w(name: &str) -> TypeTag {
        TypeTag::new(widget_contract(), name)
    }

    fn gen(idx: u64) -> Object {
        genesis_object(7, idx, w("W"), vec![idx as u8])
    }

    fn spec(name: &str) -> OutputSpec {
        OutputSpec {
            type_tag: w(name),
            payload: vec![],
        }
    }

    #[test]
    fn valid_trace_swaps_inputs_for_outputs() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![spec("W")],
            vec![],
            vec![],
            vec![],
        );
        let out_id = trace.outputs[0].id;
        let alpha = ActiveSet::from_objects([g0.clone()]);
        let next = check_trace(&trace, &alpha, &registry()).unwrap();
        assert!(!next.contains(&g0.id));
        assert!(next.contains(&out_id));
        assert_eq!(next.len(), 1);
    }

    #[test]
    fn inactive_input_aborts() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let empty = ActiveSet::new();
        assert_eq!(
            check_trace(&trace, &empty, &registry()),
            Err(AbortReason::InactiveInput(g0.id))
        );
    }

    #[test]
    fn inactive_reference_aborts() {
        let g0 = gen(0);
        let g1 = gen(1);
        let trace = Trace::build(
            widget_contract(),
            "peek",
            vec![g0.id],
            vec![g1.id],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::InactiveReference(g1.id))
        );
    }

    #[test]
    fn outputs_require_inputs() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "conjure",
            vec![],
            vec![g0.id],
            vec![spec("W")],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::OutputsWithoutInputs)
        );
    }

    #[test]
    fn pure_reads_need_no_outputs_or_inputs() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "peek",
            vec![],
            vec![g0.id],
            vec![],
            vec![],
            vec![42],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0.clone()]);
        let next = check_trace(&trace, &alpha, &registry()).unwrap();
        assert!(next.contains(&g0.id), "references are not consumed");
    }

    #[test]
    fn foreign_typed_input_aborts() {
        let foreign = genesis_object(7, 0, TypeTag::new(other_contract(), "X"), vec![]);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![foreign.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([foreign.clone()]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::ForeignType(foreign.id))
        );
    }

    #[test]
    fn foreign_typed_output_aborts() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![OutputSpec {
                type_tag: TypeTag::new(other_contract(), "X"),
                payload: vec![],
            }],
            vec![],
            vec![],
            vec![],
        );
        let out_id = trace.outputs[0].id;
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::ForeignType(out_id))
        );
    }

    #[test]
    fn unknown_type_name_is_foreign() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![spec("Nonexistent")],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0]);
        assert!(matches!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::ForeignType(_))
        ));
    }

    #[test]
    fn checker_rejection_aborts() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "reject",
            vec![g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::CheckerRejected {
                contract: widget_contract(),
                procedure: "reject".into()
            })
        );
    }

    #[test]
    fn unknown_contract_aborts() {
        let bogus = ContractId(hash("never-registered", b""));
        let g0 = genesis_object(7, 0, TypeTag::new(bogus, "W"), vec![]);
        let trace = Trace::build(bogus, "p", vec![g0.id], vec![], vec![], vec![], vec![], vec![]);
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::UnknownContract(bogus))
        );
    }

    #[test]
    fn tampered_output_id_aborts() {
        let g0 = gen(0);
        let mut trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![spec("W")],
            vec![],
            vec![],
            vec![],
        );
        trace.outputs[0].id = gen(5).id;
        let alpha = ActiveSet::from_objects([g0]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::MalformedOutput)
        );
    }

    #[test]
    fn first_failure_order_input_before_checker() {
        // Inactive input and a rejecting procedure: activeness is checked
        // first.
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "reject",
            vec![g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let empty = ActiveSet::new();
        assert_eq!(
            check_trace(&trace, &empty, &registry()),
            Err(AbortReason::InactiveInput(g0.id))
        );
    }

    #[test]
    fn duplicate_input_aborts() {
        let g0 = gen(0);
        let trace = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id, g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let alpha = ActiveSet::from_objects([g0.clone()]);
        assert_eq!(
            check_trace(&trace, &alpha, &registry()),
            Err(AbortReason::InactiveInput(g0.id))
        );
    }

    #[test]
    fn deps_thread_the_active_set() {
        let g0 = gen(0);
        let dep = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![spec("W")],
            vec![],
            vec![],
            vec![],
        );
        let mid = dep.outputs[0].id;
        let outer = Trace::build(
            widget_contract(),
            "use",
            vec![mid],
            vec![],
            vec![spec("V")],
            vec![],
            vec![],
            vec![dep],
        );
        let final_id = outer.outputs[0].id;
        let alpha = ActiveSet::from_objects([g0.clone()]);
        let next = check_trace(&outer, &alpha, &registry()).unwrap();
        assert!(!next.contains(&g0.id));
        assert!(!next.contains(&mid), "intermediate object must not persist");
        assert!(next.contains(&final_id));
    }

    #[test]
    fn failing_dep_fails_the_trace() {
        let g0 = gen(0);
        let dep = Trace::build(
            widget_contract(),
            "reject",
            vec![g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let outer = Trace::build(
            widget_contract(),
            "use",
            vec![g0.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![dep],
        );
        let alpha = ActiveSet::from_objects([g0]);
        assert!(matches!(
            check_trace(&outer, &alpha, &registry()),
            Err(AbortReason::CheckerRejected { .. })
        ));
    }

    #[test]
    fn transaction_failure_rolls_back() {
        let g0 = gen(0);
        let g1 = gen(1);
        let ok = Trace::build(
            widget_contract(),
            "make",
            vec![g0.id],
            vec![],
            vec![spec("W")],
            vec![],
            vec![],
            vec![],
        );
        let bad = Trace::build(
            widget_contract(),
            "reject",
            vec![g1.id],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        );
        let tx = Transaction::new(vec![ok, bad]);
        let mut alpha = ActiveSet::from_objects([g0.clone(), g1.clone()]);
        let before = alpha.clone();
        assert!(apply_transaction(&tx, &mut alpha, &registry()).is_err());
        assert_eq!(alpha, before, "failed transaction must leave no residue");
    }

    #[test]
    fn double_spend_across_traces_aborts() {
        let g0 = gen(0);
        let spend = |proc: &str| {
            Trace::build(
                widget_contract(),
                proc,
                vec![g0.id],
                vec![],
                vec![],
                vec![],
                vec![],
                vec![],
            )
        };
        let tx = Transaction::new(vec![spend("a"), spend("b")]);
        let alpha = ActiveSet::from_objects([g0.clone()]);
        assert_eq!(
            validate_transaction(&tx, &alpha, &registry()),
            Err(AbortReason::InactiveInput(g0.id))
        );
    }

    #[test]
    fn final_set_matches_free_variable_algebra() {
        // alpha' = (alpha \ free_inputs) ∪ net_outputs for any valid tx.
        let g0 = gen(0);
        let g1 = gen(1);
        let t1 = Trace::build(
            widget_contract(),
            "split",
            vec![g0.id],
            vec![],
            vec![spec("W"), spec("W")],
            vec![],
            vec![],
            vec![],
        );
        let t2 = Trace::build(
            widget_contract(),
            "merge",
            vec![t1.outputs[0].id, g1.id],
            vec![],
            vec![spec("V")],
            vec![],
            vec![],
            vec![],
        );
        let tx = Transaction::new(vec![t1, t2]);
        let alpha = ActiveSet::from_objects([g0.clone(), g1.clone()]);
        let result = validate_transaction(&tx, &alpha, &registry()).unwrap();

        let mut expected = alpha.clone();
        for id in crate::model::free_inputs(&tx) {
            expected.remove(&id);
        }
        for obj in crate::model::net_outputs(&tx) {
            expected.insert(obj);
        }
        assert_eq!(result.encode(), expected.encode());
    }

    #[test]
    fn abort_reason_encoding_round_trips() {
        let reasons = vec![
            AbortReason::InactiveInput(gen(0).id),
            AbortReason::InactiveReference(gen(1).id),
            AbortReason::CheckerRejected {
                contract: widget_contract(),
                procedure: "p".into(),
            },
            AbortReason::OutputsWithoutInputs,
            AbortReason::ForeignType(gen(2).id),
            AbortReason::LockedObject(gen(3).id),
            AbortReason::UnknownContract(other_contract()),
            AbortReason::MalformedOutput,
        ];
        for r in reasons {
            assert_eq!(AbortReason::decode(&r.encode()).unwrap(), r);
        }
    }
}
