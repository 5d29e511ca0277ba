//! Contract registration.
//!
//! `create` publishes a contract: it consumes the `manage-contracts` token
//! and emits a `Contract` object (the declaration), a `Mapping` object (the
//! binding from contract id to checker), and the reissued token. The checker
//! key must name one of the checkers compiled into this build — contract
//! code itself is not loaded dynamically, and published contracts cannot be
//! updated.
//!
//! The new contract's own initialization runs as a second trace in the same
//! transaction, consuming that contract's genesis token, so registration and
//! initial state appear atomically.

use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{ContractId, Object, OutputSpec, Trace, Transaction, TypeTag};
use crate::validity::{CheckerContext, ContractChecker};

use super::{contract_id, exactly_one, token_reissued, KNOWN, MANAGE_CONTRACTS};

/// Payload of a `Contract` object: the published declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractMeta {
    pub name: String,
    pub contract: ContractId,
}

impl Encode for ContractMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::CONTRACT_META, |e| {
            e.string(&self.name)?;
            self.contract.encode_into(e)
        })
    }
}

impl Decode for ContractMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::CONTRACT_META, |d| {
            Ok(ContractMeta {
                name: d.string()?,
                contract: ContractId::decode_from(d)?,
            })
        })
    }
}

/// Payload of a `Mapping` object: contract id to checker key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingMeta {
    pub contract: ContractId,
    pub checker: String,
}

impl Encode for MappingMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MAPPING_META, |e| {
            self.contract.encode_into(e)?;
            e.string(&self.checker)
        })
    }
}

impl Decode for MappingMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MAPPING_META, |d| {
            Ok(MappingMeta {
                contract: ContractId::decode_from(d)?,
                checker: d.string()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateParams {
    pub checker: String,
}

impl Encode for CreateParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_MC_CREATE, |e| e.string(&self.checker))
    }
}

impl Decode for CreateParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_MC_CREATE, |d| {
            Ok(CreateParams {
                checker: d.string()?,
            })
        })
    }
}

/// The registration trace alone. Pair it with the contract's own
/// initialization via [`create`].
pub fn registration(mc_token: &Object, checker_key: &str) -> Trace {
    let id = contract_id(checker_key);
    let mc = contract_id(MANAGE_CONTRACTS);
    Trace::build(
        mc,
        "create",
        vec![mc_token.id],
        vec![],
        vec![
            OutputSpec {
                type_tag: super::token_type(MANAGE_CONTRACTS),
                payload: Vec::new(),
            },
            OutputSpec {
                type_tag: TypeTag::new(mc, "Contract"),
                payload: ContractMeta {
                    name: checker_key.to_string(),
                    contract: id,
                }
                .encode(),
            },
            OutputSpec {
                type_tag: TypeTag::new(mc, "Mapping"),
                payload: MappingMeta {
                    contract: id,
                    checker: checker_key.to_string(),
                }
                .encode(),
            },
        ],
        CreateParams {
            checker: checker_key.to_string(),
        }
        .encode(),
        vec![],
        vec![],
    )
}

/// Register a contract and run its initialization atomically.
pub fn create(mc_token: &Object, checker_key: &str, init: Trace) -> Transaction {
    Transaction::new(vec![registration(mc_token, checker_key), init])
}

fn check_create(ctx: &CheckerContext<'_>) -> bool {
    if !token_reissued(ctx) || ctx.outputs.len() != 3 {
        return false;
    }
    let Ok(params) = CreateParams::decode(ctx.lparams) else {
        return false;
    };
    // Only checkers compiled into this build can be referenced.
    if !KNOWN.contains(&params.checker.as_str()) {
        return false;
    }
    let id = contract_id(&params.checker);
    let Some(contract_obj) = exactly_one(ctx.outputs, "Contract") else {
        return false;
    };
    let Some(mapping_obj) = exactly_one(ctx.outputs, "Mapping") else {
        return false;
    };
    let Ok(meta) = ContractMeta::decode(&contract_obj.payload) else {
        return false;
    };
    let Ok(mapping) = MappingMeta::decode(&mapping_obj.payload) else {
        return false;
    };
    meta == ContractMeta {
        name: params.checker.clone(),
        contract: id,
    } && mapping
        == MappingMeta {
            contract: id,
            checker: params.checker,
        }
}

fn checker(ctx: &CheckerContext<'_>) -> bool {
    match ctx.procedure {
        "create" => check_create(ctx),
        _ => false,
    }
}

pub fn contract_checker() -> ContractChecker {
    ContractChecker {
        contract: contract_id(MANAGE_CONTRACTS),
        name: MANAGE_CONTRACTS.to_string(),
        types: ["Token", "Contract", "Mapping"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        checker,
    }
}
