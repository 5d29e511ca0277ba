//! A simple coin.
//!
//! `init` mints the declared supply into accounts; `transfer` moves value
//! between accounts, consuming them and emitting successors. Every debited
//! account must sign the transfer intent, and the intent covers the consumed
//! object ids, so a signature can never be replayed: the objects it names
//! are gone once it is used.
//!
//! Local returns carry the per-account value flows (and an optional fee) so
//! that enclosing procedures can reason about money moved without decoding
//! account payloads.

use crate::crypto::sig::{verify, SigningKey, VerifyKey};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{Object, ObjectId, OutputSpec, Trace, TypeTag};
use crate::validity::{CheckerContext, ContractChecker};

use super::{contract_id, of_type, token_reissued, KeySig, CSCOIN};

/// Payload of an `Account` object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Account {
    pub owner: VerifyKey,
    pub balance: u64,
}

impl Encode for Account {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::ACCOUNT, |e| {
            self.owner.encode_into(e)?;
            e.u64(self.balance)
        })
    }
}

impl Decode for Account {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::ACCOUNT, |d| {
            Ok(Account {
                owner: VerifyKey::decode_from(d)?,
                balance: d.u64()?,
            })
        })
    }
}

/// One value movement between input positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub from: u64,
    pub to: u64,
    pub amount: u64,
}

impl Encode for Move {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MOVE, |e| {
            e.u64(self.from)?;
            e.u64(self.to)?;
            e.u64(self.amount)
        })
    }
}

impl Decode for Move {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MOVE, |d| {
            Ok(Move {
                from: d.u64()?,
                to: d.u64()?,
                amount: d.u64()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitParams {
    pub supply: u64,
}

impl Encode for InitParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_COIN_INIT, |e| e.u64(self.supply))
    }
}

impl Decode for InitParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_COIN_INIT, |d| Ok(InitParams { supply: d.u64()? }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferParams {
    pub moves: Vec<Move>,
    /// Amount burned from `fee_from` on top of the moves; zero when unused.
    pub fee: u64,
    pub fee_from: u64,
    pub sigs: Vec<KeySig>,
}

impl Encode for TransferParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_COIN_TRANSFER, |e| {
            e.list(&self.moves)?;
            e.u64(self.fee)?;
            e.u64(self.fee_from)?;
            e.list(&self.sigs)
        })
    }
}

impl Decode for TransferParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_COIN_TRANSFER, |d| {
            Ok(TransferParams {
                moves: d.list()?,
                fee: d.u64()?,
                fee_from: d.u64()?,
                sigs: d.list()?,
            })
        })
    }
}

/// Per-account balance change, reported in local returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub owner: VerifyKey,
    pub before: u64,
    pub after: u64,
}

impl Encode for Flow {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::FLOW, |e| {
            self.owner.encode_into(e)?;
            e.u64(self.before)?;
            e.u64(self.after)
        })
    }
}

impl Decode for Flow {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::FLOW, |d| {
            Ok(Flow {
                owner: VerifyKey::decode_from(d)?,
                before: d.u64()?,
                after: d.u64()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferReturns {
    pub flows: Vec<Flow>,
    pub fee: u64,
}

impl Encode for TransferReturns {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LR_COIN_TRANSFER, |e| {
            e.list(&self.flows)?;
            e.u64(self.fee)
        })
    }
}

impl Decode for TransferReturns {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LR_COIN_TRANSFER, |d| {
            Ok(TransferReturns {
                flows: d.list()?,
                fee: d.u64()?,
            })
        })
    }
}

fn account_type() -> TypeTag {
    TypeTag::new(contract_id(CSCOIN), "Account")
}

fn account_spec(account: &Account) -> OutputSpec {
    OutputSpec {
        type_tag: account_type(),
        payload: account.encode(),
    }
}

/// Mint the initial supply: consume the coin token, emit it back plus one
/// account per allocation.
pub fn init(token: &Object, allocations: &[(VerifyKey, u64)]) -> Trace {
    let supply = allocations.iter().map(|(_, b)| b).sum();
    let mut outputs = vec![OutputSpec {
        type_tag: super::token_type(CSCOIN),
        payload: Vec::new(),
    }];
    outputs.extend(allocations.iter().map(|(owner, balance)| {
        account_spec(&Account {
            owner: *owner,
            balance: *balance,
        })
    }));
    Trace::build(
        contract_id(CSCOIN),
        "init",
        vec![token.id],
        vec![],
        outputs,
        InitParams { supply }.encode(),
        vec![],
        vec![],
    )
}

/// The bytes a debited owner signs: the consumed account ids (the replay
/// nonce) and the exact movements.
pub fn transfer_intent(inputs: &[ObjectId], moves: &[Move], fee: u64, fee_from: u64) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::INTENT_COIN, |e| {
        e.list(inputs)?;
        e.list(moves)?;
        e.u64(fee)?;
        e.u64(fee_from)
    })
    .expect("intent fits");
    e.into_bytes()
}

/// Apply moves (and an optional fee) to the input balances with checked
/// arithmetic. `None` means an overdraft or an out-of-range index.
fn settle(balances: &[u64], moves: &[Move], fee: u64, fee_from: u64) -> Option<Vec<u64>> {
    let mut out = balances.to_vec();
    for m in moves {
        let from = out.get(m.from as usize).copied()?;
        out[m.from as usize] = from.checked_sub(m.amount)?;
        let to = out.get(m.to as usize).copied()?;
        out[m.to as usize] = to.checked_add(m.amount)?;
    }
    if fee > 0 {
        let from = out.get(fee_from as usize).copied()?;
        out[fee_from as usize] = from.checked_sub(fee)?;
    } else if fee_from != 0 {
        return None;
    }
    Some(out)
}

/// Build a transfer consuming `accounts` and emitting successors with the
/// moves applied. Signers must cover every debited account's owner. Returns
/// `None` on overdraft rather than building a trace doomed to abort.
pub fn transfer(
    accounts: &[&Object],
    moves: &[Move],
    fee: u64,
    fee_from: u64,
    signers: &[&SigningKey],
) -> Option<Trace> {
    let parsed: Vec<Account> = accounts
        .iter()
        .map(|o| Account::decode(&o.payload).ok())
        .collect::<Option<_>>()?;
    let balances: Vec<u64> = parsed.iter().map(|a| a.balance).collect();
    let after = settle(&balances, moves, fee, fee_from)?;

    let input_ids: Vec<ObjectId> = accounts.iter().map(|o| o.id).collect();
    let intent = transfer_intent(&input_ids, moves, fee, fee_from);
    let by_key: std::collections::BTreeMap<VerifyKey, &SigningKey> =
        signers.iter().map(|k| (k.verify_key(), *k)).collect();
    let mut sigs = Vec::new();
    let mut signed = std::collections::BTreeSet::new();
    for (i, account) in parsed.iter().enumerate() {
        if after[i] < balances[i] && signed.insert(account.owner) {
            let key = by_key.get(&account.owner)?;
            sigs.push(KeySig {
                key: account.owner,
                sig: key.sign(&intent),
            });
        }
    }

    let outputs: Vec<OutputSpec> = parsed
        .iter()
        .zip(&after)
        .map(|(a, balance)| {
            account_spec(&Account {
                owner: a.owner,
                balance: *balance,
            })
        })
        .collect();
    let flows: Vec<Flow> = parsed
        .iter()
        .zip(&after)
        .filter(|(a, after)| a.balance != **after)
        .map(|(a, after)| Flow {
            owner: a.owner,
            before: a.balance,
            after: *after,
        })
        .collect();
    Some(Trace::build(
        contract_id(CSCOIN),
        "transfer",
        input_ids,
        vec![],
        outputs,
        TransferParams {
            moves: moves.to_vec(),
            fee,
            fee_from,
            sigs,
        }
        .encode(),
        TransferReturns { flows, fee }.encode(),
        vec![],
    ))
}

fn check_init(ctx: &CheckerContext<'_>) -> bool {
    if !token_reissued(ctx) {
        return false;
    }
    let Ok(params) = InitParams::decode(ctx.lparams) else {
        return false;
    };
    let accounts = of_type(ctx.outputs, "Account");
    if accounts.len() + 1 != ctx.outputs.len() {
        return false;
    }
    let mut total: u64 = 0;
    for obj in accounts {
        let Ok(account) = Account::decode(&obj.payload) else {
            return false;
        };
        let Some(t) = total.checked_add(account.balance) else {
            return false;
        };
        total = t;
    }
    total == params.supply
}

fn check_transfer(ctx: &CheckerContext<'_>) -> bool {
    if !ctx.references.is_empty() || ctx.inputs.is_empty() {
        return false;
    }
    if ctx.inputs.len() != ctx.outputs.len() {
        return false;
    }
    let Ok(params) = TransferParams::decode(ctx.lparams) else {
        return false;
    };
    let (ins, outs): (Vec<Option<Account>>, Vec<Option<Account>>) = (
        ctx.inputs
            .iter()
            .map(|o| (o.type_tag.name == "Account").then(|| Account::decode(&o.payload).ok()).flatten())
            .collect(),
        ctx.outputs
            .iter()
            .map(|o| (o.type_tag.name == "Account").then(|| Account::decode(&o.payload).ok()).flatten())
            .collect(),
    );
    let (Some(ins), Some(outs)): (Option<Vec<Account>>, Option<Vec<Account>>) =
        (ins.into_iter().collect(), outs.into_iter().collect())
    else {
        return false;
    };
    // Successors keep their position and owner.
    if ins
        .iter()
        .zip(&outs)
        .any(|(a, b)| a.owner != b.owner)
    {
        return false;
    }
    // Recompute the settlement; conservation and non-negativity fall out of
    // the checked arithmetic.
    let balances: Vec<u64> = ins.iter().map(|a| a.balance).collect();
    let Some(after) = settle(&balances, &params.moves, params.fee, params.fee_from) else {
        return false;
    };
    if outs.iter().map(|a| a.balance).collect::<Vec<_>>() != after {
        return false;
    }
    // Every debited owner must have signed this exact intent.
    let input_ids: Vec<ObjectId> = ctx.inputs.iter().map(|o| o.id).collect();
    let intent = transfer_intent(&input_ids, &params.moves, params.fee, params.fee_from);
    let valid_signers: std::collections::BTreeSet<VerifyKey> = params
        .sigs
        .iter()
        .filter(|ks| verify(&ks.key, &intent, &ks.sig))
        .map(|ks| ks.key)
        .collect();
    for (i, account) in ins.iter().enumerate() {
        if after[i] < balances[i] && !valid_signers.contains(&account.owner) {
            return false;
        }
    }
    // Local returns must truthfully describe the flows.
    let expected = TransferReturns {
        flows: ins
            .iter()
            .zip(&after)
            .filter(|(a, after)| a.balance != **after)
            .map(|(a, after)| Flow {
                owner: a.owner,
                before: a.balance,
                after: *after,
            })
            .collect(),
        fee: params.fee,
    };
    TransferReturns::decode(ctx.lreturns) == Ok(expected)
}

fn checker(ctx: &CheckerContext<'_>) -> bool {
    match ctx.procedure {
        "init" => check_init(ctx),
        "transfer" => check_transfer(ctx),
        _ => false,
    }
}

pub fn contract_checker() -> ContractChecker {
    ContractChecker {
        contract: contract_id(CSCOIN),
        name: CSCOIN.to_string(),
        types: ["Token", "Account"].iter().map(|s| s.to_string()).collect(),
        checker,
    }
}

/// Sum of balances over every active account, for conservation checks.
pub fn circulating_supply<'a>(objects: impl Iterator<Item = &'a Object>) -> u64 {
    objects
        .filter(|o| o.type_tag == account_type())
        .filter_map(|o| Account::decode(&o.payload).ok())
        .map(|a| a.balance)
        .sum()
}
