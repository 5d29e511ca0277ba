//! Privacy-preserving metering.
//!
//! A meter object accumulates per-period readings as Pedersen commitments,
//! so the ledger never sees consumption values. Readings are appended under
//! a signature from the meter's key. A bill for a period is computed by
//! whoever holds the commitment openings: the bill states a tariff-weighted
//! total, and a zero-knowledge opening proof convinces the checker that the
//! total matches the hidden readings — without revealing them.

use curve25519_dalek::scalar::Scalar;

use crate::crypto::pedersen::Commitment;
use crate::crypto::sig::{verify, Signature, SigningKey, VerifyKey};
use crate::crypto::zkp::{
    prove_bill_opening, verify_bill_opening, BillOpeningProof, BillOpeningStatement, ZkProof,
};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};
use crate::model::{Object, ObjectId, OutputSpec, Trace, TypeTag};
use crate::validity::{CheckerContext, ContractChecker};

use super::{contract_id, token_reissued, SMET};

/// One period's committed readings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadingEntry {
    pub period: u64,
    pub commitments: Vec<Commitment>,
}

impl Encode for ReadingEntry {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::READING, |e| {
            e.u64(self.period)?;
            e.list(&self.commitments)
        })
    }
}

impl Decode for ReadingEntry {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::READING, |d| {
            Ok(ReadingEntry {
                period: d.u64()?,
                commitments: d.list()?,
            })
        })
    }
}

/// Payload of a `Meter` object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeterMeta {
    /// Key authorised to append readings.
    pub key: VerifyKey,
    pub readings: Vec<ReadingEntry>,
}

impl Encode for MeterMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::METER, |e| {
            self.key.encode_into(e)?;
            e.list(&self.readings)
        })
    }
}

impl Decode for MeterMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::METER, |d| {
            Ok(MeterMeta {
                key: VerifyKey::decode_from(d)?,
                readings: d.list()?,
            })
        })
    }
}

/// Payload of a `Bill` object. `meter` is the meter object consumed when the
/// bill was computed, pinning the bill to one exact reading history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BillMeta {
    pub meter: ObjectId,
    pub period: u64,
    pub amount: u64,
}

impl Encode for BillMeta {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::BILL, |e| {
            self.meter.encode_into(e)?;
            e.u64(self.period)?;
            e.u64(self.amount)
        })
    }
}

impl Decode for BillMeta {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::BILL, |d| {
            Ok(BillMeta {
                meter: ObjectId::decode_from(d)?,
                period: d.u64()?,
                amount: d.u64()?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadingParams {
    pub sig: Signature,
}

impl Encode for ReadingParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_SMET_READING, |e| self.sig.encode_into(e))
    }
}

impl Decode for ReadingParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_SMET_READING, |d| {
            Ok(ReadingParams {
                sig: Signature::decode_from(d)?,
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BillParams {
    pub tariffs: Vec<u64>,
    pub proof: BillOpeningProof,
}

impl Encode for BillParams {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::LP_SMET_BILL, |e| {
            e.list(&self.tariffs)?;
            ZkProof::BillOpening(self.proof).encode_into(e)
        })
    }
}

impl Decode for BillParams {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::LP_SMET_BILL, |d| {
            let tariffs = d.list()?;
            let proof = match ZkProof::decode_from(d)? {
                ZkProof::BillOpening(p) => p,
                other => {
                    return Err(DecodeError::UnexpectedTag {
                        expected: tag::PROOF_BILL_OPENING,
                        found: super::proof_tag(&other),
                    })
                }
            };
            Ok(BillParams { tariffs, proof })
        })
    }
}

fn meter_type() -> TypeTag {
    TypeTag::new(contract_id(SMET), "Meter")
}

fn bill_type() -> TypeTag {
    TypeTag::new(contract_id(SMET), "Bill")
}

fn meter_spec(meta: &MeterMeta) -> OutputSpec {
    OutputSpec {
        type_tag: meter_type(),
        payload: meta.encode(),
    }
}

/// Consume the metering token, re-issue it, and mint a meter bound to `key`.
pub fn create_meter(token: &Object, key: VerifyKey) -> Trace {
    Trace::build(
        contract_id(SMET),
        "create",
        vec![token.id],
        vec![],
        vec![
            OutputSpec {
                type_tag: super::token_type(SMET),
                payload: Vec::new(),
            },
            meter_spec(&MeterMeta {
                key,
                readings: Vec::new(),
            }),
        ],
        Vec::new(),
        Vec::new(),
        vec![],
    )
}

/// The bytes the meter key signs when appending a reading: the consumed
/// meter id (replay nonce), the period, and the commitments.
pub fn reading_intent(meter: &ObjectId, period: u64, commitments: &[Commitment]) -> Vec<u8> {
    let mut e = Enc::new();
    e.node(tag::INTENT_READING, |e| {
        meter.encode_into(e)?;
        e.u64(period)?;
        e.list(&commitments.to_vec())
    })
    .expect("intent fits");
    e.into_bytes()
}

/// Append one period's commitments to the meter. `None` if the payload does
/// not parse or the period is already recorded.
pub fn add_reading(
    meter: &Object,
    period: u64,
    commitments: Vec<Commitment>,
    key: &SigningKey,
) -> Option<Trace> {
    let mut meta = MeterMeta::decode(&meter.payload).ok()?;
    if meta.readings.iter().any(|r| r.period == period) {
        return None;
    }
    let sig = key.sign(&reading_intent(&meter.id, period, &commitments));
    meta.readings.push(ReadingEntry {
        period,
        commitments,
    });
    Some(Trace::build(
        contract_id(SMET),
        "reading",
        vec![meter.id],
        vec![],
        vec![meter_spec(&meta)],
        ReadingParams { sig }.encode(),
        Vec::new(),
        vec![],
    ))
}

/// Compute the billed amount for a period from the commitment `openings`
/// (value, blinding pairs in commitment order) and the public `tariffs`.
/// Emits the unchanged meter successor and the bill, with an opening proof
/// in the locals. `None` on arithmetic overflow or mismatched openings.
pub fn compute_bill(
    meter: &Object,
    period: u64,
    tariffs: &[u64],
    openings: &[(u64, Scalar)],
) -> Option<Trace> {
    let meta = MeterMeta::decode(&meter.payload).ok()?;
    let entry = meta.readings.iter().find(|r| r.period == period)?;
    if entry.commitments.len() != tariffs.len() || openings.len() != tariffs.len() {
        return None;
    }
    let mut amount: u64 = 0;
    let mut aggregate_r = Scalar::from(0u64);
    for ((tariff, (value, r)), _) in tariffs.iter().zip(openings).zip(&entry.commitments) {
        amount = amount.checked_add(tariff.checked_mul(*value)?)?;
        aggregate_r += Scalar::from(*tariff) * r;
    }
    let st = BillOpeningStatement {
        commitments: entry.commitments.clone(),
        tariffs: tariffs.to_vec(),
        amount,
        context: meter.id.0,
    };
    let proof = prove_bill_opening(&st, &aggregate_r).ok()?;
    Some(Trace::build(
        contract_id(SMET),
        "bill",
        vec![meter.id],
        vec![],
        vec![
            meter_spec(&meta),
            OutputSpec {
                type_tag: bill_type(),
                payload: BillMeta {
                    meter: meter.id,
                    period,
                    amount,
                }
                .encode(),
            },
        ],
        BillParams {
            tariffs: tariffs.to_vec(),
            proof,
        }
        .encode(),
        Vec::new(),
        vec![],
    ))
}

fn check_create(ctx: &CheckerContext<'_>) -> bool {
    if !token_reissued(ctx) || ctx.outputs.len() != 2 || !ctx.lparams.is_empty() {
        return false;
    }
    let meter = &ctx.outputs[1];
    if meter.type_tag != meter_type() {
        return false;
    }
    matches!(MeterMeta::decode(&meter.payload), Ok(m) if m.readings.is_empty())
}

fn check_reading(ctx: &CheckerContext<'_>) -> bool {
    let [input] = ctx.inputs else { return false };
    let [output] = ctx.outputs else { return false };
    if !ctx.references.is_empty()
        || input.type_tag != meter_type()
        || output.type_tag != meter_type()
    {
        return false;
    }
    let (Ok(before), Ok(after)) = (
        MeterMeta::decode(&input.payload),
        MeterMeta::decode(&output.payload),
    ) else {
        return false;
    };
    let Ok(params) = ReadingParams::decode(ctx.lparams) else {
        return false;
    };
    // Exactly one appended entry, key unchanged, period fresh.
    if after.key != before.key || after.readings.len() != before.readings.len() + 1 {
        return false;
    }
    if after.readings[..before.readings.len()] != before.readings[..] {
        return false;
    }
    let appended = after.readings.last().expect("non-empty");
    if before.readings.iter().any(|r| r.period == appended.period) {
        return false;
    }
    verify(
        &before.key,
        &reading_intent(&input.id, appended.period, &appended.commitments),
        &params.sig,
    )
}

fn check_bill(ctx: &CheckerContext<'_>) -> bool {
    let [input] = ctx.inputs else { return false };
    let [meter_out, bill_out] = ctx.outputs else {
        return false;
    };
    if !ctx.references.is_empty()
        || input.type_tag != meter_type()
        || meter_out.type_tag != meter_type()
        || bill_out.type_tag != bill_type()
    {
        return false;
    }
    // The meter passes through unchanged.
    if meter_out.payload != input.payload {
        return false;
    }
    let (Ok(meta), Ok(bill), Ok(params)) = (
        MeterMeta::decode(&input.payload),
        BillMeta::decode(&bill_out.payload),
        BillParams::decode(ctx.lparams),
    ) else {
        return false;
    };
    if bill.meter != input.id {
        return false;
    }
    let Some(entry) = meta.readings.iter().find(|r| r.period == bill.period) else {
        return false;
    };
    if entry.commitments.len() != params.tariffs.len() {
        return false;
    }
    verify_bill_opening(
        &BillOpeningStatement {
            commitments: entry.commitments.clone(),
            tariffs: params.tariffs.clone(),
            amount: bill.amount,
            context: input.id.0,
        },
        &params.proof,
    )
}

fn checker(ctx: &CheckerContext<'_>) -> bool {
    match ctx.procedure {
        "create" => check_create(ctx),
        "reading" => check_reading(ctx),
        "bill" => check_bill(ctx),
        _ => false,
    }
}

pub fn contract_checker() -> ContractChecker {
    ContractChecker {
        contract: contract_id(SMET),
        name: SMET.to_string(),
        types: ["Token", "Meter", "Bill"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        checker,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::{genesis_tokens, standard_registry};
    use crate::crypto::pedersen::{commit, random_blinding};
    use crate::model::{ActiveSet, Transaction};
    use crate::validity::validate_transaction;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn run(trace: Trace, alpha: &ActiveSet) -> Result<ActiveSet, crate::validity::AbortReason> {
        validate_transaction(&Transaction::new(vec![trace]), alpha, &standard_registry())
    }

    /// A meter with one period of committed readings, plus the openings.
    fn metered() -> (Object, ActiveSet, Vec<(u64, Scalar)>, SigningKey) {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let key = SigningKey::generate(&mut rng);
        let token = genesis_tokens(7)[3].clone();
        let alpha = ActiveSet::from_objects([token.clone()]);
        let create = create_meter(&token, key.verify_key());
        let meter = create.outputs[1].clone();
        let alpha = run(create, &alpha).expect("create validates");

        let values = [120u64, 45, 300];
        let openings: Vec<(u64, Scalar)> = values
            .iter()
            .map(|v| (*v, random_blinding(&mut rng)))
            .collect();
        let commitments: Vec<Commitment> =
            openings.iter().map(|(v, r)| commit(*v, r)).collect();
        let reading = add_reading(&meter, 7, commitments, &key).expect("fresh period");
        let meter = reading.outputs[0].clone();
        let alpha = run(reading, &alpha).expect("reading validates");
        (meter, alpha, openings, key)
    }

    #[test]
    fn reading_appends_under_meter_signature() {
        let (meter, _, _, _) = metered();
        let meta = MeterMeta::decode(&meter.payload).unwrap();
        assert_eq!(meta.readings.len(), 1);
        assert_eq!(meta.readings[0].period, 7);
        assert_eq!(meta.readings[0].commitments.len(), 3);
    }

    #[test]
    fn foreign_key_cannot_append() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let (meter, alpha, _, _) = metered();
        let stranger = SigningKey::generate(&mut rng);
        let commitments = vec![commit(1, &random_blinding(&mut rng))];
        // The builder signs with whatever key it is given; the checker
        // verifies against the key in the meter payload.
        let forged = add_reading(&meter, 8, commitments, &stranger).expect("builds");
        assert!(run(forged, &alpha).is_err());
    }

    #[test]
    fn duplicate_period_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let (meter, alpha, _, key) = metered();
        // The builder refuses; a hand-built duplicate fails validation.
        assert!(add_reading(&meter, 7, vec![], &key).is_none());
        let mut meta = MeterMeta::decode(&meter.payload).unwrap();
        let commitments = vec![commit(9, &random_blinding(&mut rng))];
        let sig = key.sign(&reading_intent(&meter.id, 7, &commitments));
        meta.readings.push(ReadingEntry {
            period: 7,
            commitments,
        });
        let forged = Trace::build(
            contract_id(SMET),
            "reading",
            vec![meter.id],
            vec![],
            vec![meter_spec(&meta)],
            ReadingParams { sig }.encode(),
            Vec::new(),
            vec![],
        );
        assert!(run(forged, &alpha).is_err());
    }

    #[test]
    fn bill_opens_to_the_tariff_weighted_total() {
        let (meter, alpha, openings, _) = metered();
        let tariffs = [2u64, 10, 1];
        let trace = compute_bill(&meter, 7, &tariffs, &openings).expect("opens");
        let bill = BillMeta::decode(&trace.outputs[1].payload).unwrap();
        assert_eq!(bill.amount, 2 * 120 + 10 * 45 + 300);
        assert_eq!(bill.meter, meter.id);
        // The ledger-visible payloads never contain the readings.
        assert!(run(trace, &alpha).is_ok());
    }

    #[test]
    fn wrong_amount_or_wrong_context_fails() {
        let (meter, alpha, openings, _) = metered();
        let tariffs = [2u64, 10, 1];
        let honest = compute_bill(&meter, 7, &tariffs, &openings).unwrap();
        let params = BillParams::decode(&honest.lparams).unwrap();
        // Same proof, understated amount.
        let forged = Trace::build(
            contract_id(SMET),
            "bill",
            vec![meter.id],
            vec![],
            vec![
                meter_spec(&MeterMeta::decode(&meter.payload).unwrap()),
                OutputSpec {
                    type_tag: bill_type(),
                    payload: BillMeta {
                        meter: meter.id,
                        period: 7,
                        amount: 1,
                    }
                    .encode(),
                },
            ],
            params.encode(),
            Vec::new(),
            vec![],
        );
        assert!(run(forged, &alpha).is_err());
    }

    #[test]
    fn bill_for_unrecorded_period_fails() {
        let (meter, _, openings, _) = metered();
        assert!(compute_bill(&meter, 99, &[1, 1, 1], &openings).is_none());
    }

    #[test]
    fn meter_meta_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let meta = MeterMeta {
            key: SigningKey::generate(&mut rng).verify_key(),
            readings: vec![ReadingEntry {
                period: 3,
                commitments: vec![commit(5, &random_blinding(&mut rng))],
            }],
        };
        assert_eq!(MeterMeta::decode(&meta.encode()), Ok(meta.clone()));
        let bill = BillMeta {
            meter: ObjectId(crate::crypto::hash::hash("tx", b"x")),
            period: 3,
            amount: 17,
        };
        assert_eq!(BillMeta::decode(&bill.encode()), Ok(bill));
    }
}
