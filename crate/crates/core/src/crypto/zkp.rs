//! Non-interactive sigma protocols used by the private-state contracts.
//!
//! All proofs are strong Fiat-Shamir: the challenge hashes the entire public
//! statement plus every prover commitment, so a proof cannot be transplanted
//! onto a different statement. Responses follow the `z = w - e·x` convention,
//! verified by recomputing the prover commitment as `z·B + e·P`. Prover
//! nonces are derived deterministically from the witness and statement,
//! making proof bytes reproducible run to run.

use curve25519_dalek::ristretto::RistrettoPoint;
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::MultiscalarMul;
use thiserror::Error;

use crate::crypto::elgamal::{encrypt, Ciphertext, ElgamalPublic};
use crate::crypto::group::{g, h, hash_to_scalar};
use crate::crypto::hash::{domain, Digest};
use crate::crypto::pedersen::Commitment;
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ZkpError {
    #[error("witness does not satisfy the statement")]
    InvalidWitness,
    #[error("statement shape is invalid: {0}")]
    MalformedStatement(&'static str),
}

/// Challenge over `statement bytes || commitment points`, under a proof-family
/// domain tag.
fn fs_challenge(tag: &str, statement: &[u8], commits: &[RistrettoPoint]) -> Scalar {
    let mut buf = statement.to_vec();
    for c in commits {
        buf.extend_from_slice(&c.compress().to_bytes());
    }
    hash_to_scalar(tag, &buf)
}

/// Deterministic prover nonce bound to the witness, statement, and a slot
/// index so multi-nonce proofs stay independent.
fn nonce(tag: &str, witness: &Scalar, statement: &[u8], slot: u8) -> Scalar {
    let mut buf = vec![0x6e, slot];
    buf.extend_from_slice(&witness.to_bytes());
    buf.extend_from_slice(statement);
    hash_to_scalar(tag, &buf)
}

// ---------------------------------------------------------------------------
// Binary vote: ciphertext encrypts 0 or 1.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryVoteStatement {
    pub key: ElgamalPublic,
    pub ct: Ciphertext,
    /// Free-form binding context (ballot id, option index, ...). Two
    /// identical ciphertexts in different contexts need different proofs.
    pub context: Digest,
}

impl Encode for BinaryVoteStatement {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_BINARY_VOTE, |e| {
            self.key.encode_into(e)?;
            self.ct.encode_into(e)?;
            self.context.encode_into(e)
        })
    }
}

/// Disjunctive Chaum-Pedersen proof: one simulated branch, one real branch,
/// challenges constrained to sum to the transcript hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryVoteProof {
    pub e0: Scalar,
    pub z0: Scalar,
    pub e1: Scalar,
    pub z1: Scalar,
}

impl Encode for BinaryVoteProof {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_BINARY_VOTE, |e| {
            self.e0.encode_into(e)?;
            self.z0.encode_into(e)?;
            self.e1.encode_into(e)?;
            self.z1.encode_into(e)
        })
    }
}

impl Decode for BinaryVoteProof {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::PROOF_BINARY_VOTE, |d| {
            Ok(BinaryVoteProof {
                e0: Scalar::decode_from(d)?,
                z0: Scalar::decode_from(d)?,
                e1: Scalar::decode_from(d)?,
                z1: Scalar::decode_from(d)?,
            })
        })
    }
}

/// Branch `m` claims knowledge of `r` with `a = r·g` and `b - m·g = r·y`.
fn binary_branch_target(st: &BinaryVoteStatement, m: u64) -> RistrettoPoint {
    st.ct.b - g() * Scalar::from(m)
}

pub fn prove_binary_vote(
    st: &BinaryVoteStatement,
    value: u64,
    r: &Scalar,
) -> Result<BinaryVoteProof, ZkpError> {
    if value > 1 {
        return Err(ZkpError::InvalidWitness);
    }
    if encrypt(&st.key, value, r) != st.ct {
        return Err(ZkpError::InvalidWitness);
    }
    let stmt = st.encode();
    let y = st.key.0;

    // Simulate the branch we cannot prove.
    let sim = 1 - value;
    let e_sim = nonce(domain::ZK_BINARY, r, &stmt, 0);
    let z_sim = nonce(domain::ZK_BINARY, r, &stmt, 1);
    let sim_a1 = g() * z_sim + st.ct.a * e_sim;
    let sim_a2 = y * z_sim + binary_branch_target(st, sim) * e_sim;

    // Real branch commitment.
    let w = nonce(domain::ZK_BINARY, r, &stmt, 2);
    let real_a1 = g() * w;
    let real_a2 = y * w;

    let commits = if value == 0 {
        [real_a1, real_a2, sim_a1, sim_a2]
    } else {
        [sim_a1, sim_a2, real_a1, real_a2]
    };
    let e_total = fs_challenge(domain::ZK_BINARY, &stmt, &commits);
    let e_real = e_total - e_sim;
    let z_real = w - e_real * r;

    Ok(if value == 0 {
        BinaryVoteProof {
            e0: e_real,
            z0: z_real,
            e1: e_sim,
            z1: z_sim,
        }
    } else {
        BinaryVoteProof {
            e0: e_sim,
            z0: z_sim,
            e1: e_real,
            z1: z_real,
        }
    })
}

pub fn verify_binary_vote(st: &BinaryVoteStatement, proof: &BinaryVoteProof) -> bool {
    let stmt = st.encode();
    let y = st.key.0;
    let a01 = g() * proof.z0 + st.ct.a * proof.e0;
    let a02 = y * proof.z0 + binary_branch_target(st, 0) * proof.e0;
    let a11 = g() * proof.z1 + st.ct.a * proof.e1;
    let a12 = y * proof.z1 + binary_branch_target(st, 1) * proof.e1;
    let e_total = fs_challenge(domain::ZK_BINARY, &stmt, &[a01, a02, a11, a12]);
    proof.e0 + proof.e1 == e_total
}

// ---------------------------------------------------------------------------
// Chaum-Pedersen core shared by the single-branch proofs: knowledge of x with
// P1 = x·B1 and P2 = x·B2.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EqDlogProof {
    pub e: Scalar,
    pub z: Scalar,
}

fn encode_eq_dlog(outer: u8, p: &EqDlogProof, e: &mut Enc) -> Result<(), EncodeError> {
    e.node(outer, |e| {
        p.e.encode_into(e)?;
        p.z.encode_into(e)
    })
}

fn decode_eq_dlog(outer: u8, d: &mut Dec<'_>) -> Result<EqDlogProof, DecodeError> {
    d.node(outer, |d| {
        Ok(EqDlogProof {
            e: Scalar::decode_from(d)?,
            z: Scalar::decode_from(d)?,
        })
    })
}

fn prove_eq_dlog(
    tag: &str,
    stmt: &[u8],
    bases: [RistrettoPoint; 2],
    x: &Scalar,
) -> EqDlogProof {
    let w = nonce(tag, x, stmt, 0);
    let a1 = bases[0] * w;
    let a2 = bases[1] * w;
    let e = fs_challenge(tag, stmt, &[a1, a2]);
    EqDlogProof { e, z: w - e * x }
}

fn verify_eq_dlog(
    tag: &str,
    stmt: &[u8],
    bases: [RistrettoPoint; 2],
    targets: [RistrettoPoint; 2],
    proof: &EqDlogProof,
) -> bool {
    let a1 = bases[0] * proof.z + targets[0] * proof.e;
    let a2 = bases[1] * proof.z + targets[1] * proof.e;
    fs_challenge(tag, stmt, &[a1, a2]) == proof.e
}

// ---------------------------------------------------------------------------
// Sum-one: a ciphertext vector whose plaintexts sum to exactly one.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumOneStatement {
    pub key: ElgamalPublic,
    pub cts: Vec<Ciphertext>,
    pub context: Digest,
}

impl Encode for SumOneStatement {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_SUM_ONE, |e| {
            self.key.encode_into(e)?;
            e.list(&self.cts)?;
            self.context.encode_into(e)
        })
    }
}

pub type SumOneProof = EqDlogProof;

fn sum_one_instance(st: &SumOneStatement) -> (Ciphertext, RistrettoPoint) {
    let combined = st
        .cts
        .iter()
        .fold(Ciphertext::zero(), |acc, ct| acc + *ct);
    // Combined ciphertext must encrypt 1: b - g = R·y with a = R·g.
    (combined, combined.b - g())
}

/// `total_r` is the sum of the per-ciphertext encryption randomness.
pub fn prove_sum_one(st: &SumOneStatement, total_r: &Scalar) -> Result<SumOneProof, ZkpError> {
    if st.cts.is_empty() {
        return Err(ZkpError::MalformedStatement("empty ciphertext vector"));
    }
    let (combined, target) = sum_one_instance(st);
    if combined.a != g() * total_r || target != st.key.0 * total_r {
        return Err(ZkpError::InvalidWitness);
    }
    Ok(prove_eq_dlog(
        domain::ZK_SUM_ONE,
        &st.encode(),
        [g(), st.key.0],
        total_r,
    ))
}

pub fn verify_sum_one(st: &SumOneStatement, proof: &SumOneProof) -> bool {
    if st.cts.is_empty() {
        return false;
    }
    let (combined, target) = sum_one_instance(st);
    verify_eq_dlog(
        domain::ZK_SUM_ONE,
        &st.encode(),
        [g(), st.key.0],
        [combined.a, target],
        proof,
    )
}

// ---------------------------------------------------------------------------
// Zero-init: a ciphertext encrypts zero.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroInitStatement {
    pub key: ElgamalPublic,
    pub ct: Ciphertext,
    pub context: Digest,
}

impl Encode for ZeroInitStatement {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_ZERO_INIT, |e| {
            self.key.encode_into(e)?;
            self.ct.encode_into(e)?;
            self.context.encode_into(e)
        })
    }
}

pub type ZeroInitProof = EqDlogProof;

pub fn prove_zero_init(st: &ZeroInitStatement, r: &Scalar) -> Result<ZeroInitProof, ZkpError> {
    if encrypt(&st.key, 0, r) != st.ct {
        return Err(ZkpError::InvalidWitness);
    }
    Ok(prove_eq_dlog(
        domain::ZK_ZERO_INIT,
        &st.encode(),
        [g(), st.key.0],
        r,
    ))
}

pub fn verify_zero_init(st: &ZeroInitStatement, proof: &ZeroInitProof) -> bool {
    verify_eq_dlog(
        domain::ZK_ZERO_INIT,
        &st.encode(),
        [g(), st.key.0],
        [st.ct.a, st.ct.b],
        proof,
    )
}

// ---------------------------------------------------------------------------
// Decryption: `plaintext` is the decryption of `ct` under the secret key
// behind `key`.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionStatement {
    pub key: ElgamalPublic,
    pub ct: Ciphertext,
    pub plaintext: u64,
    pub context: Digest,
}

impl Encode for DecryptionStatement {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_DECRYPTION, |e| {
            self.key.encode_into(e)?;
            self.ct.encode_into(e)?;
            e.u64(self.plaintext)?;
            self.context.encode_into(e)
        })
    }
}

pub type DecryptionProof = EqDlogProof;

pub fn prove_decryption(st: &DecryptionStatement, dk: &Scalar) -> Result<DecryptionProof, ZkpError> {
    let target = st.ct.b - g() * Scalar::from(st.plaintext);
    if st.key.0 != g() * dk || target != st.ct.a * dk {
        return Err(ZkpError::InvalidWitness);
    }
    Ok(prove_eq_dlog(
        domain::ZK_DECRYPT,
        &st.encode(),
        [g(), st.ct.a],
        dk,
    ))
}

pub fn verify_decryption(st: &DecryptionStatement, proof: &DecryptionProof) -> bool {
    let target = st.ct.b - g() * Scalar::from(st.plaintext);
    verify_eq_dlog(
        domain::ZK_DECRYPT,
        &st.encode(),
        [g(), st.ct.a],
        [st.key.0, target],
        proof,
    )
}

// ---------------------------------------------------------------------------
// Bill opening: the tariff-weighted product of reading commitments opens to
// the claimed amount.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BillOpeningStatement {
    pub commitments: Vec<Commitment>,
    pub tariffs: Vec<u64>,
    pub amount: u64,
    pub context: Digest,
}

impl Encode for BillOpeningStatement {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::PROOF_BILL_OPENING, |e| {
            e.list(&self.commitments)?;
            e.list(&self.tariffs)?;
            e.u64(self.amount)?;
            self.context.encode_into(e)
        })
    }
}

pub type BillOpeningProof = EqDlogProof;

/// `Π C_i^{t_i} · g^{-amount}` must equal `h^R` where `R = Σ t_i·r_i`.
fn bill_target(st: &BillOpeningStatement) -> RistrettoPoint {
    let weighted = RistrettoPoint::multiscalar_mul(
        st.tariffs.iter().map(|t| Scalar::from(*t)),
        st.commitments.iter().map(|c| c.0),
    );
    weighted - g() * Scalar::from(st.amount)
}

/// `aggregate_r` is the tariff-weighted sum of the commitment blindings.
pub fn prove_bill_opening(
    st: &BillOpeningStatement,
    aggregate_r: &Scalar,
) -> Result<BillOpeningProof, ZkpError> {
    if st.commitments.len() != st.tariffs.len() {
        return Err(ZkpError::MalformedStatement(
            "tariff and commitment counts differ",
        ));
    }
    if bill_target(st) != h() * aggregate_r {
        return Err(ZkpError::InvalidWitness);
    }
    let stmt = st.encode();
    let w = nonce(domain::ZK_BILL, aggregate_r, &stmt, 0);
    let a = h() * w;
    let e = fs_challenge(domain::ZK_BILL, &stmt, &[a]);
    Ok(EqDlogProof {
        e,
        z: w - e * aggregate_r,
    })
}

pub fn verify_bill_opening(st: &BillOpeningStatement, proof: &BillOpeningProof) -> bool {
    if st.commitments.len() != st.tariffs.len() {
        return false;
    }
    let stmt = st.encode();
    let a = h() * proof.z + bill_target(st) * proof.e;
    fs_challenge(domain::ZK_BILL, &stmt, &[a]) == proof.e
}

// ---------------------------------------------------------------------------
// Tagged union over all proof families, the form carried inside trace locals.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZkProof {
    BinaryVote(BinaryVoteProof),
    SumOne(SumOneProof),
    ZeroInit(ZeroInitProof),
    Decryption(DecryptionProof),
    BillOpening(BillOpeningProof),
}

impl Encode for ZkProof {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        match self {
            ZkProof::BinaryVote(p) => p.encode_into(e),
            ZkProof::SumOne(p) => encode_eq_dlog(tag::PROOF_SUM_ONE, p, e),
            ZkProof::ZeroInit(p) => encode_eq_dlog(tag::PROOF_ZERO_INIT, p, e),
            ZkProof::Decryption(p) => encode_eq_dlog(tag::PROOF_DECRYPTION, p, e),
            ZkProof::BillOpening(p) => encode_eq_dlog(tag::PROOF_BILL_OPENING, p, e),
        }
    }
}

impl Decode for ZkProof {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        match d.peek_tag()? {
            tag::PROOF_BINARY_VOTE => Ok(ZkProof::BinaryVote(BinaryVoteProof::decode_from(d)?)),
            tag::PROOF_SUM_ONE => Ok(ZkProof::SumOne(decode_eq_dlog(tag::PROOF_SUM_ONE, d)?)),
            tag::PROOF_ZERO_INIT => Ok(ZkProof::ZeroInit(decode_eq_dlog(tag::PROOF_ZERO_INIT, d)?)),
            tag::PROOF_DECRYPTION => {
                Ok(ZkProof::Decryption(decode_eq_dlog(tag::PROOF_DECRYPTION, d)?))
            }
            tag::PROOF_BILL_OPENING => Ok(ZkProof::BillOpening(decode_eq_dlog(
                tag::PROOF_BILL_OPENING,
                d,
            )?)),
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}
