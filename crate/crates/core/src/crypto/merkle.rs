//! Merkle trees over byte-string leaves.
//!
//! Leaves are hashed under the `leaf` domain, interior nodes under `node`.
//! A level with an odd number of nodes duplicates its last node. The empty
//! tree is an error; a single leaf is its own root with an empty proof.

use thiserror::Error;

use crate::crypto::hash::{domain, hash, hash_parts, Digest};
use crate::encoding::{tag, Dec, Decode, DecodeError, Enc, Encode, EncodeError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("cannot build a Merkle tree over zero leaves")]
    EmptyTree,
    #[error("leaf index {index} out of range for {leaves} leaves")]
    IndexOutOfRange { index: usize, leaves: usize },
}

/// Which side the sibling digest sits on when recombining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleStep {
    pub sibling: Digest,
    pub side: Side,
}

/// Inclusion proof: the path of siblings from the leaf up to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub path: Vec<MerkleStep>,
}

impl Encode for MerkleStep {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MERKLE_STEP, |e| {
            self.sibling.encode_into(e)?;
            e.u64(match self.side {
                Side::Left => 0,
                Side::Right => 1,
            })
        })
    }
}

impl Decode for MerkleStep {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MERKLE_STEP, |d| {
            let sibling = Digest::decode_from(d)?;
            let side = match d.u64()? {
                0 => Side::Left,
                1 => Side::Right,
                other => return Err(DecodeError::UnknownDiscriminant(other)),
            };
            Ok(MerkleStep { sibling, side })
        })
    }
}

impl Encode for MerkleProof {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.node(tag::MERKLE_PROOF, |e| {
            e.u64(self.leaf_index)?;
            e.list(&self.path)
        })
    }
}

impl Decode for MerkleProof {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.node(tag::MERKLE_PROOF, |d| {
            Ok(MerkleProof {
                leaf_index: d.u64()?,
                path: d.list()?,
            })
        })
    }
}

fn leaf_hash(leaf: &[u8]) -> Digest {
    hash(domain::LEAF, leaf)
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(domain::NODE, &[&left.0, &right.0])
}

fn levels(leaves: &[Vec<u8>]) -> Result<Vec<Vec<Digest>>, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::EmptyTree);
    }
    let mut all = vec![leaves.iter().map(|l| leaf_hash(l)).collect::<Vec<_>>()];
    while all.last().unwrap().len() > 1 {
        let prev = all.last().unwrap();
        let mut next = Vec::with_capacity(prev.len().div_ceil(2));
        for pair in prev.chunks(2) {
            let right = pair.get(1).unwrap_or(&pair[0]);
            next.push(node_hash(&pair[0], right));
        }
        all.push(next);
    }
    Ok(all)
}

/// Root over the given leaves.
pub fn merkle_root(leaves: &[Vec<u8>]) -> Result<Digest, MerkleError> {
    Ok(levels(leaves)?.last().unwrap()[0])
}

/// Inclusion proof for the leaf at `index`.
pub fn merkle_proof(leaves: &[Vec<u8>], index: usize) -> Result<MerkleProof, MerkleError> {
    let all = levels(leaves)?;
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange {
            index,
            leaves: leaves.len(),
        });
    }
    let mut path = Vec::new();
    let mut pos = index;
    for level in &all[..all.len() - 1] {
        let (sibling_pos, side) = if pos % 2 == 0 {
            (pos + 1, Side::Right)
        } else {
            (pos - 1, Side::Left)
        };
        // Odd level: the duplicated last node is its own sibling.
        let sibling = *level.get(sibling_pos).unwrap_or(&level[pos]);
        path.push(MerkleStep { sibling, side });
        pos /= 2;
    }
    Ok(MerkleProof {
        leaf_index: index as u64,
        path,
    })
}

/// Check `proof` against `root` for the given leaf bytes.
pub fn merkle_verify(root: &Digest, leaf: &[u8], proof: &MerkleProof) -> bool {
    let mut acc = leaf_hash(leaf);
    for step in &proof.path {
        acc = match step.side {
            Side::Right => node_hash(&acc, &step.sibling),
            Side::Left => node_hash(&step.sibling, &acc),
        };
    }
    acc == *root
}
