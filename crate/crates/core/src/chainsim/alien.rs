//! The alien chain: signed transfers, Merkle trees, SPV proofs and finality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::AlienAmount;
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hash::{hash256, hash_concat, Hash256};
use crate::sig::{KeyPair, Verifier};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlienTx {
    pub from_pubkey: Hash256,
    pub to_pubkey: Hash256,
    pub amount: AlienAmount,
    pub nonce: u64,
    pub signature: Hash256,
}

impl AlienTx {
    /// Builds and signs a transfer.
    pub fn signed(from: &KeyPair, to_pubkey: Hash256, amount: AlienAmount, nonce: u64) -> AlienTx {
        let mut tx = AlienTx { from_pubkey: from.pubkey, to_pubkey, amount, nonce, signature: Hash256::ZERO };
        tx.signature = from.sign(&tx.signing_payload());
        tx
    }

    /// Canonical bytes of every field except the signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.hash(&self.from_pubkey).hash(&self.to_pubkey).amount(self.amount).u64(self.nonce);
        enc.finish()
    }

    pub fn verify_signature(&self, verifier: &impl Verifier) -> bool {
        verifier.verify(&self.from_pubkey, &self.signing_payload(), &self.signature)
    }

    /// Merkle leaf: hash of the full canonical serialization.
    pub fn leaf_hash(&self) -> Hash256 {
        hash256(&self.to_canonical())
    }
}

impl Canonical for AlienTx {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.from_pubkey).hash(&self.to_pubkey).amount(self.amount).u64(self.nonce).hash(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(AlienTx {
            from_pubkey: dec.hash()?,
            to_pubkey: dec.hash()?,
            amount: dec.amount()?,
            nonce: dec.u64()?,
            signature: dec.hash()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("cannot build a Merkle root from zero leaves")]
    EmptyTree,
    #[error("leaf index {index} out of range for {count} transactions")]
    LeafOutOfRange { index: usize, count: usize },
    #[error("chain height {height} has not reached finality depth {depth}")]
    NotYetFinal { height: u64, depth: u64 },
    #[error("no alien block at height {0}")]
    UnknownHeight(u64),
}

/// Pairwise SHA-256 tree; an odd node at any level is paired with itself.
pub fn build_merkle_root(leaves: &[Hash256]) -> Result<Hash256, ChainError> {
    if leaves.is_empty() {
        return Err(ChainError::EmptyTree);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

fn next_level(level: &[Hash256]) -> Vec<Hash256> {
    level
        .chunks(2)
        .map(|pair| {
            let right = pair.get(1).unwrap_or(&pair[0]);
            hash_concat(&[&pair[0].0, &right.0])
        })
        .collect()
}

/// Header hash: `hash256(prev_hash ‖ merkle_root ‖ height)`, height as big-endian u64.
pub fn header_hash(prev_hash: &Hash256, merkle_root: &Hash256, height: u64) -> Hash256 {
    hash_concat(&[&prev_hash.0, &merkle_root.0, &height.to_be_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub sibling: Hash256,
    /// Which side the sibling sits on.
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpvProof {
    pub tx: AlienTx,
    pub leaf_index: u64,
    pub path: Vec<PathStep>,
    pub block_height: u64,
    pub prev_hash: Hash256,
    pub merkle_root: Hash256,
}

impl SpvProof {
    /// Folds the leaf hash up the path.
    pub fn folded_root(&self) -> Hash256 {
        self.path.iter().fold(self.tx.leaf_hash(), |acc, step| match step.side {
            Side::Right => hash_concat(&[&acc.0, &step.sibling.0]),
            Side::Left => hash_concat(&[&step.sibling.0, &acc.0]),
        })
    }

    pub fn header_hash(&self) -> Hash256 {
        header_hash(&self.prev_hash, &self.merkle_root, self.block_height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlienBlock {
    pub height: u64,
    pub prev_hash: Hash256,
    pub merkle_root: Hash256,
    pub header_hash: Hash256,
    pub txs: Vec<AlienTx>,
}

impl AlienBlock {
    fn assemble(height: u64, prev_hash: Hash256, txs: Vec<AlienTx>) -> AlienBlock {
        let merkle_root = build_merkle_root(&Self::leaves_of(&txs)).expect("leaves never empty");
        AlienBlock { height, prev_hash, merkle_root, header_hash: header_hash(&prev_hash, &merkle_root, height), txs }
    }

    /// Leaf hashes; an empty block has a single all-zero leaf.
    fn leaves_of(txs: &[AlienTx]) -> Vec<Hash256> {
        if txs.is_empty() {
            vec![Hash256::ZERO]
        } else {
            txs.iter().map(AlienTx::leaf_hash).collect()
        }
    }

    pub fn leaves(&self) -> Vec<Hash256> {
        Self::leaves_of(&self.txs)
    }

    /// Recomputes root and header from the raw transactions.
    pub fn is_consistent(&self) -> bool {
        build_merkle_root(&self.leaves()).ok() == Some(self.merkle_root)
            && header_hash(&self.prev_hash, &self.merkle_root, self.height) == self.header_hash
    }
}

pub fn make_spv_proof(block: &AlienBlock, leaf_index: usize) -> Result<SpvProof, ChainError> {
    if leaf_index >= block.txs.len() {
        return Err(ChainError::LeafOutOfRange { index: leaf_index, count: block.txs.len() });
    }
    let mut path = Vec::new();
    let mut level = block.leaves();
    let mut index = leaf_index;
    while level.len() > 1 {
        let sibling_index = index ^ 1;
        let step = if index.is_multiple_of(2) {
            PathStep { sibling: *level.get(sibling_index).unwrap_or(&level[index]), side: Side::Right }
        } else {
            PathStep { sibling: level[sibling_index], side: Side::Left }
        };
        path.push(step);
        level = next_level(&level);
        index /= 2;
    }
    Ok(SpvProof {
        tx: block.txs[leaf_index].clone(),
        leaf_index: leaf_index as u64,
        path,
        block_height: block.height,
        prev_hash: block.prev_hash,
        merkle_root: block.merkle_root,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlienChainParams {
    pub finality_depth: u64,
    pub blocks_per_mainnet_block: u64,
}

impl Default for AlienChainParams {
    fn default() -> Self {
        AlienChainParams { finality_depth: 6, blocks_per_mainnet_block: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadSignature,
    ReplayedNonce { last: u64 },
    InsufficientFunds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub tx: AlienTx,
    pub reason: RejectReason,
}

/// Append-only alien chain with no forks. Height 0 is the genesis block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlienChain {
    blocks: Vec<AlienBlock>,
    last_nonce: BTreeMap<Hash256, u64>,
    balances: BTreeMap<Hash256, AlienAmount>,
}

impl Default for AlienChain {
    fn default() -> Self {
        Self::new()
    }
}

impl AlienChain {
    pub fn new() -> AlienChain {
        AlienChain {
            blocks: vec![AlienBlock::assemble(0, Hash256::ZERO, Vec::new())],
            last_nonce: BTreeMap::new(),
            balances: BTreeMap::new(),
        }
    }

    /// Genesis allocation.
    pub fn fund(&mut self, pubkey: Hash256, amount: AlienAmount) {
        *self.balances.entry(pubkey).or_default() += amount;
    }

    pub fn balance(&self, pubkey: &Hash256) -> AlienAmount {
        self.balances.get(pubkey).copied().unwrap_or_default()
    }

    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &AlienBlock {
        self.blocks.last().expect("genesis always present")
    }

    pub fn block(&self, height: u64) -> Option<&AlienBlock> {
        self.blocks.get(height as usize)
    }

    pub fn blocks(&self) -> &[AlienBlock] {
        &self.blocks
    }

    pub fn next_nonce(&self, pubkey: &Hash256) -> u64 {
        self.last_nonce.get(pubkey).map_or(0, |n| n + 1)
    }

    /// Mines one block from `pending`, keeping valid transactions in order.
    pub fn mine_alien_block(&mut self, pending: Vec<AlienTx>, verifier: &impl Verifier) -> (&AlienBlock, Vec<Rejection>) {
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for tx in pending {
            let reason = if !tx.verify_signature(verifier) {
                Some(RejectReason::BadSignature)
            } else if let Some(&last) = self.last_nonce.get(&tx.from_pubkey).filter(|&&last| tx.nonce <= last) {
                Some(RejectReason::ReplayedNonce { last })
            } else if self.balance(&tx.from_pubkey) < tx.amount || tx.amount.is_negative() {
                Some(RejectReason::InsufficientFunds)
            } else {
                None
            };
            match reason {
                Some(reason) => rejected.push(Rejection { tx, reason }),
                None => {
                    self.last_nonce.insert(tx.from_pubkey, tx.nonce);
                    *self.balances.entry(tx.from_pubkey).or_default() -= tx.amount;
                    *self.balances.entry(tx.to_pubkey).or_default() += tx.amount;
                    accepted.push(tx);
                }
            }
        }
        let height = self.tip_height() + 1;
        let block = AlienBlock::assemble(height, self.tip().header_hash, accepted);
        self.blocks.push(block);
        (self.tip(), rejected)
    }

    /// Header hash of the block `finality_depth` below the tip.
    pub fn finality_hash(&self, params: &AlienChainParams) -> Result<Hash256, ChainError> {
        let height = self.final_height(params)?;
        Ok(self.blocks[height as usize].header_hash)
    }

    pub fn final_height(&self, params: &AlienChainParams) -> Result<u64, ChainError> {
        self.tip_height()
            .checked_sub(params.finality_depth)
            .ok_or(ChainError::NotYetFinal { height: self.tip_height(), depth: params.finality_depth })
    }

    /// Locates a transaction by leaf hash.
    pub fn find_tx(&self, leaf: &Hash256) -> Option<(u64, usize)> {
        self.blocks.iter().find_map(|b| b.txs.iter().position(|t| t.leaf_hash() == *leaf).map(|i| (b.height, i)))
    }

    /// Every block links to its predecessor and recomputes its own root and header.
    pub fn verify_linkage(&self) -> bool {
        self.blocks.iter().enumerate().all(|(i, b)| {
            b.height == i as u64
                && b.is_consistent()
                && (i == 0 || b.prev_hash == self.blocks[i - 1].header_hash)
        })
    }
}
