//! Listen-and-track verification of alien transfers against forged hashes,
//! and the two-party swap built on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{decimal, AlienAmount, NativeAmount};
use crate::chainsim::alien::{AlienTx, Side, SpvProof};
use crate::codec::Encoder;
use crate::hash::Hash256;
use crate::ledger::{AccountId, Wallets};
use crate::sig::{Signature, Verifier};

/// Source of booster-forged alien header hashes, by alien height.
pub trait ForgedHashes {
    fn forged_hash(&self, height: u64) -> Option<Hash256>;
}

impl ForgedHashes for BTreeMap<u64, Hash256> {
    fn forged_hash(&self, height: u64) -> Option<Hash256> {
        self.get(&height).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum ProofRejection {
    #[error("transfer signature does not verify")]
    BadSignature,
    #[error("transfer not sent by the expected party")]
    WrongSender,
    #[error("transfer pays the wrong recipient")]
    WrongRecipient,
    #[error("transfer amount below what is owed")]
    WrongAmount,
    #[error("no forged hash recorded for that alien height")]
    UnknownHeight,
    #[error("proof does not carry the submitted transaction")]
    TxMismatch,
    #[error("side flags disagree with the leaf index")]
    PositionMismatch,
    #[error("Merkle path does not fold to the stated root")]
    PathMismatch,
    #[error("header does not hash to the forged hash")]
    HeaderMismatch,
}

/// Folds the path and compares the header against `forged_hash`.
///
/// The side flags must also spell out `leaf_index`. Without that check a
/// self-paired odd node folds the same way with either flag.
pub fn check_spv(proof: &SpvProof, forged_hash: &Hash256) -> Result<(), ProofRejection> {
    if !sides_match_index(proof) {
        return Err(ProofRejection::PositionMismatch);
    }
    if proof.folded_root() != proof.merkle_root {
        return Err(ProofRejection::PathMismatch);
    }
    if proof.header_hash() != *forged_hash {
        return Err(ProofRejection::HeaderMismatch);
    }
    Ok(())
}

fn sides_match_index(proof: &SpvProof) -> bool {
    let depth = proof.path.len();
    let in_range = depth >= 64 || proof.leaf_index >> depth == 0;
    in_range
        && proof.path.iter().enumerate().all(|(level, step)| {
            let odd = proof.leaf_index >> level & 1 == 1;
            step.side == if odd { Side::Left } else { Side::Right }
        })
}

pub fn verify_spv(proof: &SpvProof, forged_hash: &Hash256) -> bool {
    check_spv(proof, forged_hash).is_ok()
}

/// Full check of an alien transfer: signature by `sender`, payment of at
/// least `amount` to `recipient`, and SPV inclusion under the forged hash.
pub fn verify_transfer(
    raw_tx: &AlienTx,
    proof: &SpvProof,
    sender: &Hash256,
    recipient: &Hash256,
    amount: AlienAmount,
    forged: &impl ForgedHashes,
    verifier: &impl Verifier,
) -> Result<(), ProofRejection> {
    if raw_tx.from_pubkey != *sender {
        return Err(ProofRejection::WrongSender);
    }
    if !raw_tx.verify_signature(verifier) {
        return Err(ProofRejection::BadSignature);
    }
    if raw_tx.to_pubkey != *recipient {
        return Err(ProofRejection::WrongRecipient);
    }
    if raw_tx.amount < amount {
        return Err(ProofRejection::WrongAmount);
    }
    if proof.tx != *raw_tx {
        return Err(ProofRejection::TxMismatch);
    }
    let forged_hash = forged.forged_hash(proof.block_height).ok_or(ProofRejection::UnknownHeight)?;
    check_spv(proof, &forged_hash)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapTerms {
    pub mike_account: AccountId,
    pub alice_account: AccountId,
    pub mike_pubkey_mainnet: Hash256,
    pub alice_pubkey_mainnet: Hash256,
    pub mike_pubkey_alien: Hash256,
    pub alice_pubkey_alien: Hash256,
    /// Native Mike pays.
    #[serde(with = "decimal")]
    pub volume_native: NativeAmount,
    /// Alien coin Alice sends.
    #[serde(with = "decimal")]
    pub volume_alien: AlienAmount,
}

impl SwapTerms {
    /// Canonical bytes both parties sign.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(self.mike_account.0)
            .u64(self.alice_account.0)
            .hash(&self.mike_pubkey_mainnet)
            .hash(&self.alice_pubkey_mainnet)
            .hash(&self.mike_pubkey_alien)
            .hash(&self.alice_pubkey_alien)
            .amount(self.volume_native)
            .amount(self.volume_alien);
        enc.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapState {
    Agreed,
    Locked,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Mike,
    Alice,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwapError {
    #[error("{0:?} signature over the terms does not verify")]
    BadSignature(Party),
    #[error("collateral must be positive")]
    ZeroCollateral,
    #[error("Mike's funds {funds} do not cover the volume {volume}")]
    Underfunded { funds: NativeAmount, volume: NativeAmount },
    #[error("insufficient balance: {0}")]
    InsufficientBalance(String),
    #[error("swap is {0:?}, not locked")]
    NotLocked(SwapState),
    #[error("deadline block {deadline} passed (now {block})")]
    DeadlinePassed { deadline: u64, block: u64 },
    #[error("proof rejected: {0}")]
    Rejected(ProofRejection),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    pub terms: SwapTerms,
    #[serde(with = "decimal")]
    pub mike_locked: NativeAmount,
    #[serde(with = "decimal")]
    pub alice_collateral: NativeAmount,
    pub deadline_block: u64,
    pub state: SwapState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SwapOutcome {
    Completed {
        #[serde(with = "decimal")]
        paid_to_alice: NativeAmount,
        #[serde(with = "decimal")]
        collateral_returned: NativeAmount,
    },
    Failed {
        #[serde(with = "decimal")]
        refunded_to_mike: NativeAmount,
        #[serde(with = "decimal")]
        slashed_to_mike: NativeAmount,
    },
    Unchanged,
}

pub const DEFAULT_SWAP_DEADLINE: u64 = 6;

/// Locks Mike's funds and Alice's collateral after both parties have signed the terms.
#[allow(clippy::too_many_arguments)]
pub fn open_swap(
    terms: SwapTerms,
    mike_sig: &Signature,
    alice_sig: &Signature,
    mike_funds: NativeAmount,
    alice_collateral: NativeAmount,
    deadline_block: u64,
    verifier: &impl Verifier,
    wallets: &mut Wallets,
) -> Result<Swap, SwapError> {
    let payload = terms.signing_payload();
    if !verifier.verify(&terms.mike_pubkey_mainnet, &payload, mike_sig) {
        return Err(SwapError::BadSignature(Party::Mike));
    }
    if !verifier.verify(&terms.alice_pubkey_mainnet, &payload, alice_sig) {
        return Err(SwapError::BadSignature(Party::Alice));
    }
    if !alice_collateral.is_positive() {
        return Err(SwapError::ZeroCollateral);
    }
    if mike_funds < terms.volume_native {
        return Err(SwapError::Underfunded { funds: mike_funds, volume: terms.volume_native });
    }
    if wallets.native(terms.mike_account) < mike_funds {
        return Err(SwapError::InsufficientBalance(format!("{} cannot lock {mike_funds}", terms.mike_account)));
    }
    if wallets.native(terms.alice_account) < alice_collateral {
        return Err(SwapError::InsufficientBalance(format!("{} cannot post {alice_collateral}", terms.alice_account)));
    }
    wallets
        .debit_native(terms.mike_account, mike_funds)
        .map_err(|e| SwapError::InsufficientBalance(e.to_string()))?;
    wallets
        .debit_native(terms.alice_account, alice_collateral)
        .map_err(|e| SwapError::InsufficientBalance(e.to_string()))?;
    Ok(Swap { terms, mike_locked: mike_funds, alice_collateral, deadline_block, state: SwapState::Locked })
}

impl Swap {
    /// Native held in escrow while locked.
    pub fn escrowed(&self) -> NativeAmount {
        match self.state {
            SwapState::Locked => self.mike_locked + self.alice_collateral,
            _ => NativeAmount::ZERO,
        }
    }

    /// Releases Mike's funds to Alice once her alien transfer to Mike is proven.
    pub fn submit_alien_proof(
        &mut self,
        raw_tx: &AlienTx,
        proof: &SpvProof,
        forged: &impl ForgedHashes,
        verifier: &impl Verifier,
        block: u64,
        wallets: &mut Wallets,
    ) -> Result<SwapOutcome, SwapError> {
        if self.state != SwapState::Locked {
            return Err(SwapError::NotLocked(self.state));
        }
        if block > self.deadline_block {
            return Err(SwapError::DeadlinePassed { deadline: self.deadline_block, block });
        }
        verify_transfer(
            raw_tx,
            proof,
            &self.terms.alice_pubkey_alien,
            &self.terms.mike_pubkey_alien,
            self.terms.volume_alien,
            forged,
            verifier,
        )
        .map_err(SwapError::Rejected)?;
        wallets.credit_native(self.terms.alice_account, self.mike_locked + self.alice_collateral);
        self.state = SwapState::Completed;
        Ok(SwapOutcome::Completed { paid_to_alice: self.mike_locked, collateral_returned: self.alice_collateral })
    }

    /// After the deadline: Mike gets his funds back plus Alice's slashed collateral.
    pub fn expire(&mut self, block: u64, wallets: &mut Wallets) -> SwapOutcome {
        if self.state != SwapState::Locked || block <= self.deadline_block {
            return SwapOutcome::Unchanged;
        }
        wallets.credit_native(self.terms.mike_account, self.mike_locked + self.alice_collateral);
        self.state = SwapState::Failed;
        SwapOutcome::Failed { refunded_to_mike: self.mike_locked, slashed_to_mike: self.alice_collateral }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainsim::alien::{make_spv_proof, AlienChain};
    use crate::sig::{KeyPair, KeyRegistry};

    struct Fixture {
        registry: KeyRegistry,
        chain: AlienChain,
        forged: BTreeMap<u64, Hash256>,
        terms: SwapTerms,
        mike: KeyPair,
        alice: KeyPair,
        alice_alien: KeyPair,
        wallets: Wallets,
    }

    fn fixture() -> Fixture {
        let keys: Vec<KeyPair> = ["mike", "alice", "mike-alien", "alice-alien"].iter().map(|l| KeyPair::derive(l)).collect();
        let mut registry = KeyRegistry::new();
        keys.iter().for_each(|k| registry.register(k));
        let mut chain = AlienChain::new();
        chain.fund(keys[3].pubkey, "50".parse().unwrap());
        let mut wallets = Wallets::default();
        wallets.credit_native(AccountId(1), "100".parse().unwrap());
        wallets.credit_native(AccountId(2), "100".parse().unwrap());
        let terms = SwapTerms {
            mike_account: AccountId(1),
            alice_account: AccountId(2),
            mike_pubkey_mainnet: keys[0].pubkey,
            alice_pubkey_mainnet: keys[1].pubkey,
            mike_pubkey_alien: keys[2].pubkey,
            alice_pubkey_alien: keys[3].pubkey,
            volume_native: "25".parse().unwrap(),
            volume_alien: "10".parse().unwrap(),
        };
        Fixture {
            registry,
            chain,
            forged: BTreeMap::new(),
            terms,
            mike: keys[0].clone(),
            alice: keys[1].clone(),
            alice_alien: keys[3].clone(),
            wallets,
        }
    }

    fn open(f: &mut Fixture) -> Swap {
        let payload = f.terms.signing_payload();
        open_swap(
            f.terms.clone(),
            &f.mike.sign(&payload),
            &f.alice.sign(&payload),
            f.terms.volume_native,
            f.terms.volume_native,
            6,
            &f.registry,
            &mut f.wallets,
        )
        .unwrap()
    }

    fn transfer(f: &mut Fixture, to: Hash256, amount: &str) -> (AlienTx, SpvProof) {
        let nonce = f.chain.next_nonce(&f.alice_alien.pubkey);
        let tx = AlienTx::signed(&f.alice_alien, to, amount.parse().unwrap(), nonce);
        let filler = AlienTx::signed(&f.alice_alien, Hash256::ZERO, "1".parse().unwrap(), nonce + 1);
        let (block, rejected) = f.chain.mine_alien_block(vec![tx.clone(), filler], &f.registry);
        assert!(rejected.is_empty());
        let block = block.clone();
        f.forged.insert(block.height, block.header_hash);
        (tx, make_spv_proof(&block, 0).unwrap())
    }

    #[test]
    fn happy_path() {
        let mut f = fixture();
        let mut swap = open(&mut f);
        assert_eq!(f.wallets.native(AccountId(1)), "75".parse().unwrap());
        assert_eq!(f.wallets.native(AccountId(2)), "75".parse().unwrap());
        let to = f.terms.mike_pubkey_alien;
        let (tx, proof) = transfer(&mut f, to, "10");
        let out = swap.submit_alien_proof(&tx, &proof, &f.forged, &f.registry, 3, &mut f.wallets).unwrap();
        assert_eq!(swap.state, SwapState::Completed);
        assert!(matches!(out, SwapOutcome::Completed { .. }));
        assert_eq!(f.wallets.native(AccountId(1)), "75".parse().unwrap());
        assert_eq!(f.wallets.native(AccountId(2)), "125".parse().unwrap());
        assert_eq!(f.chain.balance(&f.terms.mike_pubkey_alien), "10".parse().unwrap());
        assert_eq!(swap.expire(100, &mut f.wallets), SwapOutcome::Unchanged);
    }

    #[test]
    fn timeout_slashes_alice() {
        let mut f = fixture();
        let mut swap = open(&mut f);
        assert_eq!(swap.expire(6, &mut f.wallets), SwapOutcome::Unchanged);
        let out = swap.expire(7, &mut f.wallets);
        assert_eq!(out, SwapOutcome::Failed { refunded_to_mike: "25".parse().unwrap(), slashed_to_mike: "25".parse().unwrap() });
        assert_eq!(f.wallets.native(AccountId(1)), "125".parse().unwrap());
        assert_eq!(f.wallets.native(AccountId(2)), "75".parse().unwrap());
        assert_eq!(swap.state, SwapState::Failed);
    }

    #[test]
    fn open_rejections() {
        let mut f = fixture();
        let payload = f.terms.signing_payload();
        let mike_sig = f.mike.sign(&payload);
        let err = open_swap(f.terms.clone(), &mike_sig, &Hash256::ZERO, f.terms.volume_native, NativeAmount::ONE, 6, &f.registry, &mut f.wallets);
        assert_eq!(err, Err(SwapError::BadSignature(Party::Alice)));
        let alice_sig = f.alice.sign(&payload);
        let err = open_swap(f.terms.clone(), &mike_sig, &alice_sig, f.terms.volume_native, NativeAmount::ZERO, 6, &f.registry, &mut f.wallets);
        assert_eq!(err, Err(SwapError::ZeroCollateral));
        assert_eq!(f.wallets.native(AccountId(1)), "100".parse().unwrap());
    }

    #[test]
    fn proof_rejections() {
        let mut f = fixture();
        let mut swap = open(&mut f);
        let to = f.alice_alien.pubkey;
        let (tx, proof) = transfer(&mut f, to, "10");
        let err = swap.submit_alien_proof(&tx, &proof, &f.forged, &f.registry, 1, &mut f.wallets);
        assert_eq!(err, Err(SwapError::Rejected(ProofRejection::WrongRecipient)));

        let to = f.terms.mike_pubkey_alien;
        let (tx, proof) = transfer(&mut f, to, "9.999999999999");
        let err = swap.submit_alien_proof(&tx, &proof, &f.forged, &f.registry, 1, &mut f.wallets);
        assert_eq!(err, Err(SwapError::Rejected(ProofRejection::WrongAmount)));

        let to = f.terms.mike_pubkey_alien;
        let (tx, proof) = transfer(&mut f, to, "10");
        let err = swap.submit_alien_proof(&tx, &proof, &BTreeMap::new(), &f.registry, 1, &mut f.wallets);
        assert_eq!(err, Err(SwapError::Rejected(ProofRejection::UnknownHeight)));
        let err = swap.submit_alien_proof(&tx, &proof, &f.forged, &f.registry, 7, &mut f.wallets);
        assert!(matches!(err, Err(SwapError::DeadlinePassed { .. })));
        assert_eq!(swap.state, SwapState::Locked);
    }

    #[test]
    fn spv_perturbations() {
        let mut f = fixture();
        let to = f.terms.mike_pubkey_alien;
        let (_, proof) = transfer(&mut f, to, "10");
        let forged = f.forged[&proof.block_height];
        assert!(verify_spv(&proof, &forged));

        let mut p = proof.clone();
        p.path[0].side = match p.path[0].side {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        assert_eq!(check_spv(&p, &forged), Err(ProofRejection::PositionMismatch));
        let mut p = proof.clone();
        p.path[0].sibling.0[0] ^= 1;
        assert_eq!(check_spv(&p, &forged), Err(ProofRejection::PathMismatch));
        let mut p = proof.clone();
        p.block_height ^= 1;
        assert_eq!(check_spv(&p, &forged), Err(ProofRejection::HeaderMismatch));
        let mut p = proof.clone();
        p.prev_hash.0[31] ^= 0x80;
        assert_eq!(check_spv(&p, &forged), Err(ProofRejection::HeaderMismatch));
        let mut p = proof;
        p.tx.nonce ^= 1;
        assert_eq!(check_spv(&p, &forged), Err(ProofRejection::PathMismatch));
    }

    #[test]
    fn single_leaf_proof() {
        let mut f = fixture();
        let tx = AlienTx::signed(&f.alice_alien, Hash256::ZERO, "1".parse().unwrap(), 0);
        let (block, _) = f.chain.mine_alien_block(vec![tx], &f.registry);
        let proof = make_spv_proof(block, 0).unwrap();
        assert!(proof.path.is_empty());
        assert!(verify_spv(&proof, &block.header_hash));
    }

    #[test]
    fn self_paired_node_needs_the_right_flag() {
        let keys: Vec<KeyPair> = (0..3).map(|i| KeyPair::derive(&format!("k{i}"))).collect();
        let mut registry = KeyRegistry::new();
        let mut chain = AlienChain::new();
        for k in &keys {
            registry.register(k);
            chain.fund(k.pubkey, "5".parse().unwrap());
        }
        let txs = keys.iter().map(|k| AlienTx::signed(k, keys[0].pubkey, "1".parse().unwrap(), 0)).collect();
        let (block, _) = chain.mine_alien_block(txs, &registry);
        let forged = block.header_hash;
        // Leaf 2 of 3 is paired with itself at the bottom level.
        let mut proof = make_spv_proof(block, 2).unwrap();
        assert_eq!(proof.path[0].sibling, proof.tx.leaf_hash());
        assert!(verify_spv(&proof, &forged));
        proof.path[0].side = Side::Left;
        assert_eq!(proof.folded_root(), proof.merkle_root);
        assert_eq!(check_spv(&proof, &forged), Err(ProofRejection::PositionMismatch));
        let mut moved = make_spv_proof(block, 2).unwrap();
        moved.leaf_index = 6;
        assert_eq!(check_spv(&moved, &forged), Err(ProofRejection::PositionMismatch));
    }
}
