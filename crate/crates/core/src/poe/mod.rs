//! Proof-of-efficiency: ordering a batch so that the leading bits of the
//! prefix transactions spell out the alien finality hash and the trailing
//! bits spell out the booster key.
//!
//! Bit layout for `t` targets and `b` bits per transaction side: the prefix
//! has `hash_bits·t/b` transactions. Leading bit `j` of prefix transaction `i`
//! carries bit `i·(b/t) + j/t` of target `j mod t`, so with two targets and
//! `b = 2` bit 0 carries the older hash and bit 1 the newer one. Trailing
//! bit `j` carries booster key bit `(i·b + j) mod hash_bits`.

pub mod entropy;
pub mod score;
pub mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::NativeAmount;
use crate::chainsim::tx::MainnetTx;
use crate::hash::{Hash256, HASH_BITS};

pub use entropy::{count_orderings, entropy, EntropyError, EntropyParams};
pub use score::{score_ordering, Score};
pub use search::{brute_force_optimize, dedupe_mempool, optimize_batch};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoeError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("need at least {need} transactions, have {have}")]
    TooFewTransactions { need: usize, have: usize },
    #[error("slot {slot} needs class {class} but none is left")]
    Infeasible { slot: usize, class: SlotClass },
    #[error("brute force limited to {limit} transactions, got {got}")]
    TooLarge { limit: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Local-search move attempts per restart.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Exhaustive search runs when the number of feasible orderings is at most this.
    pub exhaustive_limit: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: 2_000, restarts: 4, seed: 0, exhaustive_limit: 40_320 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoeParams {
    pub hash_bits: usize,
    pub bits_per_tx: usize,
    /// Oldest first. One normally, more while catching up on missed hashes.
    pub targets: Vec<Hash256>,
    /// `None` disables key forging (trailing bits unconstrained).
    pub booster_pubkey: Option<Hash256>,
    pub min_batch: usize,
    pub search: SearchConfig,
}

impl PoeParams {
    pub fn new(target: Hash256, booster_pubkey: Option<Hash256>) -> PoeParams {
        PoeParams {
            hash_bits: HASH_BITS,
            bits_per_tx: 1,
            targets: vec![target],
            booster_pubkey,
            min_batch: 256,
            search: SearchConfig::default(),
        }
    }

    pub fn prefix_len(&self) -> usize {
        self.hash_bits * self.targets.len() / self.bits_per_tx.max(1)
    }

    pub fn validate(&self) -> Result<(), PoeError> {
        let (h, b, t) = (self.hash_bits, self.bits_per_tx, self.targets.len());
        if h == 0 || h > HASH_BITS {
            return Err(PoeError::Params(format!("hash_bits {h} outside 1..=256")));
        }
        if b == 0 || b > 16 {
            return Err(PoeError::Params(format!("bits_per_tx {b} outside 1..=16")));
        }
        if t == 0 || b % t != 0 {
            return Err(PoeError::Params(format!("bits_per_tx {b} not a multiple of target count {t}")));
        }
        if (h * t) % b != 0 {
            return Err(PoeError::Params(format!("hash_bits·targets {} not divisible by bits_per_tx {b}", h * t)));
        }
        Ok(())
    }
}

/// Bit pattern a prefix slot demands: leading bits, and trailing bits when
/// key forging is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotClass {
    pub first: u32,
    pub last: Option<u32>,
}

impl std::fmt::Display for SlotClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.last {
            Some(last) => write!(f, "first={:b} last={:b}", self.first, last),
            None => write!(f, "first={:b}", self.first),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub bits_per_tx: usize,
    pub key_forging: bool,
    pub slots: Vec<SlotClass>,
}

impl Layout {
    pub fn new(params: &PoeParams) -> Result<Layout, PoeError> {
        params.validate()?;
        let (h, b, t) = (params.hash_bits, params.bits_per_tx, params.targets.len());
        let per_target = b / t;
        let slots = (0..params.prefix_len())
            .map(|i| {
                let first = (0..b).fold(0u32, |acc, j| {
                    (acc << 1) | params.targets[j % t].bit(i * per_target + j / t) as u32
                });
                let last = params
                    .booster_pubkey
                    .map(|key| (0..b).fold(0u32, |acc, j| (acc << 1) | key.bit((i * b + j) % h) as u32));
                SlotClass { first, last }
            })
            .collect();
        Ok(Layout { bits_per_tx: b, key_forging: params.booster_pubkey.is_some(), slots })
    }

    pub fn prefix_len(&self) -> usize {
        self.slots.len()
    }

    pub fn class_of(&self, tx: &MainnetTx) -> SlotClass {
        SlotClass {
            first: tx.tx_hash.leading_bits(self.bits_per_tx),
            last: self.key_forging.then(|| tx.tx_hash.trailing_bits(self.bits_per_tx)),
        }
    }

    pub fn satisfied_by(&self, ordered: &[MainnetTx]) -> bool {
        ordered.len() >= self.slots.len() && self.slots.iter().zip(ordered).all(|(slot, tx)| self.class_of(tx) == *slot)
    }
}

/// What a batch ordering spells out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forged {
    /// One per target, bits at and beyond `hash_bits` zero.
    pub alien_hashes: Vec<Hash256>,
    /// Bits at and beyond `hash_bits` zero. First write wins when the key wraps.
    pub booster_key: Hash256,
}

impl Forged {
    /// True when the forged bits equal `targets` and `key` on the first `hash_bits` bits.
    pub fn matches(&self, params: &PoeParams) -> bool {
        let h = params.hash_bits;
        self.alien_hashes.len() == params.targets.len()
            && self.alien_hashes.iter().zip(&params.targets).all(|(a, t)| *a == t.truncated(h))
            && params.booster_pubkey.is_none_or(|k| self.booster_key == k.truncated(h))
    }
}

pub fn reconstruct_forged(ordered: &[MainnetTx], params: &PoeParams) -> Result<Forged, PoeError> {
    params.validate()?;
    let need = params.prefix_len();
    if ordered.len() < need {
        return Err(PoeError::TooFewTransactions { need, have: ordered.len() });
    }
    let (h, b, t) = (params.hash_bits, params.bits_per_tx, params.targets.len());
    let per_target = b / t;
    let mut alien_hashes = vec![Hash256::ZERO; t];
    let mut booster_key = Hash256::ZERO;
    let mut key_written = vec![false; h];
    for (i, tx) in ordered[..need].iter().enumerate() {
        for j in 0..b {
            alien_hashes[j % t].set_bit(i * per_target + j / t, tx.tx_hash.bit(j));
            let k = (i * b + j) % h;
            if !key_written[k] {
                booster_key.set_bit(k, tx.tx_hash.bit(HASH_BITS - b + j));
                key_written[k] = true;
            }
        }
    }
    Ok(Forged { alien_hashes, booster_key })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizedBatch {
    pub ordered_txs: Vec<MainnetTx>,
    pub forged: Forged,
    pub miner_score: NativeAmount,
    pub volume_score: NativeAmount,
}

impl OptimizedBatch {
    pub fn score(&self) -> Score {
        Score { miner: self.miner_score, volume: self.volume_score }
    }
}
