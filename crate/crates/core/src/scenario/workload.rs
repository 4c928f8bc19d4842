//! Synthetic mempools whose transaction hashes are spread evenly over bit
//! classes, so that bit-constrained orderings exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amount::{GasAmount, IntertokenAmount, NativeAmount, Ratio};
use crate::chainsim::tx::{Direction, MainnetTx, TxKind};
use crate::hash::hash256;
use crate::ledger::AccountId;

use super::config::{WorkloadSpec, TRADER_BASE};
use super::ScenarioError;

/// How finely hashes must be spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diversity {
    pub class_bits: usize,
    /// Also spread the trailing bits.
    pub trailing: bool,
    pub min_per_class: usize,
}

impl Diversity {
    pub fn classes(&self) -> usize {
        let bits = self.class_bits * if self.trailing { 2 } else { 1 };
        1 << bits
    }

    fn class_of(&self, tx: &MainnetTx) -> usize {
        let first = tx.tx_hash.leading_bits(self.class_bits) as usize;
        if self.trailing {
            (first << self.class_bits) | tx.tx_hash.trailing_bits(self.class_bits) as usize
        } else {
            first
        }
    }
}

/// Per-block RNG, independent of how many blocks came before.
pub fn block_rng(seed: u64, block: u64, stream: &str) -> ChaCha8Rng {
    let mut material = Vec::with_capacity(16 + stream.len());
    material.extend_from_slice(&seed.to_le_bytes());
    material.extend_from_slice(&block.to_le_bytes());
    material.extend_from_slice(stream.as_bytes());
    ChaCha8Rng::from_seed(*hash256(&material).as_bytes())
}

fn uniform(rng: &mut ChaCha8Rng, lo: NativeAmount, hi: NativeAmount) -> NativeAmount {
    if lo >= hi {
        return lo;
    }
    NativeAmount::from_mantissa(rng.gen_range(lo.mantissa()..=hi.mantissa()))
}

/// Exchange transactions for one block, round-robin over hash classes: the
/// nonce of transaction `i` is ground until its hash lands in class
/// `i mod classes`.
pub fn generate_exchanges(
    spec: &WorkloadSpec,
    seed: u64,
    block: u64,
    ratio: Option<Ratio>,
    diversity: Diversity,
) -> Result<Vec<MainnetTx>, ScenarioError> {
    let n = spec.txs_per_block;
    let Some(ratio) = ratio.filter(|_| n > 0 && spec.traders > 0) else {
        return Ok(Vec::new());
    };
    let classes = diversity.classes();
    if n < classes * diversity.min_per_class {
        return Err(ScenarioError::Workload(format!(
            "{n} transactions cannot fill {classes} classes with {} each",
            diversity.min_per_class
        )));
    }
    let mut rng = block_rng(seed, block, "mempool");
    let gas_limit = GasAmount::from_int(200_000);
    let mut txs = Vec::with_capacity(n);
    for i in 0..n {
        let sender = AccountId(TRADER_BASE + rng.gen_range(0..spec.traders));
        let native = uniform(&mut rng, spec.volume_min, spec.volume_max);
        let direction =
            if rng.gen_bool(spec.buy_share) { Direction::BuyIntertoken } else { Direction::SellIntertoken };
        let volume_in = match direction {
            Direction::BuyIntertoken => native.mantissa(),
            Direction::SellIntertoken => native.to_intertoken(ratio).unwrap_or(IntertokenAmount::ZERO).mantissa(),
        }
        .max(1);
        let band = if rng.gen_bool(spec.tight_share) { Ratio::from_mantissa(1) } else { spec.ratio_band };
        let width = ratio.mul(band).unwrap_or(Ratio::ZERO);
        let ratio_min = Ratio::from_mantissa((ratio.mantissa() - width.mantissa()).max(0));
        let ratio_max = Ratio::from_mantissa(ratio.mantissa() + width.mantissa());
        let gas_price = uniform(&mut rng, spec.gas_price_min, spec.gas_price_max);
        let kind = TxKind::Exchange { direction, volume_in, ratio_min, ratio_max };
        let base = (block << 40) | ((i as u64) << 20);
        let tx = MainnetTx::new(sender, base, gas_price, gas_limit, kind)
            .map_err(|e| ScenarioError::Workload(e.to_string()))?;
        let want = i % classes;
        let tx = (0..1u64 << 20)
            .map(|k| tx.with_nonce(base + k))
            .find(|t| diversity.class_of(t) == want)
            .ok_or_else(|| ScenarioError::Workload(format!("no nonce reaches class {want}")))?;
        txs.push(tx);
    }
    Ok(txs)
}

/// A join transaction paying the top configured gas price.
pub fn join_tx(spec: &WorkloadSpec, block: u64, account: AccountId, deposit: NativeAmount) -> Result<MainnetTx, ScenarioError> {
    MainnetTx::new(
        account,
        (block << 40) | (1 << 39),
        spec.gas_price_max,
        GasAmount::from_int(200_000),
        TxKind::ProvideLiquidity { deposit },
    )
    .map_err(|e| ScenarioError::Workload(e.to_string()))
}

/// A purchase with unbounded ratio limits paying the top configured gas price.
pub fn buy_tx(spec: &WorkloadSpec, block: u64, account: AccountId, native: NativeAmount) -> Result<MainnetTx, ScenarioError> {
    let kind = TxKind::Exchange {
        direction: Direction::BuyIntertoken,
        volume_in: native.mantissa(),
        ratio_min: Ratio::ZERO,
        ratio_max: Ratio::from_mantissa(i128::MAX),
    };
    MainnetTx::new(account, (block << 40) | (1 << 38), spec.gas_price_max, GasAmount::from_int(200_000), kind)
        .map_err(|e| ScenarioError::Workload(e.to_string()))
}
