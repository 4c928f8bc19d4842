//! Replaying an ordering against a pool snapshot to score it.

use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState, SkipReason, SwapResult};
use crate::amount::{GasAmount, NativeAmount};
use crate::chainsim::tx::{MainnetTx, TxKind};

pub const GAS_EXCHANGE: i64 = 90_000;
pub const GAS_PROVIDE_LIQUIDITY: i64 = 150_000;

pub fn gas_used(kind: &TxKind) -> GasAmount {
    match kind {
        TxKind::Exchange { .. } => GasAmount::from_int(GAS_EXCHANGE),
        TxKind::ProvideLiquidity { .. } => GasAmount::from_int(GAS_PROVIDE_LIQUIDITY),
    }
}

/// Compared as a tuple: miner fees first, then executed volume.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Score {
    pub miner: NativeAmount,
    pub volume: NativeAmount,
}

impl std::ops::AddAssign for Score {
    fn add_assign(&mut self, rhs: Score) {
        self.miner += rhs.miner;
        self.volume += rhs.volume;
    }
}

/// Pool-only replay of one transaction. Wallet balances are not modelled here.
pub fn step(pool: &mut PoolState, tx: &MainnetTx) -> Result<Score, SkipReason> {
    let gas = gas_used(&tx.kind);
    if tx.gas_limit < gas {
        return Err(SkipReason::OutOfGas);
    }
    let volume = match tx.kind {
        TxKind::Exchange { .. } => match amm::execute_swap(pool, tx) {
            SwapResult::Executed { quote, ratio_before } => amm::native_volume(&quote, ratio_before),
            SwapResult::Skipped { reason } => return Err(reason),
        },
        TxKind::ProvideLiquidity { deposit } => {
            if pool.volume() < pool.min_volume_threshold {
                return Err(SkipReason::BelowThreshold);
            }
            let ratio = amm::pool_ratio(pool).map_err(|_| SkipReason::InsufficientLiquidity)?;
            let twin = amm::twin_deposit(deposit, ratio).map_err(|_| SkipReason::InsufficientFunds)?;
            pool.add_liquidity(twin.minted, twin.twin_native);
            deposit
        }
    };
    let miner = gas.cost(tx.gas_price).unwrap_or(NativeAmount::ZERO);
    Ok(Score { miner, volume })
}

pub fn score_ordering(ordered: &[MainnetTx], snapshot: &PoolState) -> Score {
    let mut pool = snapshot.clone();
    let mut total = Score::default();
    for tx in ordered {
        if let Ok(s) = step(&mut pool, tx) {
            total += s;
        }
    }
    total
}
