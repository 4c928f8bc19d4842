//! Mainnet-side economic state shared by the risk and burn machinery.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState};
use crate::amount::{IntertokenAmount, NativeAmount, Ratio, ShareAmount};
use crate::buffer::LiquidityBuffer;
use crate::events::ProviderId;
use crate::ledger::{AccountId, Wallets};
use crate::risk::{Lifecycle, ProviderPosition};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Market {
    pub pool: PoolState,
    pub buffer: LiquidityBuffer,
    pub wallets: Wallets,
    pub positions: BTreeMap<ProviderId, ProviderPosition>,
    pub(crate) next_provider: u64,
}

impl Market {
    pub fn new(pool: PoolState) -> Market {
        Market { pool, ..Market::default() }
    }

    pub fn ratio(&self) -> Option<Ratio> {
        amm::pool_ratio(&self.pool).ok()
    }

    pub fn position(&self, id: ProviderId) -> Option<&ProviderPosition> {
        self.positions.get(&id)
    }

    /// Positions still backing minted supply or holding pool coins.
    pub fn live_positions(&self) -> impl Iterator<Item = &ProviderPosition> {
        self.positions.values().filter(|p| p.is_live())
    }

    pub fn locked_collateral(&self) -> NativeAmount {
        self.positions.values().map(|p| p.collateral).sum()
    }

    /// Wallets, pool, buffer stack and locked collateral. Constant in a closed run.
    pub fn native_total(&self) -> NativeAmount {
        self.wallets.total_native()
            + self.pool.native_inventory
            + self.buffer.native_stack
            + self.locked_collateral()
    }

    /// Intertoken in circulation excluding escrow held elsewhere, net of
    /// buffer burn debt.
    pub fn intertoken_held(&self) -> IntertokenAmount {
        self.wallets.total_intertoken() + self.pool.intertoken_inventory + self.buffer.intertoken_stack
            - self.buffer.burn_debt
    }

    /// Pool-coin holders for fee payouts.
    pub fn coin_holders(&self) -> Vec<(AccountId, ShareAmount)> {
        self.positions
            .values()
            .filter(|p| matches!(p.lifecycle, Lifecycle::Active | Lifecycle::Completed))
            .map(|p| (p.account, p.interpool_coins))
            .collect()
    }
}
