//! The liquidity buffer: native and intertoken stacks kept outside the
//! curve for burns, payouts and volatility support.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::amm::{self, FeeMethod, PoolState, SupplyLedger};
use crate::amount::{decimal, IntertokenAmount, NativeAmount, Ratio, ShareAmount, SCALE};
use crate::ledger::AccountId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccrualSource {
    Fee,
    Penalty,
    CollateralSlash,
    Settlement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeePolicy {
    #[serde(with = "decimal")]
    pub fee_min: Ratio,
    #[serde(with = "decimal")]
    pub fee_max: Ratio,
    #[serde(with = "decimal")]
    pub rate: Ratio,
    /// Native-equivalent buffer level the controller steers toward.
    #[serde(with = "decimal")]
    pub target_liquidity: NativeAmount,
    #[serde(with = "decimal")]
    pub step: Ratio,
}

impl Default for FeePolicy {
    fn default() -> Self {
        FeePolicy {
            fee_min: Ratio::from_mantissa(500_000_000),
            fee_max: Ratio::from_mantissa(30_000_000_000),
            rate: Ratio::from_mantissa(3_000_000_000),
            target_liquidity: NativeAmount::from_int(1_000),
            step: Ratio::from_mantissa(100_000_000),
        }
    }
}

impl FeePolicy {
    /// Placeholder controller: raise the rate one step while the buffer is
    /// below target, lower it otherwise, always within [fee_min, fee_max].
    pub fn recalibrate(&mut self, buffer_level: NativeAmount) -> Ratio {
        let stepped = if buffer_level < self.target_liquidity {
            Ratio::from_mantissa(self.rate.mantissa().saturating_add(self.step.mantissa()))
        } else {
            Ratio::from_mantissa(self.rate.mantissa().saturating_sub(self.step.mantissa()))
        };
        self.rate = stepped.max(self.fee_min).min(self.fee_max);
        self.rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferParams {
    #[serde(with = "decimal")]
    pub native_threshold: NativeAmount,
    #[serde(with = "decimal")]
    pub intertoken_threshold: IntertokenAmount,
    #[serde(with = "decimal")]
    pub booster_rate: Ratio,
    pub provider_epoch: u64,
    /// Share of the native stack paid out at each epoch.
    #[serde(with = "decimal")]
    pub payout_fraction: Ratio,
    pub volatility_window: usize,
    /// Variance of ln(ratio) above which the buffer deploys.
    pub volatility_threshold: f64,
    #[serde(with = "decimal")]
    pub deploy_fraction: Ratio,
}

impl Default for BufferParams {
    fn default() -> Self {
        BufferParams {
            native_threshold: NativeAmount::from_int(10),
            intertoken_threshold: IntertokenAmount::from_int(4),
            booster_rate: Ratio::from_mantissa(1_000_000_000),
            provider_epoch: 16,
            payout_fraction: Ratio::ONE,
            volatility_window: 16,
            volatility_threshold: 0.05,
            deploy_fraction: Ratio::from_mantissa(100_000_000_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub to: AccountId,
    pub amount: IntertokenAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnSettlement {
    pub burned: IntertokenAmount,
    pub from_stack: IntertokenAmount,
    pub new_debt: IntertokenAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoosterPayment {
    Paid { amount: IntertokenAmount },
    Deferred { amount: IntertokenAmount },
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub intertoken: IntertokenAmount,
    pub native: NativeAmount,
}

/// Report-facing view of the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferSnapshot {
    #[serde(with = "decimal")]
    pub native_stack: NativeAmount,
    #[serde(with = "decimal")]
    pub intertoken_stack: IntertokenAmount,
    #[serde(with = "decimal")]
    pub burn_debt: IntertokenAmount,
    pub fee_method: FeeMethod,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidityBuffer {
    pub native_stack: NativeAmount,
    pub intertoken_stack: IntertokenAmount,
    pub burn_debt: IntertokenAmount,
    pub fee_method: FeeMethod,
    /// Booster payments waiting for the intertoken stack, oldest first.
    pub deferred: VecDeque<Payout>,
}

impl LiquidityBuffer {
    pub fn snapshot(&self) -> BufferSnapshot {
        BufferSnapshot {
            native_stack: self.native_stack,
            intertoken_stack: self.intertoken_stack,
            burn_debt: self.burn_debt,
            fee_method: self.fee_method,
        }
    }

    pub fn accrue_native(&mut self, amount: NativeAmount, _source: AccrualSource) {
        self.native_stack += amount.clamp_non_negative();
    }

    /// Repays burn debt first, then any deferred booster payments that now
    /// fit; returns the payments released.
    pub fn accrue_intertoken(&mut self, amount: IntertokenAmount, _source: AccrualSource) -> Vec<Payout> {
        let amount = amount.clamp_non_negative();
        let repay = amount.min(self.burn_debt);
        self.burn_debt -= repay;
        self.intertoken_stack += amount - repay;
        self.release_deferred()
    }

    fn release_deferred(&mut self) -> Vec<Payout> {
        let mut released = Vec::new();
        if self.burn_debt.is_positive() {
            return released;
        }
        while let Some(p) = self.deferred.front() {
            if p.amount > self.intertoken_stack {
                break;
            }
            self.intertoken_stack -= p.amount;
            released.push(*p);
            self.deferred.pop_front();
        }
        released
    }

    /// Adds `risky_native` to the native stack and burns `risky_intertoken`
    /// from the intertoken stack; any shortfall becomes burn debt. The supply
    /// ledger records the full burn.
    pub fn settle_burn(
        &mut self,
        risky_native: NativeAmount,
        risky_intertoken: IntertokenAmount,
        supply: &mut SupplyLedger,
    ) -> BurnSettlement {
        self.native_stack += risky_native.clamp_non_negative();
        let burned = risky_intertoken.clamp_non_negative();
        let from_stack = burned.min(self.intertoken_stack);
        self.intertoken_stack -= from_stack;
        let new_debt = burned - from_stack;
        self.burn_debt += new_debt;
        supply.burned_total += burned;
        BurnSettlement { burned, from_stack, new_debt }
    }

    /// Burns intertokens the caller already holds (e.g. escrow), outside the stack.
    pub fn burn_escrow(&mut self, amount: IntertokenAmount, supply: &mut SupplyLedger) {
        supply.burned_total += amount.clamp_non_negative();
    }

    /// `rate · volume` intertoken, paid now if the stack allows and no debt
    /// or earlier deferral is outstanding, otherwise queued.
    pub fn pay_booster(&mut self, booster: AccountId, volume: NativeAmount, rate: Ratio) -> BoosterPayment {
        let amount: IntertokenAmount = volume.scale(rate).unwrap_or_default().cast();
        if !amount.is_positive() {
            return BoosterPayment::Nothing;
        }
        if self.burn_debt.is_zero() && self.deferred.is_empty() && amount <= self.intertoken_stack {
            self.intertoken_stack -= amount;
            BoosterPayment::Paid { amount }
        } else {
            self.deferred.push_back(Payout { to: booster, amount });
            BoosterPayment::Deferred { amount }
        }
    }

    /// Splits `fraction` of the native stack pro rata by interpool coins.
    /// Floors each share and hands the remainder to the largest holder, so the
    /// payments sum to the distributable amount exactly.
    pub fn pay_providers(&mut self, holders: &[(AccountId, ShareAmount)], fraction: Ratio) -> Vec<(AccountId, NativeAmount)> {
        let distributable = self.native_stack.scale(fraction).unwrap_or_default().min(self.native_stack);
        let total: i128 = holders.iter().map(|(_, c)| c.mantissa().max(0)).sum();
        if !distributable.is_positive() || total <= 0 {
            return Vec::new();
        }
        let mut payments: Vec<(AccountId, NativeAmount)> = holders
            .iter()
            .map(|(id, c)| {
                let share = amm::mul_div_floor(distributable.mantissa(), c.mantissa().max(0), total).unwrap_or(0);
                (*id, NativeAmount::from_mantissa(share))
            })
            .collect();
        let paid: NativeAmount = payments.iter().map(|(_, a)| *a).sum();
        let largest = holders
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.1.cmp(&b.1).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        payments[largest].1 += distributable - paid;
        self.native_stack -= distributable;
        payments.retain(|(_, a)| a.is_positive());
        payments
    }

    /// Intertoken when its stack is low, native when only the native stack
    /// is low, unchanged when both are healthy.
    pub fn switch_fee_method(&mut self, params: &BufferParams) -> FeeMethod {
        let it_low = self.intertoken_stack < params.intertoken_threshold;
        let native_low = self.native_stack < params.native_threshold;
        self.fee_method = match (it_low, native_low) {
            (true, _) => FeeMethod::Intertoken,
            (false, true) => FeeMethod::Native,
            (false, false) => self.fee_method,
        };
        self.fee_method
    }

    /// Native-equivalent level of both stacks at `ratio`, net of debt.
    pub fn level(&self, ratio: Ratio) -> NativeAmount {
        let it = (self.intertoken_stack - self.burn_debt).to_native(ratio).unwrap_or_default();
        self.native_stack + it
    }

    /// Moves a fraction of both stacks into the pool without moving the
    /// fixed-point pool ratio. Returns `None` when nothing can be added.
    pub fn deploy_on_volatility(
        &mut self,
        pool: &mut PoolState,
        volatility: f64,
        params: &BufferParams,
    ) -> Option<Deployment> {
        if volatility <= params.volatility_threshold || pool.is_empty() {
            return None;
        }
        let ratio = amm::pool_ratio(pool).ok()?.mantissa();
        let i = pool.intertoken_inventory.mantissa();
        let n = pool.native_inventory.mantissa();
        if i < SCALE {
            return None;
        }
        let budget_i = self.intertoken_stack.scale(params.deploy_fraction).ok()?.mantissa();
        let budget_n = self.native_stack.scale(params.deploy_fraction).ok()?.mantissa();
        // Native needed so that floor((n + dn)·S / (i + di)) stays at `ratio`.
        let needed = |di: i128| amm::mul_div_ceil(ratio, i + di, SCALE).map(|v| v - n);
        let mut di = budget_i;
        let mut dn = needed(di)?;
        if dn > budget_n {
            di = amm::mul_div_floor(n + budget_n, SCALE, ratio)? - i;
            di = di.min(budget_i);
            dn = needed(di)?;
        }
        if di <= 0 || dn < 0 || dn > budget_n {
            return None;
        }
        let deployment = Deployment {
            intertoken: IntertokenAmount::from_mantissa(di),
            native: NativeAmount::from_mantissa(dn),
        };
        pool.add_liquidity(deployment.intertoken, deployment.native);
        debug_assert_eq!(amm::pool_ratio(pool).ok().map(|r| r.mantissa()), Some(ratio));
        self.intertoken_stack -= deployment.intertoken;
        self.native_stack -= deployment.native;
        Some(deployment)
    }
}

/// Sliding window of pool ratios; volatility is the variance of ln(ratio).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VolatilityWindow {
    capacity: usize,
    ratios: VecDeque<f64>,
}

impl VolatilityWindow {
    pub fn new(capacity: usize) -> VolatilityWindow {
        VolatilityWindow { capacity: capacity.max(2), ratios: VecDeque::new() }
    }

    pub fn push(&mut self, ratio: Ratio) {
        if ratio.is_positive() {
            if self.ratios.len() == self.capacity {
                self.ratios.pop_front();
            }
            self.ratios.push_back(ratio.to_f64().ln());
        }
    }

    pub fn variance(&self) -> f64 {
        let len = self.ratios.len();
        if len < 2 {
            return 0.0;
        }
        let mean = self.ratios.iter().sum::<f64>() / len as f64;
        self.ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64
    }
}
