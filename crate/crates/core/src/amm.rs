//! Constant-product exchange between intertoken and the native coin.
//!
//! Fees are taken outside the curve: the curve only ever sees the net
//! inbound volume, so `intertoken × native` is preserved by every swap up to
//! one unit of rounding on the outbound inventory (always in the pool's
//! favour).

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{AmountError, IntertokenAmount, NativeAmount, Ratio, ShareAmount, SCALE};
use crate::chainsim::tx::{Direction, MainnetTx, TxKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("pool ratio undefined: an inventory is empty")]
    UndefinedRatio,
    #[error("swap volume must be positive")]
    NonPositiveVolume,
    #[error("insufficient liquidity for this swap")]
    InsufficientLiquidity,
    #[error("position inputs must be positive")]
    NonPositiveInput,
    #[error(transparent)]
    Amount(#[from] AmountError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeeMethod {
    Native,
    #[default]
    Intertoken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SupplyLedger {
    pub minted_total: IntertokenAmount,
    pub burned_total: IntertokenAmount,
}

impl SupplyLedger {
    pub fn outstanding(&self) -> IntertokenAmount {
        self.minted_total - self.burned_total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub intertoken_inventory: IntertokenAmount,
    pub native_inventory: NativeAmount,
    pub supply: SupplyLedger,
    pub fee_rate: Ratio,
    pub fee_method: FeeMethod,
    pub min_volume_threshold: NativeAmount,
}

impl Default for PoolState {
    fn default() -> Self {
        PoolState {
            intertoken_inventory: IntertokenAmount::ZERO,
            native_inventory: NativeAmount::ZERO,
            supply: SupplyLedger::default(),
            fee_rate: Ratio::ZERO,
            fee_method: FeeMethod::Intertoken,
            min_volume_threshold: NativeAmount::ZERO,
        }
    }
}

impl PoolState {
    pub fn with_inventories(intertoken: IntertokenAmount, native: NativeAmount) -> PoolState {
        PoolState { intertoken_inventory: intertoken, native_inventory: native, ..PoolState::default() }
    }

    pub fn is_empty(&self) -> bool {
        !self.intertoken_inventory.is_positive() || !self.native_inventory.is_positive()
    }

    /// Native-equivalent depth: native inventory plus intertoken valued at the pool ratio.
    pub fn volume(&self) -> NativeAmount {
        match pool_ratio(self) {
            Ok(r) => self.native_inventory + self.intertoken_inventory.to_native(r).unwrap_or(NativeAmount::ZERO),
            Err(_) => self.native_inventory,
        }
    }

    pub fn add_liquidity(&mut self, intertoken: IntertokenAmount, native: NativeAmount) {
        self.intertoken_inventory += intertoken;
        self.native_inventory += native;
    }

    /// Removes up to the requested amounts; returns what was actually removed.
    pub fn remove_liquidity(
        &mut self,
        intertoken: IntertokenAmount,
        native: NativeAmount,
    ) -> (IntertokenAmount, NativeAmount) {
        let i = intertoken.min(self.intertoken_inventory).clamp_non_negative();
        let n = native.min(self.native_inventory).clamp_non_negative();
        self.intertoken_inventory -= i;
        self.native_inventory -= n;
        (i, n)
    }
}

/// Native per intertoken.
pub fn pool_ratio(pool: &PoolState) -> Result<Ratio, AmmError> {
    if pool.is_empty() {
        return Err(AmmError::UndefinedRatio);
    }
    Ok(pool.native_inventory.ratio_to(pool.intertoken_inventory.cast())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapQuote {
    pub direction: Direction,
    /// Net inbound volume entering the curve (inbound coin mantissa).
    pub volume_in: i128,
    /// Total debited from the trader in the inbound coin (volume plus any inbound fee).
    pub total_in: i128,
    /// Credited to the trader in the outbound coin, after any outbound fee.
    pub volume_out: i128,
    pub fee: i128,
    pub fee_coin: FeeMethod,
    pub new_intertoken: IntertokenAmount,
    pub new_native: NativeAmount,
}

impl SwapQuote {
    pub fn fee_native(&self) -> NativeAmount {
        match self.fee_coin {
            FeeMethod::Native => NativeAmount::from_mantissa(self.fee),
            FeeMethod::Intertoken => NativeAmount::ZERO,
        }
    }

    pub fn fee_intertoken(&self) -> IntertokenAmount {
        match self.fee_coin {
            FeeMethod::Intertoken => IntertokenAmount::from_mantissa(self.fee),
            FeeMethod::Native => IntertokenAmount::ZERO,
        }
    }
}

fn inbound_coin(direction: Direction) -> FeeMethod {
    match direction {
        Direction::BuyIntertoken => FeeMethod::Native,
        Direction::SellIntertoken => FeeMethod::Intertoken,
    }
}

/// Prices a swap without touching the pool.
///
/// The fee is charged in the pool's current fee coin. When that is the
/// inbound coin the trader pays a gross-up `volume·f/(1−f)` on top of the
/// volume; otherwise `out·f` is withheld from the output.
pub fn quote_swap(pool: &PoolState, direction: Direction, volume_in: i128) -> Result<SwapQuote, AmmError> {
    if volume_in <= 0 {
        return Err(AmmError::NonPositiveVolume);
    }
    if pool.is_empty() {
        return Err(AmmError::InsufficientLiquidity);
    }
    let (inv_in, inv_out) = match direction {
        Direction::BuyIntertoken => (pool.native_inventory.mantissa(), pool.intertoken_inventory.mantissa()),
        Direction::SellIntertoken => (pool.intertoken_inventory.mantissa(), pool.native_inventory.mantissa()),
    };
    let new_in = inv_in.checked_add(volume_in).ok_or(AmountError::Overflow)?;
    let new_out = mul_div_ceil(inv_in, inv_out, new_in).ok_or(AmountError::Overflow)?;
    let curve_out = inv_out - new_out;
    if curve_out <= 0 || new_out <= 0 {
        return Err(AmmError::InsufficientLiquidity);
    }

    let f = pool.fee_rate.mantissa();
    let (fee, total_in, volume_out) = if f == 0 {
        (0, volume_in, curve_out)
    } else if pool.fee_method == inbound_coin(direction) {
        let fee = mul_div_floor(volume_in, f, SCALE - f).ok_or(AmountError::Overflow)?;
        (fee, volume_in + fee, curve_out)
    } else {
        let fee = mul_div_floor(curve_out, f, SCALE).ok_or(AmountError::Overflow)?;
        (fee, volume_in, curve_out - fee)
    };

    let (new_intertoken, new_native) = match direction {
        Direction::BuyIntertoken => (new_out, new_in),
        Direction::SellIntertoken => (new_in, new_out),
    };
    Ok(SwapQuote {
        direction,
        volume_in,
        total_in,
        volume_out,
        fee,
        fee_coin: pool.fee_method,
        new_intertoken: IntertokenAmount::from_mantissa(new_intertoken),
        new_native: NativeAmount::from_mantissa(new_native),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    RatioOutOfRange,
    InsufficientLiquidity,
    InsufficientFunds,
    OutOfGas,
    BelowThreshold,
    BlockFull,
    NotAnExchange,
    UnknownProvider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum SwapResult {
    Executed { quote: SwapQuote, ratio_before: Ratio },
    Skipped { reason: SkipReason },
}

/// Checks the exchange's ratio window against the pre-trade ratio and, if
/// it holds, applies the swap to `pool`. Skips leave the pool untouched.
pub fn execute_swap(pool: &mut PoolState, tx: &MainnetTx) -> SwapResult {
    let TxKind::Exchange { direction, volume_in, ratio_min, ratio_max } = tx.kind else {
        return SwapResult::Skipped { reason: SkipReason::NotAnExchange };
    };
    let ratio = match pool_ratio(pool) {
        Ok(r) => r,
        Err(_) => return SwapResult::Skipped { reason: SkipReason::InsufficientLiquidity },
    };
    if ratio < ratio_min || ratio > ratio_max {
        return SwapResult::Skipped { reason: SkipReason::RatioOutOfRange };
    }
    match quote_swap(pool, direction, volume_in) {
        Ok(quote) => {
            apply_quote(pool, &quote);
            SwapResult::Executed { quote, ratio_before: ratio }
        }
        Err(_) => SwapResult::Skipped { reason: SkipReason::InsufficientLiquidity },
    }
}

pub fn apply_quote(pool: &mut PoolState, quote: &SwapQuote) {
    pool.intertoken_inventory = quote.new_intertoken;
    pool.native_inventory = quote.new_native;
}

/// Native-equivalent volume of an executed swap at its pre-trade ratio.
pub fn native_volume(quote: &SwapQuote, ratio_before: Ratio) -> NativeAmount {
    match quote.direction {
        Direction::BuyIntertoken => NativeAmount::from_mantissa(quote.volume_in),
        Direction::SellIntertoken => {
            IntertokenAmount::from_mantissa(quote.volume_in).to_native(ratio_before).unwrap_or(NativeAmount::ZERO)
        }
    }
}

/// True when `(post_in, post_out)` keeps the product of `(pre_in, pre_out)`
/// to within one unit of the outbound inventory:
/// `post_in·(post_out − 1) < pre_in·pre_out ≤ post_in·post_out`.
pub fn product_preserved(pre_in: i128, pre_out: i128, post_in: i128, post_out: i128) -> bool {
    let pre = wide(pre_in) * wide(pre_out);
    let post_hi = wide(post_in) * wide(post_out);
    let post_lo = wide(post_in) * wide(post_out - 1);
    post_lo < pre && pre <= post_hi
}

/// Current holdings of `coins` product units at `ratio`:
/// `(sqrt(C/r), sqrt(C·r))`, each floored to the fixed-point grid.
pub fn position_at_ratio(coins: ShareAmount, ratio: Ratio) -> Result<(IntertokenAmount, NativeAmount), AmmError> {
    if !coins.is_positive() || !ratio.is_positive() {
        return Err(AmmError::NonPositiveInput);
    }
    let intertoken = coins.unscale(ratio)?.sqrt()?.cast();
    let native = coins.scale(ratio)?.sqrt()?.cast();
    Ok((intertoken, native))
}

/// A provider deposit split into collateral and the pool-side twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinDeposit {
    pub collateral: NativeAmount,
    pub twin_native: NativeAmount,
    pub minted: IntertokenAmount,
    pub coins: ShareAmount,
}

/// Half the deposit enters the pool next to `twin/r` freshly minted
/// intertoken; the other half stays outside as collateral.
pub fn twin_deposit(deposit: NativeAmount, ratio: Ratio) -> Result<TwinDeposit, AmmError> {
    if !deposit.is_positive() || !ratio.is_positive() {
        return Err(AmmError::NonPositiveInput);
    }
    let twin_native = NativeAmount::from_mantissa(deposit.mantissa() / 2);
    let minted = twin_native.to_intertoken(ratio)?;
    if !minted.is_positive() {
        return Err(AmmError::NonPositiveInput);
    }
    Ok(TwinDeposit {
        collateral: deposit - twin_native,
        twin_native,
        minted,
        coins: minted.times_native(twin_native)?,
    })
}

fn wide(v: i128) -> BigInt {
    BigInt::from(v)
}

/// `ceil(a·b / c)` for non-negative inputs.
pub(crate) fn mul_div_ceil(a: i128, b: i128, c: i128) -> Option<i128> {
    if c <= 0 {
        return None;
    }
    match a.checked_mul(b) {
        Some(p) => Some((p + c - 1).div_euclid(c)),
        None => {
            let p = wide(a) * wide(b);
            let q: BigInt = (p + wide(c) - 1) / wide(c);
            i128::try_from(q).ok()
        }
    }
}

/// `floor(a·b / c)` for non-negative inputs.
pub(crate) fn mul_div_floor(a: i128, b: i128, c: i128) -> Option<i128> {
    if c <= 0 {
        return None;
    }
    match a.checked_mul(b) {
        Some(p) => Some(p.div_euclid(c)),
        None => i128::try_from(wide(a) * wide(b) / wide(c)).ok(),
    }
}
