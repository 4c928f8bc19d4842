//! Browser bindings. Every export takes decimal strings and returns a JSON
//! string; the plain `*_json` functions carry the logic so they can be
//! tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use interpool::amm::{pool_ratio, quote_swap, FeeMethod, PoolState};
use interpool::amount::decimal::Decimal;
use interpool::amount::{IntertokenAmount, NativeAmount, Ratio};
use interpool::chainsim::tx::Direction;
use interpool::hash::Hash256;
use interpool::ledger::AccountId;
use interpool::market::Market;
use interpool::poe::{count_orderings, entropy, EntropyParams};
use interpool::risk::{join_interpool, risk_report, JoinRequest, ProviderClass, RiskParams};

fn parse<T: std::str::FromStr>(what: &str, text: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    text.trim().parse().map_err(|e| format!("{what}: {e}"))
}

/// log2 Ω for hash_bits = 0, step, 2·step, … up to `max_hash_bits`.
/// Invalid combinations are reported as null.
pub fn entropy_curve_json(n: u32, locked_digits: u32, max_hash_bits: u32, step: u32) -> Result<String, String> {
    if step == 0 {
        return Err("step must be positive".into());
    }
    let rows: Vec<Value> = (0..=max_hash_bits)
        .step_by(step as usize)
        .map(|h| {
            let p = EntropyParams::new(n.into(), locked_digits, h.into());
            let bits = entropy(&p).ok();
            let exact = if n <= 64 { count_orderings(&p).ok().map(|c| c.to_string()) } else { None };
            json!({ "hash_bits": h, "entropy_bits": bits, "orderings": exact })
        })
        .collect();
    Ok(Value::Array(rows).to_string())
}

/// One provider joins an empty pool at `join_ratio`; the pool is then moved
/// to `ratio` and the provider's exposure reported.
pub fn risk_at_ratio_json(deposit: &str, join_ratio: &str, ratio: &str) -> Result<String, String> {
    let deposit: NativeAmount = parse("deposit", deposit)?;
    let join_ratio: Ratio = parse("join ratio", join_ratio)?;
    let ratio: Ratio = parse("ratio", ratio)?;
    if !ratio.is_positive() {
        return Err("ratio must be positive".into());
    }
    let account = AccountId(1);
    let mut market = Market::new(PoolState::default());
    market.wallets.credit_native(account, deposit);
    let request = JoinRequest {
        account,
        deposit,
        class: ProviderClass::Regular,
        mainnet_pubkey: Hash256::ZERO,
        alien_pubkey: Hash256::ZERO,
    };
    let id = join_interpool(&mut market, &request, 0, Some(join_ratio)).map_err(|e| e.to_string())?;
    let report = risk_report(&market.positions[&id], ratio, &RiskParams::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Quote for a swap against a pool, without executing it.
pub fn swap_quote_json(
    pool_intertoken: &str,
    pool_native: &str,
    fee_rate: &str,
    fee_in_native: bool,
    buy: bool,
    volume_in: &str,
) -> Result<String, String> {
    let mut pool = PoolState::with_inventories(parse("pool intertoken", pool_intertoken)?, parse("pool native", pool_native)?);
    pool.fee_rate = parse("fee rate", fee_rate)?;
    pool.fee_method = if fee_in_native { FeeMethod::Native } else { FeeMethod::Intertoken };
    let (direction, volume) = if buy {
        (Direction::BuyIntertoken, parse::<NativeAmount>("volume", volume_in)?.mantissa())
    } else {
        (Direction::SellIntertoken, parse::<IntertokenAmount>("volume", volume_in)?.mantissa())
    };
    let before = pool_ratio(&pool).map_err(|e| e.to_string())?;
    let q = quote_swap(&pool, direction, volume).map_err(|e| e.to_string())?;
    let after = pool_ratio(&PoolState::with_inventories(q.new_intertoken, q.new_native)).map_err(|e| e.to_string())?;
    let (total_in, volume_out) = if buy {
        (NativeAmount::from_mantissa(q.total_in).to_decimal(), IntertokenAmount::from_mantissa(q.volume_out).to_decimal())
    } else {
        (IntertokenAmount::from_mantissa(q.total_in).to_decimal(), NativeAmount::from_mantissa(q.volume_out).to_decimal())
    };
    Ok(json!({
        "ratio_before": before.to_decimal(),
        "ratio_after": after.to_decimal(),
        "total_in": total_in,
        "volume_out": volume_out,
        "fee_native": q.fee_native().to_decimal(),
        "fee_intertoken": q.fee_intertoken().to_decimal(),
        "pool_intertoken": q.new_intertoken.to_decimal(),
        "pool_native": q.new_native.to_decimal(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn entropy_curve(n: u32, locked_digits: u32, max_hash_bits: u32, step: u32) -> Result<String, JsError> {
    entropy_curve_json(n, locked_digits, max_hash_bits, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn risk_at_ratio(deposit: &str, join_ratio: &str, ratio: &str) -> Result<String, JsError> {
    risk_at_ratio_json(deposit, join_ratio, ratio).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn swap_quote(
    pool_intertoken: &str,
    pool_native: &str,
    fee_rate: &str,
    fee_in_native: bool,
    buy: bool,
    volume_in: &str,
) -> Result<String, JsError> {
    swap_quote_json(pool_intertoken, pool_native, fee_rate, fee_in_native, buy, volume_in).map_err(|e| JsError::new(&e))
}
