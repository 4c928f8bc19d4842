use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::amount::{decimal, AlienAmount, IntertokenAmount, NativeAmount, Ratio};
use crate::buffer::{BufferParams, FeePolicy};
use crate::burncycle::BurnParams;
use crate::chainsim::alien::AlienChainParams;
use crate::chainsim::world::{AgentPolicy, PoeConfig, WorldParams};
use crate::ledger::AccountId;
use crate::risk::RiskParams;

use super::ScenarioError;

pub const SCHEMA_VERSION: u32 = 1;

/// Trader `i` is account `TRADER_BASE + i`.
pub const TRADER_BASE: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub blocks: u64,
    #[serde(default)]
    pub chain: AlienChainParams,
    #[serde(default)]
    pub poe: PoeConfig,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default)]
    pub fees: FeePolicy,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub burn: BurnParams,
    #[serde(default)]
    pub buffer: BufferParams,
    #[serde(default)]
    pub agents: AgentConfig,
    #[serde(default)]
    pub workload: WorkloadSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub auto_inject: bool,
    pub negligent: BTreeSet<u64>,
    pub full_providers: BTreeSet<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Inventories present at genesis, owned by no provider.
    pub genesis: Option<Inventories>,
    pub bootstrap: Vec<Deposit>,
    #[serde(with = "decimal::option")]
    pub bootstrap_ratio: Option<Ratio>,
    #[serde(with = "decimal")]
    pub min_volume_threshold: NativeAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inventories {
    #[serde(with = "decimal")]
    pub intertoken: IntertokenAmount,
    #[serde(with = "decimal")]
    pub native: NativeAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deposit {
    pub account: u64,
    #[serde(with = "decimal")]
    pub deposit: NativeAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Funding {
    pub account: u64,
    #[serde(default, with = "decimal")]
    pub native: NativeAmount,
    #[serde(default, with = "decimal")]
    pub alien: AlienAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheduled<T> {
    pub block: u64,
    #[serde(flatten)]
    pub what: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountAmount {
    pub account: u64,
    #[serde(with = "decimal")]
    pub amount: NativeAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountOnly {
    pub account: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyChange {
    pub account: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockTarget {
    #[serde(with = "decimal")]
    pub ratio: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub traders: u64,
    #[serde(with = "decimal")]
    pub trader_native: NativeAmount,
    #[serde(with = "decimal")]
    pub trader_intertoken: IntertokenAmount,
    /// Exchange transactions offered per block.
    pub txs_per_block: usize,
    /// Probability that an exchange buys intertoken.
    pub buy_share: f64,
    #[serde(with = "decimal")]
    pub volume_min: NativeAmount,
    #[serde(with = "decimal")]
    pub volume_max: NativeAmount,
    /// Relative half-width of the ratio bounds around the current ratio.
    #[serde(with = "decimal")]
    pub ratio_band: Ratio,
    /// Probability of a bound too tight to survive earlier trades.
    pub tight_share: f64,
    #[serde(with = "decimal")]
    pub gas_price_min: NativeAmount,
    #[serde(with = "decimal")]
    pub gas_price_max: NativeAmount,
    /// Leading (and, with key forging, trailing) bits the generator spreads
    /// hashes over.
    pub class_bits: usize,
    /// Each class must receive at least this many transactions.
    pub min_per_class: usize,
    #[serde(with = "decimal")]
    pub shock_native: NativeAmount,
    pub funding: Vec<Funding>,
    pub joins: Vec<Scheduled<AccountAmount>>,
    /// Wide-bound purchases of intertoken for `amount` native.
    pub buys: Vec<Scheduled<AccountAmount>>,
    pub exits: Vec<Scheduled<AccountOnly>>,
    pub claims: Vec<Scheduled<AccountAmount>>,
    pub injections: Vec<Scheduled<AccountAmount>>,
    pub key_updates: Vec<Scheduled<KeyChange>>,
    pub shocks: Vec<Scheduled<ShockTarget>>,
    /// Blocks whose winning booster forges a corrupted hash.
    pub corrupt_forge: Vec<u64>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            traders: 0,
            trader_native: NativeAmount::from_int(1_000),
            trader_intertoken: IntertokenAmount::ZERO,
            txs_per_block: 0,
            buy_share: 0.5,
            volume_min: NativeAmount::parse_decimal("0.01").expect("literal"),
            volume_max: NativeAmount::ONE,
            ratio_band: Ratio::fraction(1, 20),
            tight_share: 0.05,
            gas_price_min: NativeAmount::from_mantissa(1_000),
            gas_price_max: NativeAmount::from_mantissa(100_000),
            class_bits: 2,
            min_per_class: 1,
            shock_native: NativeAmount::from_int(1_000_000),
            funding: Vec::new(),
            joins: Vec::new(),
            buys: Vec::new(),
            exits: Vec::new(),
            claims: Vec::new(),
            injections: Vec::new(),
            key_updates: Vec::new(),
            shocks: Vec::new(),
            corrupt_forge: Vec::new(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Schema(msg()))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        check(self.schema_version == SCHEMA_VERSION, || {
            format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version)
        })?;
        check(self.chain.blocks_per_mainnet_block >= 1, || "chain.blocks_per_mainnet_block must be ≥ 1".into())?;
        check(self.chain.finality_depth <= 1_000, || "chain.finality_depth above 1000".into())?;
        let p = &self.poe;
        check((1..=256).contains(&p.hash_bits), || format!("poe.hash_bits {} outside 1..=256", p.hash_bits))?;
        check((1..=8).contains(&p.bits_per_tx), || format!("poe.bits_per_tx {} outside 1..=8", p.bits_per_tx))?;
        check((1..=4).contains(&p.max_targets), || "poe.max_targets outside 1..=4".into())?;
        check(p.boosters >= 1 || !p.enabled, || "poe.boosters must be ≥ 1".into())?;
        let f = &self.fees;
        check(f.fee_min <= f.rate && f.rate <= f.fee_max, || "fees: need fee_min ≤ rate ≤ fee_max".into())?;
        check(f.fee_max < Ratio::ONE, || "fees.fee_max must be below 1".into())?;
        let r = &self.risk;
        check(r.flag_fraction >= Ratio::ZERO && r.flag_fraction <= Ratio::ONE, || {
            "risk.flag_fraction outside [0, 1]".into()
        })?;
        let b = &self.burn;
        check(b.cycle_length >= 1, || "burn.cycle_length must be ≥ 1".into())?;
        check(b.p_max >= Ratio::ZERO && b.p_max <= Ratio::ONE, || "burn.p_max outside [0, 1]".into())?;
        let w = &self.workload;
        check((0.0..=1.0).contains(&w.buy_share), || "workload.buy_share outside [0, 1]".into())?;
        check((0.0..=1.0).contains(&w.tight_share), || "workload.tight_share outside [0, 1]".into())?;
        check(w.volume_min.is_positive() && w.volume_min <= w.volume_max, || {
            "workload: need 0 < volume_min ≤ volume_max".into()
        })?;
        check(w.gas_price_min.is_positive() && w.gas_price_min <= w.gas_price_max, || {
            "workload: need 0 < gas_price_min ≤ gas_price_max".into()
        })?;
        check(w.class_bits <= 4, || "workload.class_bits above 4".into())?;
        check(w.txs_per_block == 0 || w.traders > 0, || "workload: transactions need traders".into())?;
        for s in &w.shocks {
            check(s.what.ratio.is_positive(), || format!("shock at block {} has non-positive ratio", s.block))?;
        }
        let has_pool = self.pool.genesis.is_some() || !self.pool.bootstrap.is_empty();
        check(!has_pool || self.pool.genesis.is_some() || self.pool.bootstrap_ratio.is_some(), || {
            "pool.bootstrap needs bootstrap_ratio".into()
        })?;
        Ok(())
    }

    pub fn world_params(&self) -> WorldParams {
        WorldParams {
            alien: self.chain,
            poe: PoeConfig { search: crate::poe::SearchConfig { seed: self.seed, ..self.poe.search.clone() }, ..self.poe.clone() },
            risk: self.risk.clone(),
            burn: self.burn.clone(),
            buffer: self.buffer.clone(),
            fees: self.fees.clone(),
            agents: AgentPolicy {
                auto_inject: self.agents.auto_inject,
                negligent: self.agents.negligent.iter().map(|a| AccountId(*a)).collect(),
                full_providers: self.agents.full_providers.iter().map(|a| AccountId(*a)).collect(),
            },
            ..WorldParams::default()
        }
    }
}
