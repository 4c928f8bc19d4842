//! The mainnet: per-block pipeline over the market, the burn book and the
//! forge ledger, with the alien chain advancing underneath.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{self, PoolState, SkipReason, SwapResult};
use crate::amount::{decimal, AlienAmount, GasAmount, IntertokenAmount, NativeAmount, Ratio};
use crate::buffer::{AccrualSource, BoosterPayment, BufferParams, BufferSnapshot, FeePolicy, Payout, VolatilityWindow};
use crate::burncycle::{self, BurnBook, BurnParams, ClaimState};
use crate::chainsim::alien::{make_spv_proof, AlienChain, AlienChainParams, AlienTx, SpvProof};
use crate::chainsim::forge::{ForgeLedger, ForgeRecord, ForgeStatus};
use crate::chainsim::tx::{Direction, MainnetTx, TxKind};
use crate::events::{f64Bits, ClaimId, Event, ProviderId};
use crate::hash::Hash256;
use crate::ledger::AccountId;
use crate::market::Market;
use crate::poe::{self, score::gas_used, OptimizedBatch, PoeParams, Score, SearchConfig};
use crate::risk::{self, Exit, JoinRequest, ProviderClass, RiskParams, RiskReport, Settlement};
use crate::sig::{KeyPair, KeyRegistry};

/// Receives gas when no booster produced the block.
pub const MINER_ACCOUNT: AccountId = AccountId(u64::MAX);
/// Trader that moves the pool to scheduled shock ratios.
pub const SHOCK_ACCOUNT: AccountId = AccountId(u64::MAX - 1);
/// Booster `k` trades from `BOOSTER_BASE + k`.
pub const BOOSTER_BASE: u64 = 1 << 40;

/// Deterministic key for a simulated account.
pub fn actor_key(account: AccountId) -> KeyPair {
    KeyPair::derive(&format!("account-{}", account.0))
}

pub fn booster_key(index: usize) -> KeyPair {
    KeyPair::derive(&format!("booster-{index}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoeConfig {
    pub enabled: bool,
    pub hash_bits: usize,
    /// Bits per transaction for each forged hash; multiplied by the target
    /// count during catch-up.
    pub bits_per_tx: usize,
    pub key_forging: bool,
    pub min_batch: usize,
    pub max_targets: usize,
    pub boosters: usize,
    pub search: SearchConfig,
}

impl Default for PoeConfig {
    fn default() -> Self {
        PoeConfig {
            enabled: true,
            hash_bits: 256,
            bits_per_tx: 1,
            key_forging: true,
            min_batch: 256,
            max_targets: 2,
            boosters: 2,
            search: SearchConfig { budget: 400, restarts: 2, seed: 0, exhaustive_limit: 40_320 },
        }
    }
}

/// How simulated providers behave.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentPolicy {
    /// Answer injection requests from the wallet.
    pub auto_inject: bool,
    /// Accounts whose providers never pay burn claims.
    pub negligent: BTreeSet<AccountId>,
    /// Accounts that join as full providers.
    pub full_providers: BTreeSet<AccountId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub alien: AlienChainParams,
    pub poe: PoeConfig,
    pub risk: RiskParams,
    pub burn: BurnParams,
    pub buffer: BufferParams,
    pub fees: FeePolicy,
    #[serde(with = "decimal")]
    pub max_block_gas: GasAmount,
    pub agents: AgentPolicy,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            alien: AlienChainParams::default(),
            poe: PoeConfig::default(),
            risk: RiskParams::default(),
            burn: BurnParams::default(),
            buffer: BufferParams::default(),
            fees: FeePolicy::default(),
            max_block_gas: GasAmount::from_int(1_000_000_000_000),
            agents: AgentPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Genesis {
    pub native: Vec<(AccountId, NativeAmount)>,
    pub alien: Vec<(AccountId, AlienAmount)>,
    /// Intertoken minted straight into wallets.
    pub intertoken: Vec<(AccountId, IntertokenAmount)>,
    /// Inventories minted at genesis, outside any provider position.
    pub pool: Option<(IntertokenAmount, NativeAmount)>,
    /// Providers joining at block 0; the first fixes the ratio on an empty pool.
    pub bootstrap: Vec<(AccountId, NativeAmount)>,
    pub bootstrap_ratio: Option<Ratio>,
    pub min_volume_threshold: NativeAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("bootstrap join failed: {0}")]
    Bootstrap(#[from] risk::RiskError),
    #[error("alien params: blocks_per_mainnet_block must be at least 1")]
    AlienParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum UserCall {
    Claim {
        account: AccountId,
        #[serde(with = "decimal")]
        amount: IntertokenAmount,
    },
    Withdraw {
        account: AccountId,
    },
    Inject {
        account: AccountId,
        #[serde(with = "decimal")]
        amount: NativeAmount,
    },
    UpdateKey {
        account: AccountId,
        label: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockInput {
    pub mempool: Vec<MainnetTx>,
    pub alien_txs: Vec<AlienTx>,
    pub calls: Vec<UserCall>,
    pub shocks: Vec<Ratio>,
    /// The winning booster forges a corrupted hash for the newest target.
    pub corrupt_forge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeBlockStatus {
    Disabled,
    Idle,
    Forged,
    Missed,
    NoBatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeOutcome {
    pub status: ForgeBlockStatus,
    pub alien_heights: Vec<u64>,
    pub claimed: Vec<Hash256>,
    pub actual: Vec<Hash256>,
    pub booster: Option<AccountId>,
    pub booster_key: Option<Hash256>,
    pub forged_key: Option<Hash256>,
}

impl ForgeOutcome {
    fn empty(status: ForgeBlockStatus) -> ForgeOutcome {
        ForgeOutcome {
            status,
            alien_heights: Vec::new(),
            claimed: Vec::new(),
            actual: Vec::new(),
            booster: None,
            booster_key: None,
            forged_key: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionStats {
    pub executed: usize,
    pub skipped: BTreeMap<String, usize>,
    #[serde(with = "decimal")]
    pub miner_score: NativeAmount,
    #[serde(with = "decimal")]
    pub volume_score: NativeAmount,
    /// Swaps whose post-trade product drifted by more than one ulp.
    pub product_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    #[serde(with = "decimal")]
    pub native_total: NativeAmount,
    #[serde(with = "decimal")]
    pub native_genesis: NativeAmount,
    #[serde(with = "decimal")]
    pub supply_outstanding: IntertokenAmount,
    #[serde(with = "decimal")]
    pub intertoken_accounted: IntertokenAmount,
    pub native_ok: bool,
    pub supply_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub alien_tip: u64,
    #[serde(with = "decimal::option")]
    pub ratio: Option<Ratio>,
    #[serde(with = "decimal")]
    pub pool_intertoken: IntertokenAmount,
    #[serde(with = "decimal")]
    pub pool_native: NativeAmount,
    #[serde(with = "decimal")]
    pub fee_rate: Ratio,
    pub buffer: BufferSnapshot,
    pub forge: ForgeOutcome,
    pub execution: ExecutionStats,
    pub risk: Vec<RiskReport>,
    pub events: Vec<Event>,
    pub conservation: Conservation,
    /// Executed ordering and the parameters it was optimised for; kept in
    /// memory for verification, not written to reports.
    #[serde(skip)]
    pub ordered: Vec<MainnetTx>,
    #[serde(skip)]
    pub poe_params: Option<PoeParams>,
}

/// A provider's transfer for a claim and the forged hash it was last
/// submitted against.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Transfer {
    tx: AlienTx,
    height: Option<u64>,
    submitted_against: Option<Hash256>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ProofSubmission {
    claim: ClaimId,
    tx: AlienTx,
    proof: SpvProof,
}

#[derive(Debug, Clone)]
pub struct World {
    pub params: WorldParams,
    pub height: u64,
    pub alien: AlienChain,
    pub market: Market,
    pub burns: BurnBook,
    pub forge: ForgeLedger,
    keys: KeyRegistry,
    /// Current key per account, and the reverse lookup for signing.
    actor_keys: BTreeMap<AccountId, KeyPair>,
    keys_by_pub: BTreeMap<Hash256, KeyPair>,
    volatility: VolatilityWindow,
    alien_pending: Vec<AlienTx>,
    proof_queue: Vec<ProofSubmission>,
    transfers: BTreeMap<ClaimId, Transfer>,
    native_genesis: NativeAmount,
}

impl World {
    pub fn new(params: WorldParams, genesis: &Genesis) -> Result<World, WorldError> {
        if params.alien.blocks_per_mainnet_block == 0 {
            return Err(WorldError::AlienParams);
        }
        let mut params = params;
        let bpm = params.alien.blocks_per_mainnet_block;
        params.burn.finality_lag = 2 + params.alien.finality_depth.div_ceil(bpm);
        let mut pool = PoolState { min_volume_threshold: genesis.min_volume_threshold, ..PoolState::default() };
        pool.fee_rate = params.fees.rate;
        if let Some((i, n)) = genesis.pool {
            pool.add_liquidity(i, n);
            pool.supply.minted_total += i;
        }
        let mut world = World {
            volatility: VolatilityWindow::new(params.buffer.volatility_window),
            params,
            height: 0,
            alien: AlienChain::new(),
            market: Market::new(pool),
            burns: BurnBook::default(),
            forge: ForgeLedger::default(),
            keys: KeyRegistry::new(),
            actor_keys: BTreeMap::new(),
            keys_by_pub: BTreeMap::new(),
            alien_pending: Vec::new(),
            proof_queue: Vec::new(),
            transfers: BTreeMap::new(),
            native_genesis: NativeAmount::ZERO,
        };
        world.market.buffer.fee_method = world.market.pool.fee_method;
        for &(account, amount) in &genesis.native {
            world.market.wallets.credit_native(account, amount);
            world.key_for(account);
        }
        for &(account, amount) in &genesis.intertoken {
            world.market.wallets.credit_intertoken(account, amount);
            world.market.pool.supply.minted_total += amount;
        }
        for &(account, amount) in &genesis.alien {
            let key = world.key_for(account);
            world.alien.fund(key.pubkey, amount);
        }
        for k in 0..world.params.poe.boosters {
            let key = booster_key(k);
            world.keys.register(&key);
        }
        for &(account, deposit) in &genesis.bootstrap {
            let request = world.join_request(account, deposit);
            risk::join_interpool(&mut world.market, &request, 0, genesis.bootstrap_ratio)?;
        }
        // Pre-mine so the first mainnet block already has a final height to forge.
        for _ in 0..world.params.alien.finality_depth {
            world.alien.mine_alien_block(Vec::new(), &world.keys);
        }
        let genesis_hash = world.alien.block(0).expect("genesis").header_hash;
        world.forge.record(ForgeRecord {
            alien_height: 0,
            claimed: genesis_hash,
            mainnet_block: 0,
            status: ForgeStatus::Forged,
        });
        world.native_genesis = world.market.native_total();
        Ok(world)
    }

    fn key_for(&mut self, account: AccountId) -> KeyPair {
        if let Some(k) = self.actor_keys.get(&account) {
            return k.clone();
        }
        let key = actor_key(account);
        self.keys.register(&key);
        self.keys_by_pub.insert(key.pubkey, key.clone());
        self.actor_keys.insert(account, key.clone());
        key
    }

    pub fn account_pubkey(&self, account: AccountId) -> Hash256 {
        self.actor_keys.get(&account).map_or_else(|| actor_key(account).pubkey, |k| k.pubkey)
    }

    pub fn verifier(&self) -> &KeyRegistry {
        &self.keys
    }

    pub fn native_genesis(&self) -> NativeAmount {
        self.native_genesis
    }

    fn join_request(&mut self, account: AccountId, deposit: NativeAmount) -> JoinRequest {
        let key = self.key_for(account);
        let class = if self.params.agents.full_providers.contains(&account) {
            ProviderClass::Full
        } else {
            ProviderClass::Regular
        };
        JoinRequest { account, deposit, class, mainnet_pubkey: key.pubkey, alien_pubkey: key.pubkey }
    }

    /// Most recent live position held by `account`.
    pub fn position_of(&self, account: AccountId) -> Option<ProviderId> {
        self.market.live_positions().filter(|p| p.account == account).map(|p| p.id).last()
    }

    pub fn conservation(&self) -> Conservation {
        let native_total = self.market.native_total();
        let supply_outstanding = self.market.pool.supply.outstanding();
        let intertoken_accounted = self.market.intertoken_held() + self.burns.escrow_total();
        Conservation {
            native_total,
            native_genesis: self.native_genesis,
            supply_outstanding,
            intertoken_accounted,
            native_ok: native_total == self.native_genesis,
            supply_ok: supply_outstanding == intertoken_accounted,
        }
    }

    /// Advances one mainnet block: alien blocks, then settle → expire →
    /// risk → buffer, then forge and execute the batch, then user calls,
    /// shocks and provider agents.
    pub fn produce_block(&mut self, input: BlockInput) -> BlockRecord {
        self.height += 1;
        let block = self.height;
        let mut events = Vec::new();

        self.mine_alien(input.alien_txs);

        // (1) settle proofs, then hand out open claims.
        self.settle_proofs(&mut events);
        events.extend(burncycle::assign_claims(&mut self.burns, &mut self.market, block, &self.params.burn));

        // (2) expire.
        let ratio = self.market.ratio();
        events.extend(burncycle::timeout_burns(&mut self.burns, &mut self.market, block, ratio));

        // (3) risk.
        let ratio = self.market.ratio();
        let mut reports = Vec::new();
        if let Some(r) = ratio {
            let pass = risk::risk_pass(&mut self.market, r, block, &self.params.risk);
            self.reopen_orphans(&pass.liquidations);
            reports = pass.reports;
            events.extend(pass.events);
        }

        // (4) buffer.
        self.buffer_step(block, &mut events);

        let (forge, ordered, poe_params) = self.forge_step(block, input.mempool, input.corrupt_forge, &mut events);
        let gas_to = forge.booster.unwrap_or(MINER_ACCOUNT);
        let execution = self.execute(&ordered, block, gas_to, &mut events);
        if let Some(booster) = forge.booster {
            self.pay_booster(booster, execution.volume_score, &mut events);
        }

        for call in input.calls {
            self.user_call(call, block, &mut events);
        }
        let mut violations = 0;
        for target in input.shocks {
            violations += self.shock(target, &mut events);
        }
        let mut execution = execution;
        execution.product_violations += violations;
        self.run_agents(&events);

        let ratio = self.market.ratio();
        if let Some(r) = ratio {
            self.volatility.push(r);
        }
        for e in &events {
            log::debug!("block {block}: {e:?}");
        }
        BlockRecord {
            height: block,
            alien_tip: self.alien.tip_height(),
            ratio,
            pool_intertoken: self.market.pool.intertoken_inventory,
            pool_native: self.market.pool.native_inventory,
            fee_rate: self.market.pool.fee_rate,
            buffer: self.market.buffer.snapshot(),
            forge,
            execution,
            risk: reports,
            events,
            conservation: self.conservation(),
            ordered,
            poe_params,
        }
    }

    fn mine_alien(&mut self, extra: Vec<AlienTx>) {
        let mut pending = std::mem::take(&mut self.alien_pending);
        pending.extend(extra);
        for k in 0..self.params.alien.blocks_per_mainnet_block {
            let txs = if k == 0 { std::mem::take(&mut pending) } else { Vec::new() };
            let (_, rejected) = self.alien.mine_alien_block(txs, &self.keys);
            for r in rejected {
                log::info!("alien tx rejected: {:?}", r.reason);
            }
        }
    }

    fn settle_proofs(&mut self, events: &mut Vec<Event>) {
        for sub in std::mem::take(&mut self.proof_queue) {
            let mut alarms = Vec::new();
            let res = burncycle::settle_burn_proof(
                &mut self.burns,
                &mut self.market,
                sub.claim,
                &sub.tx,
                &sub.proof,
                &self.forge,
                &self.keys,
                &mut alarms,
            );
            events.extend(alarms);
            match res {
                Ok(s) => {
                    self.transfers.remove(&sub.claim);
                    events.push(Event::BurnProven {
                        claim: sub.claim,
                        provider: s.provider,
                        released_collateral: s.released_collateral,
                    });
                }
                Err(e) => events.push(Event::BurnRejected { claim: sub.claim, reason: e.to_string() }),
            }
        }
    }

    fn reopen_orphans(&mut self, settlements: &[Settlement]) {
        for s in settlements {
            if let Some(c) = s.orphaned_claim {
                self.burns.reopen(c);
                self.transfers.remove(&c);
            }
        }
    }

    fn buffer_step(&mut self, block: u64, events: &mut Vec<Event>) {
        let Some(ratio) = self.market.ratio() else { return };
        let level = self.market.buffer.level(ratio);
        self.market.pool.fee_rate = self.params.fees.recalibrate(level);
        let before = self.market.buffer.fee_method;
        let method = self.market.buffer.switch_fee_method(&self.params.buffer);
        self.market.pool.fee_method = method;
        if method != before {
            events.push(Event::FeeMethodSwitched { to: method });
        }
        let variance = self.volatility.variance();
        if let Some(deployment) =
            self.market.buffer.deploy_on_volatility(&mut self.market.pool, variance, &self.params.buffer)
        {
            events.push(Event::BufferDeployed { deployment, volatility: f64Bits(variance) });
        }
        let epoch = self.params.buffer.provider_epoch;
        if epoch > 0 && block.is_multiple_of(epoch) {
            let holders = self.market.coin_holders();
            let paid = self.market.buffer.pay_providers(&holders, self.params.buffer.payout_fraction);
            if !paid.is_empty() {
                let total = paid.iter().map(|(_, a)| *a).sum();
                for (account, amount) in &paid {
                    self.market.wallets.credit_native(*account, *amount);
                }
                events.push(Event::ProvidersPaid { recipients: paid.len(), total });
            }
        }
    }

    fn poe_params(&self, targets: Vec<Hash256>, booster: Option<Hash256>, seed: u64) -> PoeParams {
        let cfg = &self.params.poe;
        PoeParams {
            hash_bits: cfg.hash_bits,
            bits_per_tx: cfg.bits_per_tx * targets.len().max(1),
            targets,
            booster_pubkey: booster.filter(|_| cfg.key_forging),
            min_batch: cfg.min_batch,
            search: SearchConfig { seed, ..cfg.search.clone() },
        }
    }

    /// Best-of-N booster competition over the pending final heights.
    fn forge_step(
        &mut self,
        block: u64,
        mempool: Vec<MainnetTx>,
        corrupt: bool,
        events: &mut Vec<Event>,
    ) -> (ForgeOutcome, Vec<MainnetTx>, Option<PoeParams>) {
        let fallback = |mempool: &[MainnetTx]| {
            let mut txs = poe::dedupe_mempool(mempool);
            txs.sort_by(|a, b| b.gas_price.cmp(&a.gas_price).then(a.tx_hash.cmp(&b.tx_hash)));
            txs
        };
        if !self.params.poe.enabled {
            return (ForgeOutcome::empty(ForgeBlockStatus::Disabled), fallback(&mempool), None);
        }
        let final_height = self.alien.final_height(&self.params.alien).unwrap_or(0);
        let heights = self.forge.pending(final_height, self.params.poe.max_targets.max(1));
        if heights.is_empty() {
            return (ForgeOutcome::empty(ForgeBlockStatus::Idle), fallback(&mempool), None);
        }
        let actual: Vec<Hash256> =
            heights.iter().map(|h| self.alien.block(*h).expect("final height exists").header_hash).collect();
        let mut targets = actual.clone();
        if corrupt {
            let last = targets.last_mut().expect("non-empty");
            let flipped = 1 - last.bit(0);
            last.set_bit(0, flipped);
        }
        let mut best: Option<(Score, usize, OptimizedBatch, PoeParams)> = None;
        for k in 0..self.params.poe.boosters {
            let key = booster_key(k);
            let seed = self.params.poe.search.seed ^ block.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (k as u64);
            let params = self.poe_params(targets.clone(), Some(key.pubkey), seed);
            match poe::optimize_batch(&mempool, &params, &self.market.pool) {
                Ok(batch) => {
                    let s = batch.score();
                    if best.as_ref().is_none_or(|(bs, _, _, _)| s > *bs) {
                        best = Some((s, k, batch, params));
                    }
                }
                Err(e) => log::info!("booster {k} failed at block {block}: {e}"),
            }
            // A corrupting booster wins by fiat.
            if corrupt && best.is_some() {
                break;
            }
        }
        let Some((_, k, batch, params)) = best else {
            events.push(Event::MissedForge { alien_heights: heights.clone(), claimed: Vec::new(), actual: actual.clone() });
            let mut out = ForgeOutcome::empty(ForgeBlockStatus::NoBatch);
            out.alien_heights = heights;
            out.actual = actual;
            return (out, fallback(&mempool), None);
        };
        let h = self.params.poe.hash_bits;
        let claimed = batch.forged.alien_hashes.clone();
        // Forged hashes carry only the first `hash_bits` bits; compare on those.
        let ok = claimed.iter().zip(&actual).all(|(c, a)| *c == a.truncated(h));
        let status = if ok { ForgeStatus::Forged } else { ForgeStatus::Missed };
        for (height, c) in heights.iter().zip(&claimed) {
            let honest = self.alien.block(*height).expect("final").header_hash;
            // Record the full header when the truncated bits agree.
            let recorded = if *c == honest.truncated(h) { honest } else { *c };
            self.forge.record(ForgeRecord { alien_height: *height, claimed: recorded, mainnet_block: block, status });
        }
        if ok {
            events.push(Event::Forged { alien_heights: heights.clone() });
        } else {
            events.push(Event::MissedForge { alien_heights: heights.clone(), claimed: claimed.clone(), actual: actual.clone() });
        }
        let bk = booster_key(k);
        let outcome = ForgeOutcome {
            status: if ok { ForgeBlockStatus::Forged } else { ForgeBlockStatus::Missed },
            alien_heights: heights,
            claimed,
            actual,
            booster: Some(AccountId(BOOSTER_BASE + k as u64)),
            booster_key: Some(bk.pubkey),
            forged_key: Some(batch.forged.booster_key),
        };
        (outcome, batch.ordered_txs, Some(params))
    }

    fn credit_payouts(&mut self, payouts: Vec<Payout>, events: &mut Vec<Event>) {
        for p in payouts {
            self.market.wallets.credit_intertoken(p.to, p.amount);
            events.push(Event::BoosterPaid { booster: p.to, amount: p.amount });
        }
    }

    fn execute(&mut self, ordered: &[MainnetTx], block: u64, gas_to: AccountId, events: &mut Vec<Event>) -> ExecutionStats {
        let mut stats = ExecutionStats::default();
        let mut gas_total = GasAmount::ZERO;
        for tx in ordered {
            match self.execute_one(tx, block, gas_to, &mut gas_total, &mut stats, events) {
                Ok(()) => stats.executed += 1,
                Err(reason) => {
                    let key = serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(str::to_owned));
                    *stats.skipped.entry(key.unwrap_or_default()).or_default() += 1;
                }
            }
        }
        stats
    }

    fn execute_one(
        &mut self,
        tx: &MainnetTx,
        block: u64,
        gas_to: AccountId,
        gas_total: &mut GasAmount,
        stats: &mut ExecutionStats,
        events: &mut Vec<Event>,
    ) -> Result<(), SkipReason> {
        let gas = gas_used(&tx.kind);
        if tx.gas_limit < gas {
            return Err(SkipReason::OutOfGas);
        }
        if *gas_total + gas > self.params.max_block_gas {
            return Err(SkipReason::BlockFull);
        }
        let fee = gas.cost(tx.gas_price).map_err(|_| SkipReason::InsufficientFunds)?;
        let volume = match tx.kind {
            TxKind::Exchange { direction, .. } => {
                let mut trial = self.market.pool.clone();
                let (quote, ratio_before) = match amm::execute_swap(&mut trial, tx) {
                    SwapResult::Executed { quote, ratio_before } => (quote, ratio_before),
                    SwapResult::Skipped { reason } => return Err(reason),
                };
                let wallets = &self.market.wallets;
                let funded = match direction {
                    Direction::BuyIntertoken => {
                        wallets.native(tx.sender) >= NativeAmount::from_mantissa(quote.total_in) + fee
                    }
                    Direction::SellIntertoken => {
                        wallets.native(tx.sender) >= fee
                            && wallets.intertoken(tx.sender) >= IntertokenAmount::from_mantissa(quote.total_in)
                    }
                };
                if !funded {
                    return Err(SkipReason::InsufficientFunds);
                }
                if !self.product_ok(&trial, direction) {
                    stats.product_violations += 1;
                }
                self.settle_swap(tx.sender, &quote, trial, events);
                amm::native_volume(&quote, ratio_before)
            }
            TxKind::ProvideLiquidity { deposit } => {
                if self.market.wallets.native(tx.sender) < deposit + fee {
                    return Err(SkipReason::InsufficientFunds);
                }
                let request = self.join_request(tx.sender, deposit);
                match risk::join_interpool(&mut self.market, &request, block, None) {
                    Ok(provider) => {
                        let p = &self.market.positions[&provider];
                        events.push(Event::Joined {
                            provider,
                            account: tx.sender,
                            deposit,
                            minted: p.minted,
                            ratio: self.market.ratio().unwrap_or_default(),
                        });
                    }
                    Err(e) => {
                        events.push(Event::JoinRejected { account: tx.sender, reason: e.to_string() });
                        return Err(match e {
                            risk::RiskError::BelowThreshold { .. } => SkipReason::BelowThreshold,
                            risk::RiskError::Funds(_) => SkipReason::InsufficientFunds,
                            _ => SkipReason::InsufficientLiquidity,
                        });
                    }
                }
                deposit
            }
        };
        self.market.wallets.debit_native(tx.sender, fee).expect("checked above");
        self.market.wallets.credit_native(gas_to, fee);
        *gas_total += gas;
        stats.miner_score += fee;
        stats.volume_score += volume;
        Ok(())
    }

    fn product_ok(&self, post: &PoolState, direction: Direction) -> bool {
        let pre = &self.market.pool;
        let (a, b, c, d) = match direction {
            Direction::BuyIntertoken => (
                pre.native_inventory.mantissa(),
                pre.intertoken_inventory.mantissa(),
                post.native_inventory.mantissa(),
                post.intertoken_inventory.mantissa(),
            ),
            Direction::SellIntertoken => (
                pre.intertoken_inventory.mantissa(),
                pre.native_inventory.mantissa(),
                post.intertoken_inventory.mantissa(),
                post.native_inventory.mantissa(),
            ),
        };
        amm::product_preserved(a, b, c, d)
    }

    /// Moves coins for an executed quote: trader pays `total_in` and receives
    /// `volume_out`, the pool takes the new inventories, the fee goes to the buffer.
    fn settle_swap(&mut self, trader: AccountId, quote: &amm::SwapQuote, post: PoolState, events: &mut Vec<Event>) {
        let w = &mut self.market.wallets;
        match quote.direction {
            Direction::BuyIntertoken => {
                w.debit_native(trader, NativeAmount::from_mantissa(quote.total_in)).expect("funded");
                w.credit_intertoken(trader, IntertokenAmount::from_mantissa(quote.volume_out));
            }
            Direction::SellIntertoken => {
                w.debit_intertoken(trader, IntertokenAmount::from_mantissa(quote.total_in)).expect("funded");
                w.credit_native(trader, NativeAmount::from_mantissa(quote.volume_out));
            }
        }
        self.market.pool = post;
        self.market.buffer.accrue_native(quote.fee_native(), AccrualSource::Fee);
        let released = self.market.buffer.accrue_intertoken(quote.fee_intertoken(), AccrualSource::Fee);
        self.credit_payouts(released, events);
    }

    fn pay_booster(&mut self, booster: AccountId, volume: NativeAmount, events: &mut Vec<Event>) {
        match self.market.buffer.pay_booster(booster, volume, self.params.buffer.booster_rate) {
            BoosterPayment::Paid { amount } => {
                self.market.wallets.credit_intertoken(booster, amount);
                events.push(Event::BoosterPaid { booster, amount });
            }
            BoosterPayment::Deferred { amount } => events.push(Event::BoosterDeferred { booster, amount }),
            BoosterPayment::Nothing => {}
        }
    }

    fn user_call(&mut self, call: UserCall, block: u64, events: &mut Vec<Event>) {
        match call {
            UserCall::Claim { account, amount } => {
                let pubkey = self.key_for(account).pubkey;
                match burncycle::claim_burn(&mut self.burns, &mut self.market, account, amount, pubkey, block) {
                    Ok(claim) => events.push(Event::BurnRequested { claim, claimant: account, amount }),
                    Err(e) => log::info!("claim by {account} refused: {e}"),
                }
            }
            UserCall::Withdraw { account } => {
                let (Some(id), Some(ratio)) = (self.position_of(account), self.market.ratio()) else {
                    log::info!("withdraw by {account}: no open position");
                    return;
                };
                let pos = &self.market.positions[&id];
                let penalty =
                    burncycle::early_exit_penalty(pos, &self.market.positions, &self.burns, &self.params.burn);
                match risk::withdraw_provider(&mut self.market, id, ratio, penalty, &self.params.risk) {
                    Ok(Exit::Withdrawn(s)) => {
                        self.reopen_orphans(&[s]);
                        events.push(s.withdrawn_event());
                    }
                    Ok(Exit::Liquidated(s)) => {
                        self.reopen_orphans(&[s]);
                        events.push(s.liquidated_event());
                    }
                    Err(e) => log::info!("withdraw of {id} failed: {e}"),
                }
            }
            UserCall::Inject { account, amount } => self.inject(account, amount, events),
            UserCall::UpdateKey { account, label } => {
                let Some(id) = self.position_of(account) else { return };
                let old = self.key_for(account);
                let new = KeyPair::derive(&label);
                self.keys.register(&new);
                self.keys_by_pub.insert(new.pubkey, new.clone());
                self.actor_keys.insert(account, new.clone());
                let balance = self.alien.balance(&old.pubkey);
                if balance.is_positive() {
                    let nonce = self.next_alien_nonce(&old.pubkey);
                    self.alien_pending.push(AlienTx::signed(&old, new.pubkey, balance, nonce));
                }
                match burncycle::update_alien_key(&mut self.market, id, new.pubkey, &self.params.burn) {
                    Ok(e) => events.push(e),
                    Err(e) => log::info!("key update for {id} failed: {e}"),
                }
            }
        }
    }

    fn inject(&mut self, account: AccountId, amount: NativeAmount, events: &mut Vec<Event>) {
        let (Some(id), Some(ratio)) = (self.position_of(account), self.market.ratio()) else { return };
        match risk::inject_collateral(&mut self.market, id, amount, ratio, &self.params.risk) {
            Ok(_) => events.push(Event::CollateralInjected { provider: id, amount }),
            Err(e) => log::info!("injection for {id} failed: {e}"),
        }
    }

    fn next_alien_nonce(&self, pubkey: &Hash256) -> u64 {
        let queued = self.alien_pending.iter().filter(|t| t.from_pubkey == *pubkey).count() as u64;
        self.alien.next_nonce(pubkey) + queued
    }

    /// Trades the pool to `target` along the curve from the shock account.
    /// Returns 1 if the trade broke the product bound.
    fn shock(&mut self, target: Ratio, events: &mut Vec<Event>) -> usize {
        let Some(ratio) = self.market.ratio() else { return 0 };
        let pool = &self.market.pool;
        let product = pool.intertoken_inventory.times_native(pool.native_inventory);
        let (direction, volume_in) = match product {
            Ok(k) if target > ratio => {
                let n = k.scale(target).and_then(|v| v.sqrt()).map(|v| v.mantissa()).unwrap_or(0);
                (Direction::BuyIntertoken, n - pool.native_inventory.mantissa())
            }
            Ok(k) if target < ratio => {
                let i = k.unscale(target).and_then(|v| v.sqrt()).map(|v| v.mantissa()).unwrap_or(0);
                let want = i - pool.intertoken_inventory.mantissa();
                let have = self.market.wallets.intertoken(SHOCK_ACCOUNT).mantissa();
                (Direction::SellIntertoken, want.min(have))
            }
            _ => (Direction::BuyIntertoken, 0),
        };
        let mut violations = 0;
        if volume_in > 0 {
            let Ok(mut quote) = amm::quote_swap(&self.market.pool, direction, volume_in) else { return 0 };
            if direction == Direction::SellIntertoken {
                // An inbound fee is charged on top; shrink until the holding covers it.
                let have = self.market.wallets.intertoken(SHOCK_ACCOUNT).mantissa();
                let mut volume = volume_in;
                while quote.total_in > have && volume > 0 {
                    volume = (volume * have / quote.total_in).min(volume - 1);
                    let Ok(q) = amm::quote_swap(&self.market.pool, direction, volume) else { return 0 };
                    quote = q;
                }
            }
            let mut post = self.market.pool.clone();
            amm::apply_quote(&mut post, &quote);
            if !self.product_ok(&post, direction) {
                violations = 1;
            }
            let w = &mut self.market.wallets;
            // The shock trader is funded on demand from its own native balance.
            let funded = match direction {
                Direction::BuyIntertoken => w.native(SHOCK_ACCOUNT) >= NativeAmount::from_mantissa(quote.total_in),
                Direction::SellIntertoken => {
                    w.intertoken(SHOCK_ACCOUNT) >= IntertokenAmount::from_mantissa(quote.total_in)
                }
            };
            if funded {
                self.settle_swap(SHOCK_ACCOUNT, &quote, post, events);
            } else {
                log::warn!("shock trader cannot fund a move to {target}");
            }
        }
        events.push(Event::Shock { target, achieved: self.market.ratio() });
        violations
    }

    /// Honest providers pay assigned claims and submit proofs once the
    /// transfer's height has a forged hash; optionally top up collateral.
    fn run_agents(&mut self, events: &[Event]) {
        let assigned: Vec<(ClaimId, Hash256, Hash256, AlienAmount, AccountId)> = self
            .burns
            .claims
            .values()
            .filter(|c| c.state == ClaimState::Assigned && !self.transfers.contains_key(&c.id))
            .filter_map(|c| {
                let provider = self.market.positions.get(&c.assigned_provider?)?;
                Some((c.id, c.provider_alien_pubkey?, c.claimant_alien_pubkey, c.amount.cast(), provider.account))
            })
            .collect();
        for (claim, from, to, amount, account) in assigned {
            if self.params.agents.negligent.contains(&account) {
                continue;
            }
            let Some(key) = self.keys_by_pub.get(&from).cloned() else { continue };
            let nonce = self.next_alien_nonce(&from);
            let tx = AlienTx::signed(&key, to, amount, nonce);
            self.alien_pending.push(tx.clone());
            self.transfers.insert(claim, Transfer { tx, height: None, submitted_against: None });
        }

        let live: BTreeSet<ClaimId> =
            self.burns.claims.values().filter(|c| c.state == ClaimState::Assigned).map(|c| c.id).collect();
        self.transfers.retain(|id, _| live.contains(id));
        for (claim, t) in self.transfers.iter_mut() {
            if t.height.is_none() {
                t.height = self.alien.find_tx(&t.tx.leaf_hash()).map(|(h, _)| h);
            }
            let Some(height) = t.height else { continue };
            let Some(rec) = self.forge.get(height) else { continue };
            if t.submitted_against == Some(rec.claimed) {
                continue;
            }
            let block = self.alien.block(height).expect("found above");
            let index = block.txs.iter().position(|x| *x == t.tx).expect("found above");
            let proof = make_spv_proof(block, index).expect("index in range");
            t.submitted_against = Some(rec.claimed);
            self.proof_queue.push(ProofSubmission { claim: *claim, tx: t.tx.clone(), proof });
        }

        if self.params.agents.auto_inject {
            for e in events {
                if let Event::InjectionRequested { provider, amount, .. } = e {
                    if let Some(p) = self.market.positions.get(provider) {
                        let account = p.account;
                        let mut sink = Vec::new();
                        if self.market.wallets.native(account) >= *amount {
                            self.inject(account, *amount, &mut sink);
                        }
                    }
                }
            }
        }
    }

    /// Structured dump of the alien chain: heights, lowercase hex hashes,
    /// amounts as scaled integers.
    pub fn chain_dump(&self) -> serde_json::Value {
        serde_json::json!({
            "mainnet_height": self.height,
            "alien_tip": self.alien.tip_height(),
            "alien_blocks": self.alien.blocks(),
            "forged": self.forge.records().collect::<Vec<_>>(),
        })
    }
}
