//! Configuration-driven runs of the simulator and their reports.

pub mod config;
pub mod swap_demo;
pub mod workload;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{decimal, IntertokenAmount, Ratio};
use crate::chainsim::world::{
    BlockInput, BlockRecord, ForgeBlockStatus, Genesis, UserCall, World, WorldError, SHOCK_ACCOUNT,
};
use crate::events::Event;
use crate::ledger::AccountId;

pub use config::{ScenarioConfig, SCHEMA_VERSION, TRADER_BASE};
pub use workload::{generate_exchanges, Diversity};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Schema(String),
    #[error("workload: {0}")]
    Workload(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantFailure {
    pub block: u64,
    pub check: String,
    pub detail: String,
    /// Kinds of the events emitted in the failing block.
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub blocks: u64,
    pub forged: u64,
    pub missed: u64,
    pub executed: u64,
    pub skipped: u64,
    pub joins: u64,
    pub liquidations: u64,
    pub withdrawals: u64,
    pub burns_requested: u64,
    pub burns_proven: u64,
    pub burns_slashed: u64,
    pub forgery_alarms: u64,
    #[serde(with = "decimal")]
    pub booster_paid: IntertokenAmount,
    pub product_violations: u64,
    #[serde(with = "decimal::option")]
    pub final_ratio: Option<Ratio>,
    pub native_conserved: bool,
    pub supply_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub blocks: Vec<BlockRecord>,
    pub summary: Summary,
    pub failures: Vec<InvariantFailure>,
    /// Alien chain and forge ledger at the end of the run.
    pub chain: serde_json::Value,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// One JSON object per block.
    pub fn blocks_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&serde_json::to_string(b).expect("block records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "height,ratio,pool_intertoken,pool_native,fee_rate,native_stack,intertoken_stack,burn_debt,fee_method,\
             forge,executed,skipped,miner_score,volume_score,events,native_ok,supply_ok\n",
        );
        for b in &self.blocks {
            let forge = serde_json::to_value(b.forge.status).expect("status serializes");
            let method = serde_json::to_value(b.buffer.fee_method).expect("method serializes");
            let skipped: usize = b.execution.skipped.values().sum();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                b.height,
                b.ratio.map(|r| r.to_string()).unwrap_or_default(),
                b.pool_intertoken,
                b.pool_native,
                b.fee_rate,
                b.buffer.native_stack,
                b.buffer.intertoken_stack,
                b.buffer.burn_debt,
                method.as_str().unwrap_or_default(),
                forge.as_str().unwrap_or_default(),
                b.execution.executed,
                skipped,
                b.execution.miner_score,
                b.execution.volume_score,
                b.events.len(),
                b.conservation.native_ok,
                b.conservation.supply_ok,
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes `blocks.jsonl`, `summary.csv`, `summary.json` and `chain.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("blocks.jsonl"), self.blocks_jsonl())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        let summary = serde_json::json!({
            "name": self.name,
            "seed": self.seed,
            "summary": self.summary,
            "failures": self.failures,
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializes") + "\n")?;
        std::fs::write(dir.join("chain.json"), serde_json::to_string_pretty(&self.chain).expect("serializes") + "\n")?;
        Ok(())
    }
}

fn genesis(config: &ScenarioConfig) -> Genesis {
    let w = &config.workload;
    let mut native = Vec::new();
    let mut alien = Vec::new();
    let mut intertoken = Vec::new();
    for i in 0..w.traders {
        native.push((AccountId(TRADER_BASE + i), w.trader_native));
        if w.trader_intertoken.is_positive() {
            intertoken.push((AccountId(TRADER_BASE + i), w.trader_intertoken));
        }
    }
    for f in &w.funding {
        if f.native.is_positive() {
            native.push((AccountId(f.account), f.native));
        }
        if f.alien.is_positive() {
            alien.push((AccountId(f.account), f.alien));
        }
    }
    if !w.shocks.is_empty() {
        native.push((SHOCK_ACCOUNT, w.shock_native));
    }
    Genesis {
        native,
        alien,
        intertoken,
        pool: config.pool.genesis.as_ref().map(|g| (g.intertoken, g.native)),
        bootstrap: config.pool.bootstrap.iter().map(|d| (AccountId(d.account), d.deposit)).collect(),
        bootstrap_ratio: config.pool.bootstrap_ratio,
        min_volume_threshold: config.pool.min_volume_threshold,
    }
}

fn block_input(config: &ScenarioConfig, world: &World, block: u64) -> Result<BlockInput, ScenarioError> {
    let w = &config.workload;
    let diversity = Diversity {
        class_bits: w.class_bits,
        trailing: config.poe.enabled && config.poe.key_forging,
        min_per_class: w.min_per_class,
    };
    let mut mempool = generate_exchanges(w, config.seed, block, world.market.ratio(), diversity)?;
    for j in w.joins.iter().filter(|j| j.block == block) {
        mempool.push(workload::join_tx(w, block, AccountId(j.what.account), j.what.amount)?);
    }
    for b in w.buys.iter().filter(|b| b.block == block) {
        mempool.push(workload::buy_tx(w, block, AccountId(b.what.account), b.what.amount)?);
    }
    let mut calls = Vec::new();
    for c in w.claims.iter().filter(|c| c.block == block) {
        calls.push(UserCall::Claim { account: AccountId(c.what.account), amount: c.what.amount.cast() });
    }
    for i in w.injections.iter().filter(|i| i.block == block) {
        calls.push(UserCall::Inject { account: AccountId(i.what.account), amount: i.what.amount });
    }
    for k in w.key_updates.iter().filter(|k| k.block == block) {
        calls.push(UserCall::UpdateKey { account: AccountId(k.what.account), label: k.what.label.clone() });
    }
    for e in w.exits.iter().filter(|e| e.block == block) {
        calls.push(UserCall::Withdraw { account: AccountId(e.what.account) });
    }
    Ok(BlockInput {
        mempool,
        alien_txs: Vec::new(),
        calls,
        shocks: w.shocks.iter().filter(|s| s.block == block).map(|s| s.what.ratio).collect(),
        corrupt_forge: w.corrupt_forge.contains(&block),
    })
}

fn check_block(record: &BlockRecord, failures: &mut Vec<InvariantFailure>) {
    let kinds = || record.events.iter().map(|e| e.kind().to_owned()).collect::<Vec<_>>();
    let c = &record.conservation;
    if !c.native_ok {
        failures.push(InvariantFailure {
            block: record.height,
            check: "native_conservation".into(),
            detail: format!("total {} != genesis {}", c.native_total, c.native_genesis),
            events: kinds(),
        });
    }
    if !c.supply_ok {
        failures.push(InvariantFailure {
            block: record.height,
            check: "supply_identity".into(),
            detail: format!("outstanding {} != held {}", c.supply_outstanding, c.intertoken_accounted),
            events: kinds(),
        });
    }
    if record.execution.product_violations > 0 {
        failures.push(InvariantFailure {
            block: record.height,
            check: "constant_product".into(),
            detail: format!("{} swaps moved the product by more than one ulp", record.execution.product_violations),
            events: kinds(),
        });
    }
}

fn summarize(blocks: &[BlockRecord], world: &World) -> Summary {
    let mut s = Summary { blocks: blocks.len() as u64, native_conserved: true, supply_identity: true, ..Summary::default() };
    for b in blocks {
        match b.forge.status {
            ForgeBlockStatus::Forged => s.forged += 1,
            ForgeBlockStatus::Missed => s.missed += 1,
            _ => {}
        }
        s.executed += b.execution.executed as u64;
        s.skipped += b.execution.skipped.values().sum::<usize>() as u64;
        s.product_violations += b.execution.product_violations as u64;
        s.native_conserved &= b.conservation.native_ok;
        s.supply_identity &= b.conservation.supply_ok;
        for e in &b.events {
            match e {
                Event::Joined { .. } => s.joins += 1,
                Event::Liquidated { .. } => s.liquidations += 1,
                Event::Withdrawn { .. } => s.withdrawals += 1,
                Event::BurnRequested { .. } => s.burns_requested += 1,
                Event::BurnProven { .. } => s.burns_proven += 1,
                Event::BurnSlashed { .. } => s.burns_slashed += 1,
                Event::ForgeryAlarm { .. } => s.forgery_alarms += 1,
                Event::BoosterPaid { amount, .. } => s.booster_paid += *amount,
                _ => {}
            }
        }
    }
    s.final_ratio = world.market.ratio();
    s
}

/// Runs the configured number of blocks. Invariant failures are collected in
/// the report rather than aborting the run.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    config.validate()?;
    let mut world = World::new(config.world_params(), &genesis(config))?;
    let mut blocks = Vec::with_capacity(config.blocks as usize);
    let mut failures = Vec::new();
    for block in 1..=config.blocks {
        let input = block_input(config, &world, block)?;
        let record = world.produce_block(input);
        check_block(&record, &mut failures);
        blocks.push(record);
    }
    let summary = summarize(&blocks, &world);
    Ok(RunReport {
        name: config.name.clone(),
        seed: config.seed,
        summary,
        failures,
        chain: world.chain_dump(),
        blocks,
    })
}

/// Scenario files shipped with the crate.
pub mod bundled {
    pub const SHOCK_WALKTHROUGH: &str = include_str!("../../scenarios/shock_walkthrough.json");
    pub const FORGE100: &str = include_str!("../../scenarios/forge100.json");
    pub const BAD_BOOSTER: &str = include_str!("../../scenarios/bad_booster.json");
    pub const LIQUIDATIONS: &str = include_str!("../../scenarios/liquidations.json");
    pub const BURNS: &str = include_str!("../../scenarios/burns.json");

    pub const ALL: [(&str, &str); 5] = [
        ("shock_walkthrough", SHOCK_WALKTHROUGH),
        ("forge100", FORGE100),
        ("bad_booster", BAD_BOOSTER),
        ("liquidations", LIQUIDATIONS),
        ("burns", BURNS),
    ];
}
