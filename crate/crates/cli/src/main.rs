use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use interpool::amm::PoolState;
use interpool::amount::{IntertokenAmount, NativeAmount};
use interpool::chainsim::alien::SpvProof;
use interpool::chainsim::tx::MainnetTx;
use interpool::hash::Hash256;
use interpool::listrack::check_spv;
use interpool::poe::{self, EntropyParams, PoeParams, SearchConfig};
use interpool::scenario::{self, bundled, swap_demo, ScenarioConfig};

#[derive(Parser)]
#[command(name = "interpool", version, about = "Interpool pool and forging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write blocks.jsonl, summary.csv, summary.json and chain.json.
    Simulate {
        /// Scenario config (JSON).
        #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
        config: Option<PathBuf>,
        /// One of the scenarios shipped with the simulator.
        #[arg(long)]
        bundled: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ordering entropy log2(Ω) for a batch of n transactions.
    Entropy {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        locked_digits: u32,
        /// Comma-separated list.
        #[arg(long, value_delimiter = ',', default_value = "256")]
        hash_bits: Vec<u64>,
        /// Also print the exact count of orderings.
        #[arg(long)]
        exact: bool,
    },
    /// Order a batch so its prefix forges the target hash.
    Optimize {
        /// JSON with `pool` {intertoken, native} and `txs`.
        #[arg(long)]
        batch: PathBuf,
        /// Target hash, 64 hex digits.
        #[arg(long)]
        target: Hash256,
        #[arg(long)]
        booster_key: Option<Hash256>,
        #[arg(long, default_value_t = 256)]
        hash_bits: usize,
        #[arg(long, default_value_t = 1)]
        bits_per_tx: usize,
        #[arg(long)]
        min_batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check an SPV proof against a forged header hash.
    VerifyProof {
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        forged: Hash256,
    },
    /// Two-party swap: the proven path and the expired path, as JSON.
    SwapDemo,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn print(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn simulate(config: Option<PathBuf>, bundled: Option<String>, seed: Option<u64>, out: Option<PathBuf>) -> Result<bool> {
    let text = match (config, bundled) {
        (Some(path), _) => read(&path)?,
        (None, Some(name)) => match bundled::ALL.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => text.to_string(),
            None => {
                let names: Vec<_> = bundled::ALL.iter().map(|(n, _)| *n).collect();
                bail!("no bundled scenario {name:?}; choose from {}", names.join(", "))
            }
        },
        (None, None) => bail!("pass --config or --bundled"),
    };
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = scenario::run_scenario(&config)?;
    if let Some(dir) = out {
        report.write_to(&dir)?;
    }
    for f in &report.failures {
        log::error!("block {}: {} failed: {}", f.block, f.check, f.detail);
    }
    print(&json!({
        "name": report.name,
        "seed": report.seed,
        "summary": report.summary,
        "failures": report.failures,
    }));
    Ok(report.passed())
}

fn entropy(n: u64, locked_digits: u32, hash_bits: Vec<u64>, exact: bool) -> Result<bool> {
    let mut rows = Vec::new();
    for h in hash_bits {
        let p = EntropyParams::new(n, locked_digits, h);
        let bits = poe::entropy(&p)?;
        let mut row = json!({ "n": n, "locked_digits": locked_digits, "hash_bits": h, "entropy_bits": bits });
        if exact {
            row["orderings"] = json!(poe::count_orderings(&p)?.to_string());
        }
        rows.push(row);
    }
    print(&json!(rows));
    Ok(true)
}

#[derive(serde::Deserialize)]
struct BatchFile {
    pool: PoolFile,
    txs: Vec<MainnetTx>,
}

#[derive(serde::Deserialize)]
struct PoolFile {
    intertoken: String,
    native: String,
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    batch: &Path,
    target: Hash256,
    booster_key: Option<Hash256>,
    hash_bits: usize,
    bits_per_tx: usize,
    min_batch: Option<usize>,
    seed: u64,
) -> Result<bool> {
    let file: BatchFile = serde_json::from_str(&read(batch)?).context("parsing batch")?;
    let pool = PoolState::with_inventories(
        file.pool.intertoken.parse::<IntertokenAmount>()?,
        file.pool.native.parse::<NativeAmount>()?,
    );
    let params = PoeParams {
        hash_bits,
        bits_per_tx,
        targets: vec![target],
        booster_pubkey: booster_key,
        min_batch: min_batch.unwrap_or(hash_bits / bits_per_tx.max(1)),
        search: SearchConfig { seed, ..SearchConfig::default() },
    };
    let result = poe::optimize_batch(&file.txs, &params, &pool)?;
    let ok = result.forged.matches(&params);
    print(&json!({
        "forged_matches": ok,
        "miner_score": result.miner_score.to_string(),
        "volume_score": result.volume_score.to_string(),
        "forged": result.forged,
        "ordered_tx_hashes": result.ordered_txs.iter().map(|t| t.tx_hash).collect::<Vec<_>>(),
    }));
    Ok(ok)
}

fn verify_proof(proof: &Path, forged: Hash256) -> Result<bool> {
    let proof: SpvProof = serde_json::from_str(&read(proof)?).context("parsing proof")?;
    let result = check_spv(&proof, &forged);
    print(&json!({
        "valid": result.is_ok(),
        "reason": result.err().map(|e| e.to_string()),
        "height": proof.block_height,
    }));
    Ok(result.is_ok())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INTERPOOL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, bundled, seed, out } => simulate(config, bundled, seed, out),
        Command::Entropy { n, locked_digits, hash_bits, exact } => entropy(n, locked_digits, hash_bits, exact),
        Command::Optimize { batch, target, booster_key, hash_bits, bits_per_tx, min_batch, seed } => {
            optimize(&batch, target, booster_key, hash_bits, bits_per_tx, min_batch, seed)
        }
        Command::VerifyProof { proof, forged } => verify_proof(&proof, forged),
        Command::SwapDemo => {
            print(&json!([swap_demo::run_swap_demo(true), swap_demo::run_swap_demo(false)]));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
