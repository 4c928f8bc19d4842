//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines always reach the output.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use itertools::Itertools;
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interpool::amm::{pool_ratio, PoolState};
use interpool::amount::{AlienAmount, GasAmount, IntertokenAmount, NativeAmount, Ratio};
use interpool::chainsim::alien::{make_spv_proof, AlienChain, AlienTx, Side, SpvProof};
use interpool::chainsim::tx::{Direction, MainnetTx, TxKind};
use interpool::chainsim::world::{booster_key, ForgeBlockStatus};
use interpool::codec::Canonical;
use interpool::events::Event;
use interpool::hash::Hash256;
use interpool::ledger::AccountId;
use interpool::listrack::{verify_spv, SwapState};
use interpool::poe::{
    brute_force_optimize, count_orderings, entropy, optimize_batch, reconstruct_forged, score_ordering,
    EntropyParams, Layout, PoeParams, SearchConfig,
};
use interpool::risk::RiskAction;
use interpool::scenario::swap_demo::run_swap_demo;
use interpool::scenario::{bundled, run_scenario, RunReport, ScenarioConfig};
use interpool::sig::{KeyPair, KeyRegistry};

/// Criteria that cannot hold as written. With zero locked digits the ordering
/// count is n! for every hash_bits, so entropy is flat rather than decreasing.
const EXPECTED_FAILURES: &[u32] = &[3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(name: &str) -> (RunReport, Duration) {
    let text = bundled::ALL.iter().find(|(n, _)| *n == name).expect("bundled").1;
    let config = ScenarioConfig::from_json(text).expect("bundled config parses");
    let start = Instant::now();
    let report = run_scenario(&config).expect("bundled scenario runs");
    (report, start.elapsed())
}

fn close(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= 0.005
}

fn criterion_1() -> Outcome {
    let (report, elapsed) = run("shock_walkthrough");
    let b = &report.blocks;
    if b.len() != 3 || b.iter().any(|x| x.risk.len() != 1) {
        return outcome(false, "expected three blocks with one risk report each");
    }
    let (t0, t1, t2) = (&b[0].risk[0], &b[1].risk[0], &b[2].risk[0]);
    let refund = b[2].events.iter().find_map(|e| match e {
        Event::Liquidated { refund, .. } => Some(refund.to_f64()),
        _ => None,
    });
    let action_refund = match t2.action {
        RiskAction::Liquidate { refund } => Some(refund.to_f64()),
        _ => None,
    };
    let cells: [(&str, f64, f64); 14] = [
        ("t0 intertoken", t0.current_intertoken.to_f64(), 2.00),
        ("t0 native", t0.current_native.to_f64(), 5.00),
        ("t1 intertoken", t1.current_intertoken.to_f64(), 1.41),
        ("t1 native", t1.current_native.to_f64(), 7.07),
        ("t1 risky intertoken", t1.risky_intertoken.to_f64(), 0.59),
        ("t1 risky native", t1.risky_native.to_f64(), 2.93),
        ("t1 collateral remaining", t1.collateral_remaining.to_f64(), 2.07),
        ("t1 total balance", t1.total_balance.to_f64(), 9.14),
        ("t2 intertoken", t2.current_intertoken.to_f64(), 1.00),
        ("t2 native", t2.current_native.to_f64(), 10.00),
        ("t2 risky intertoken", t2.risky_intertoken.to_f64(), 1.00),
        ("t2 risky native", t2.risky_native.to_f64(), 10.00),
        ("t2 collateral remaining", t2.collateral_remaining.to_f64(), -5.00),
        ("t2 refund", refund.unwrap_or(f64::NAN), 5.00),
    ];
    let bad: Vec<String> =
        cells.iter().filter(|(_, a, e)| !close(*a, *e)).map(|(n, a, e)| format!("{n}={a} want {e}")).collect();
    let pass = bad.is_empty() && action_refund.is_some_and(|r| close(r, 5.0)) && elapsed < Duration::from_secs(1);
    outcome(pass, format!("14 cells, {} off; runtime {elapsed:.2?} {}", bad.len(), bad.join("; ")))
}

/// Counts orderings of `n` labelled items, item `t` in class `t mod k`, whose
/// first `h` slots follow the class pattern `j mod k`.
fn enumerate(n: u64, k: u64, h: u64) -> BigUint {
    let count = (0..n)
        .permutations(n as usize)
        .filter(|p| (0..h as usize).all(|j| p[j] % k == j as u64 % k))
        .count();
    BigUint::from(count)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut bad = Vec::new();
    for n in [2u64, 4, 6, 8] {
        for d in [0u32, 1] {
            for h in [0u64, 2, 4] {
                let p = EntropyParams::new(n, d, h);
                let Ok(k) = p.validate() else { continue };
                checked += 1;
                let got = count_orderings(&p).expect("valid");
                if got != enumerate(n, k, h) {
                    bad.push(format!("Ω({n},{d},{h})"));
                }
            }
        }
    }
    let a1 = count_orderings(&EntropyParams::new(4, 1, 2)).ok() == Some(BigUint::from(8u32));
    let a2 = count_orderings(&EntropyParams::new(8, 1, 2)).ok() == Some(BigUint::from(11_520u32));
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && a1 && a2 && elapsed < Duration::from_secs(30);
    outcome(pass, format!("{checked} instances, mismatches {bad:?}, anchors 8/11520 {a1}/{a2}; runtime {elapsed:.2?}"))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=20u64 {
        let exact: f64 = (2..=n).map(|i| (i as f64).log2()).sum();
        let got = entropy(&EntropyParams::new(n, 0, 0)).expect("valid");
        let rel = if exact == 0.0 { got.abs() } else { ((got - exact) / exact).abs() };
        worst = worst.max(rel);
    }
    let factorial_ok = worst <= 1e-9;
    let e = |n, d, h| entropy(&EntropyParams::new(n, d, h)).expect("grid is valid");
    let mut flat_in_h = Vec::new();
    let mut flat_in_d = Vec::new();
    for n in [256u64, 512] {
        for d in [0u32, 1, 2] {
            for w in [64u64, 128, 256].windows(2) {
                if e(n, d, w[1]) >= e(n, d, w[0]) {
                    flat_in_h.push(format!("n={n} d={d} h={}→{}", w[0], w[1]));
                }
            }
        }
        for h in [64u64, 128, 256] {
            for w in [0u32, 1, 2].windows(2) {
                if e(n, w[1], h) >= e(n, w[0], h) {
                    flat_in_d.push(format!("n={n} h={h} d={}→{}", w[0], w[1]));
                }
            }
        }
    }
    let pass = factorial_ok && flat_in_h.is_empty() && flat_in_d.is_empty();
    outcome(
        pass,
        format!(
            "log2 n! worst rel err {worst:.1e}; not strictly decreasing in hash_bits: {flat_in_h:?}; in locked_digits: {flat_in_d:?}"
        ),
    )
}

fn random_exchange(rng: &mut ChaCha8Rng, ratio: Ratio, scale: i64) -> TxKind {
    let direction = if rng.gen_bool(0.5) { Direction::BuyIntertoken } else { Direction::SellIntertoken };
    let volume = NativeAmount::from_mantissa(rng.gen_range(1..=scale as i128 * 1_000_000_000_000));
    let volume_in = match direction {
        Direction::BuyIntertoken => volume.mantissa(),
        Direction::SellIntertoken => volume.to_intertoken(ratio).expect("small").mantissa().max(1),
    };
    let band = Ratio::from_mantissa(rng.gen_range(1..=100_000_000_000));
    let width = ratio.mul(band).expect("small").mantissa();
    TxKind::Exchange {
        direction,
        volume_in,
        ratio_min: Ratio::from_mantissa(ratio.mantissa() - width),
        ratio_max: Ratio::from_mantissa(ratio.mantissa() + width),
    }
}

/// A transaction whose hash has the wanted first and (optionally) last bit.
fn ground(rng: &mut ChaCha8Rng, sender: u64, kind: TxKind, first: Option<u8>, last: Option<u8>) -> MainnetTx {
    let price = NativeAmount::from_mantissa(rng.gen_range(1_000..=100_000));
    let base = MainnetTx::new(AccountId(sender), rng.gen(), price, GasAmount::from_int(200_000), kind).expect("valid");
    (0u64..)
        .map(|k| base.with_nonce(base.nonce.wrapping_add(k)))
        .find(|t| first.is_none_or(|f| t.tx_hash.first_bit() == f) && last.is_none_or(|l| t.tx_hash.last_bit() == l))
        .expect("grinding terminates")
}

fn random_hash(rng: &mut ChaCha8Rng) -> Hash256 {
    Hash256(rng.gen())
}

fn instance(rng: &mut ChaCha8Rng, n: usize, h: usize, key: bool, scale: i64) -> (Vec<MainnetTx>, PoeParams, PoolState) {
    let ratio = Ratio::from_mantissa(rng.gen_range(1_000_000_000_000..=5_000_000_000_000));
    let intertoken = IntertokenAmount::from_int(rng.gen_range(100..=1_000));
    let pool = PoolState::with_inventories(intertoken, intertoken.to_native(ratio).expect("small"));
    let ratio = pool_ratio(&pool).expect("non-empty");
    let target = random_hash(rng);
    let booster = key.then(|| random_hash(rng));
    let params = PoeParams {
        hash_bits: h,
        bits_per_tx: 1,
        targets: vec![target],
        booster_pubkey: booster,
        min_batch: n.min(h.max(1)),
        search: SearchConfig { seed: rng.gen(), ..SearchConfig::default() },
    };
    let layout = Layout::new(&params).expect("valid params");
    let mut txs: Vec<MainnetTx> = layout
        .slots
        .iter()
        .map(|slot| {
            let kind = random_exchange(rng, ratio, scale);
            let sender = rng.gen_range(1..=4);
            ground(rng, sender, kind, Some(slot.first as u8), slot.last.map(|l| l as u8))
        })
        .collect();
    while txs.len() < n {
        let kind = random_exchange(rng, ratio, scale);
        let sender = rng.gen_range(1..=4);
        txs.push(ground(rng, sender, kind, None, None));
    }
    txs.shuffle(rng);
    (txs, params, pool)
}

fn random_feasible(rng: &mut ChaCha8Rng, txs: &[MainnetTx], layout: &Layout) -> Vec<MainnetTx> {
    let mut by_class: BTreeMap<_, Vec<&MainnetTx>> = BTreeMap::new();
    for t in txs {
        by_class.entry(layout.class_of(t)).or_default().push(t);
    }
    for v in by_class.values_mut() {
        v.shuffle(rng);
    }
    let mut ordered: Vec<MainnetTx> =
        layout.slots.iter().map(|s| by_class.get_mut(s).and_then(|v| v.pop()).expect("feasible").clone()).collect();
    let mut rest: Vec<MainnetTx> = by_class.into_values().flatten().cloned().collect();
    rest.shuffle(rng);
    ordered.extend(rest);
    ordered
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let h = rng.gen_range(1..=n);
        let key = rng.gen_bool(0.5);
        let (txs, params, pool) = instance(&mut rng, n, h, key, 50);
        let a = optimize_batch(&txs, &params, &pool).map(|b| b.score());
        let b = brute_force_optimize(&txs, &params, &pool).map(|b| b.score());
        if a.is_err() || a != b {
            mismatches += 1;
        }
    }
    let small = start.elapsed();
    let mut violations = 0;
    let mut beaten = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let (txs, params, pool) = instance(&mut rng, 512, 256, true, 20);
        let layout = Layout::new(&params).expect("valid");
        let batch = optimize_batch(&txs, &params, &pool).expect("feasible by construction");
        if !layout.satisfied_by(&batch.ordered_txs) || !batch.forged.matches(&params) {
            violations += 1;
        }
        let best_random = (0..1_000)
            .map(|_| score_ordering(&random_feasible(&mut rng, &txs, &layout), &pool).miner)
            .max()
            .expect("non-empty");
        if batch.miner_score < best_random {
            beaten += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && violations == 0 && beaten == 0 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "200 small: {mismatches} differ from brute force ({small:.2?}); 50 large: {violations} constraint violations, \
             {beaten} beaten by random; runtime {elapsed:.2?}"
        ),
    )
}

fn criterion_5(forge100: &RunReport, bad: &RunReport) -> Outcome {
    let mut wrong = Vec::new();
    for b in &forge100.blocks {
        let (Some(params), ForgeBlockStatus::Forged) = (&b.poe_params, b.forge.status) else {
            wrong.push(b.height);
            continue;
        };
        let Ok(forged) = reconstruct_forged(&b.ordered, params) else {
            wrong.push(b.height);
            continue;
        };
        let actual: Vec<Hash256> = b.forge.actual.iter().map(|a| a.truncated(params.hash_bits)).collect();
        let key = b.forge.booster_key.map(|k| k.truncated(params.hash_bits));
        let key_ok = key == Some(forged.booster_key)
            && (0..2).any(|i| booster_key(i).pubkey.truncated(params.hash_bits) == forged.booster_key);
        if forged.alien_hashes != actual || !key_ok || b.forge.alien_heights.len() != 1 {
            wrong.push(b.height);
        }
    }
    let events: Vec<(u64, &Event)> = bad.blocks.iter().flat_map(|b| b.events.iter().map(move |e| (b.height, e))).collect();
    let missed: Vec<u64> =
        events.iter().filter(|(_, e)| matches!(e, Event::MissedForge { .. })).map(|(h, _)| *h).collect();
    let alarms = events.iter().filter(|(_, e)| matches!(e, Event::ForgeryAlarm { .. })).count();
    let catch_up = missed.first().and_then(|m| bad.blocks.iter().find(|b| b.height == m + 1));
    let catch_up_ok = catch_up.is_some_and(|b| {
        let Some(params) = &b.poe_params else { return false };
        let forged = reconstruct_forged(&b.ordered, params);
        b.forge.status == ForgeBlockStatus::Forged
            && b.forge.alien_heights.len() == 2
            && forged.is_ok_and(|f| {
                f.alien_hashes == b.forge.actual.iter().map(|a| a.truncated(params.hash_bits)).collect::<Vec<_>>()
            })
    });
    let pass = wrong.is_empty() && forge100.blocks.len() == 100 && missed.len() == 1 && alarms == 1 && catch_up_ok;
    outcome(
        pass,
        format!(
            "forge100: {}/100 blocks round-trip; bad booster: {} missed forge at {missed:?}, {alarms} alarm, catch-up with both hashes {catch_up_ok}",
            100 - wrong.len(),
            missed.len()
        ),
    )
}

fn proof_corpus() -> Vec<(SpvProof, Hash256)> {
    let senders: Vec<KeyPair> = (0..9).map(|i| KeyPair::derive(&format!("sender-{i}"))).collect();
    let mut registry = KeyRegistry::new();
    let mut chain = AlienChain::new();
    for k in &senders {
        registry.register(k);
        chain.fund(k.pubkey, AlienAmount::from_int(1_000));
    }
    let mut corpus = Vec::new();
    for size in 1..=9usize {
        let txs: Vec<AlienTx> = senders[..size]
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let to = senders[(i + 1) % senders.len()].pubkey;
                AlienTx::signed(k, to, AlienAmount::from_mantissa(1 + i as i128 * 7_919), chain.next_nonce(&k.pubkey))
            })
            .collect();
        let (block, rejected) = chain.mine_alien_block(txs, &registry);
        assert!(rejected.is_empty());
        for i in 0..block.txs.len() {
            corpus.push((make_spv_proof(block, i).expect("in range"), block.header_hash));
        }
    }
    corpus
}

fn flip(h: &Hash256, bit: usize) -> Hash256 {
    let mut out = *h;
    out.set_bit(bit, 1 - h.bit(bit));
    out
}

fn criterion_6() -> Outcome {
    let corpus = proof_corpus();
    let valid = corpus.iter().filter(|(p, f)| verify_spv(p, f)).count();
    // One entry per perturbation: did the verifier accept it?
    let mut verdicts: Vec<bool> = Vec::new();
    for (proof, forged) in &corpus {
        let bytes = proof.tx.to_canonical();
        for bit in 0..128.min(bytes.len() * 8) {
            let mut b = bytes.clone();
            b[bit / 8] ^= 0x80 >> (bit % 8);
            match AlienTx::from_canonical(&b) {
                Ok(tx) => verdicts.push(verify_spv(&SpvProof { tx, ..proof.clone() }, forged)),
                // Undecodable bytes never reach the verifier.
                Err(_) => verdicts.push(false),
            }
        }
        for s in 0..proof.path.len() {
            for bit in 0..128 {
                let mut p = proof.clone();
                p.path[s].sibling = flip(&p.path[s].sibling, bit);
                verdicts.push(verify_spv(&p, forged));
            }
            let mut p = proof.clone();
            p.path[s].side = match p.path[s].side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            verdicts.push(verify_spv(&p, forged));
        }
        for bit in 0..128 {
            verdicts.push(verify_spv(&SpvProof { prev_hash: flip(&proof.prev_hash, bit), ..proof.clone() }, forged));
            verdicts.push(verify_spv(&SpvProof { merkle_root: flip(&proof.merkle_root, bit), ..proof.clone() }, forged));
        }
        for bit in 0..64 {
            verdicts.push(verify_spv(&SpvProof { leaf_index: proof.leaf_index ^ (1 << bit), ..proof.clone() }, forged));
            verdicts.push(verify_spv(&SpvProof { block_height: proof.block_height ^ (1 << bit), ..proof.clone() }, forged));
        }
    }
    let tried = verdicts.len();
    let accepted = verdicts.iter().filter(|v| **v).count();
    let happy = run_swap_demo(true);
    let slash = run_swap_demo(false);
    let n = |v: i64| NativeAmount::from_int(v);
    let a = |v: i64| AlienAmount::from_int(v);
    let hb = happy.steps.last().expect("steps").balances;
    let sb = slash.steps.last().expect("steps").balances;
    let happy_ok = happy.steps.last().map(|s| s.state) == Some(SwapState::Completed)
        && (hb.mike_native, hb.alice_native, hb.mike_alien, hb.alice_alien) == (n(75), n(125), a(10), a(40));
    let slash_ok = slash.steps.last().map(|s| s.state) == Some(SwapState::Failed)
        && (sb.mike_native, sb.alice_native, sb.mike_alien, sb.alice_alien) == (n(125), n(75), a(0), a(50));
    let pass = valid == corpus.len() && accepted == 0 && happy_ok && slash_ok;
    outcome(
        pass,
        format!(
            "{valid}/{} valid proofs verify; {accepted}/{tried} perturbations accepted; swap happy {happy_ok}, slash {slash_ok}",
            corpus.len()
        ),
    )
}

fn criterion_7(reports: &[RunReport]) -> Outcome {
    let mut blocks = 0;
    let mut bad = Vec::new();
    let mut swaps = 0;
    for r in reports {
        for b in &r.blocks {
            blocks += 1;
            swaps += b.execution.executed;
            let c = &b.conservation;
            if !c.native_ok || !c.supply_ok || c.native_total != c.native_genesis || c.supply_outstanding != c.intertoken_accounted
            {
                bad.push(format!("{}#{}", r.name, b.height));
            }
            if b.execution.product_violations > 0 {
                bad.push(format!("{}#{} product", r.name, b.height));
            }
        }
    }
    outcome(bad.is_empty(), format!("{blocks} blocks over {} scenarios, {swaps} executed txs; violations {bad:?}", reports.len()))
}

fn criterion_8(report: &RunReport) -> Outcome {
    let mut count = 0;
    let mut bad = Vec::new();
    for b in &report.blocks {
        for e in &b.events {
            if let Event::Liquidated {
                provider,
                removed_intertoken,
                removed_native,
                pool_intertoken_before,
                pool_native_before,
                ratio_after,
                ..
            } = e
            {
                count += 1;
                let own_only = PoolState::with_inventories(
                    *pool_intertoken_before - *removed_intertoken,
                    *pool_native_before - *removed_native,
                );
                if pool_ratio(&own_only).ok() != *ratio_after {
                    bad.push(format!("{provider} at block {}", b.height));
                }
            }
        }
    }
    outcome(count == 10 && bad.is_empty(), format!("{count} liquidations, {} with a disturbed ratio {bad:?}", bad.len()))
}

fn fingerprint(r: &RunReport) -> String {
    format!("{}{}{}", r.blocks_jsonl(), r.summary_csv(), serde_json::to_string(&r.summary).expect("serializes"))
}

fn criterion_9(first: &[RunReport]) -> Outcome {
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let mut differ = Vec::new();
    for (r, (name, _)) in first.iter().zip(bundled::ALL) {
        let again = run(name).0;
        let single = serial.install(|| run(name).0);
        if fingerprint(r) != fingerprint(&again) || fingerprint(r) != fingerprint(&single) {
            differ.push(name);
        }
    }
    let parallel = cfg!(feature = "parallel");
    outcome(
        differ.is_empty() && parallel,
        format!("{} scenarios rerun on the default and a 1-thread pool (parallel search {parallel}); differing {differ:?}", first.len()),
    )
}

fn main() {
    let start = Instant::now();
    let reports: Vec<RunReport> = bundled::ALL.iter().map(|(n, _)| run(n).0).collect();
    let by_name = |n: &str| &reports[bundled::ALL.iter().position(|(x, _)| *x == n).expect("bundled")];
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "shock walkthrough reproduction", criterion_1()),
        (2, "counting oracle", criterion_2()),
        (3, "entropy properties", criterion_3()),
        (4, "optimizer optimality", criterion_4()),
        (5, "forge round-trip", criterion_5(by_name("forge100"), by_name("bad_booster"))),
        (6, "listrack tamper suite", criterion_6()),
        (7, "conservation", criterion_7(&reports)),
        (8, "liquidation neutrality", criterion_8(by_name("liquidations"))),
        (9, "determinism", criterion_9(&reports)),
    ];
    let mut failed = Vec::new();
    for (n, name, o) in &results {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(*n);
        }
    }
    println!("acceptance finished in {:.2?}", start.elapsed());
    if failed != EXPECTED_FAILURES {
        eprintln!("failing criteria {failed:?}, expected {EXPECTED_FAILURES:?}");
        std::process::exit(1);
    }
}
