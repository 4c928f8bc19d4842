//! Ordering search: greedy slot filling plus feasibility-preserving local
//! search, an exhaustive mode for small batches, and a factorial oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::score::{score_ordering, step, Score};
use super::{reconstruct_forged, Layout, OptimizedBatch, PoeError, PoeParams, SlotClass};
use crate::amm::PoolState;
use crate::chainsim::tx::MainnetTx;

pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Keeps one transaction per (sender, nonce): the highest gas price, first seen on ties.
pub fn dedupe_mempool(mempool: &[MainnetTx]) -> Vec<MainnetTx> {
    let mut best: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for (i, tx) in mempool.iter().enumerate() {
        best.entry((tx.sender.0, tx.nonce))
            .and_modify(|j| {
                if tx.gas_price > mempool[*j].gas_price {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| mempool[i].clone()).collect()
}

struct Problem<'a> {
    txs: &'a [MainnetTx],
    classes: Vec<SlotClass>,
    slots: Vec<SlotClass>,
    pool: &'a PoolState,
}

impl<'a> Problem<'a> {
    fn new(txs: &'a [MainnetTx], params: &PoeParams, pool: &'a PoolState) -> Result<Problem<'a>, PoeError> {
        let layout = Layout::new(params)?;
        let need = layout.prefix_len();
        if txs.len() < need {
            return Err(PoeError::TooFewTransactions { need, have: txs.len() });
        }
        let classes = txs.iter().map(|tx| layout.class_of(tx)).collect();
        let problem = Problem { txs, classes, slots: layout.slots, pool };
        problem.check_feasible()?;
        Ok(problem)
    }

    fn n(&self) -> usize {
        self.txs.len()
    }

    fn prefix(&self) -> usize {
        self.slots.len()
    }

    fn check_feasible(&self) -> Result<(), PoeError> {
        let mut left: BTreeMap<SlotClass, usize> = BTreeMap::new();
        for c in &self.classes {
            *left.entry(*c).or_default() += 1;
        }
        for (slot, class) in self.slots.iter().enumerate() {
            match left.get_mut(class) {
                Some(count) if *count > 0 => *count -= 1,
                _ => return Err(PoeError::Infeasible { slot, class: *class }),
            }
        }
        Ok(())
    }

    fn feasible(&self, order: &[usize]) -> bool {
        self.slots.iter().zip(order).all(|(slot, &i)| self.classes[i] == *slot)
    }

    /// Number of feasible orderings, saturating.
    fn feasible_count(&self) -> u128 {
        let mut need: BTreeMap<SlotClass, u128> = BTreeMap::new();
        for s in &self.slots {
            *need.entry(*s).or_default() += 1;
        }
        let mut have: BTreeMap<SlotClass, u128> = BTreeMap::new();
        for c in &self.classes {
            *have.entry(*c).or_default() += 1;
        }
        let mut total: u128 = 1;
        for (class, k) in need {
            let h = have[&class];
            for v in (h - k + 1)..=h {
                total = total.saturating_mul(v);
            }
        }
        for v in 2..=(self.n() - self.prefix()) as u128 {
            total = total.saturating_mul(v);
        }
        total
    }

    fn score(&self, order: &[usize]) -> Score {
        let mut pool = self.pool.clone();
        let mut total = Score::default();
        for &i in order {
            if let Ok(s) = step(&mut pool, &self.txs[i]) {
                total += s;
            }
        }
        total
    }

    fn gas_rank(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| self.txs[b].gas_price.cmp(&self.txs[a].gas_price).then(a.cmp(&b)));
        idx
    }

    /// Fills each slot with the highest-gas unused transaction of its class,
    /// then appends the rest by gas price. `shuffle` perturbs the class queues.
    fn greedy(&self, rng: Option<&mut ChaCha8Rng>) -> Vec<usize> {
        let mut queues: BTreeMap<SlotClass, Vec<usize>> = BTreeMap::new();
        for i in self.gas_rank() {
            queues.entry(self.classes[i]).or_default().push(i);
        }
        if let Some(rng) = rng {
            for q in queues.values_mut() {
                // Light perturbation: random adjacent swaps keep the gas bias.
                for _ in 0..q.len() {
                    if q.len() > 1 {
                        let a = rng.gen_range(0..q.len() - 1);
                        q.swap(a, a + 1);
                    }
                }
            }
        }
        let mut cursor: BTreeMap<SlotClass, usize> = BTreeMap::new();
        let mut used = vec![false; self.n()];
        let mut order = Vec::with_capacity(self.n());
        for slot in &self.slots {
            let c = cursor.entry(*slot).or_default();
            let i = queues[slot][*c];
            *c += 1;
            used[i] = true;
            order.push(i);
        }
        order.extend(self.gas_rank().into_iter().filter(|&i| !used[i]));
        order
    }
}

/// Hill climbing over swaps that keep every prefix slot in its class.
fn local_search(problem: &Problem, mut order: Vec<usize>, budget: usize, seed: u64) -> (Score, Vec<usize>) {
    let n = problem.n();
    let p = problem.prefix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_slot: BTreeMap<SlotClass, Vec<usize>> = BTreeMap::new();
    for (pos, s) in problem.slots.iter().enumerate() {
        by_slot.entry(*s).or_default().push(pos);
    }

    // states[k] is the pool before position k; scores[k] the score of order[..k].
    let mut states: Vec<PoolState> = Vec::with_capacity(n + 1);
    let mut scores: Vec<Score> = Vec::with_capacity(n + 1);
    let rebuild = |order: &[usize], from: usize, states: &mut Vec<PoolState>, scores: &mut Vec<Score>| {
        states.truncate(from + 1);
        scores.truncate(from + 1);
        for k in from..n {
            let mut pool = states[k].clone();
            let mut s = scores[k];
            if let Ok(add) = step(&mut pool, &problem.txs[order[k]]) {
                s += add;
            }
            states.push(pool);
            scores.push(s);
        }
    };
    states.push(problem.pool.clone());
    scores.push(Score::default());
    rebuild(&order, 0, &mut states, &mut scores);

    let tail_score = |order: &[usize], from: usize, states: &[PoolState], scores: &[Score]| {
        let mut pool = states[from].clone();
        let mut s = scores[from];
        for &i in &order[from..] {
            if let Ok(add) = step(&mut pool, &problem.txs[i]) {
                s += add;
            }
        }
        s
    };

    if n < 2 {
        return (scores[n], order);
    }
    for _ in 0..budget {
        let (a, b) = match rng.gen_range(0..3u8) {
            0 if p > 1 => {
                let a = rng.gen_range(0..p);
                let peers = &by_slot[&problem.slots[a]];
                (a, peers[rng.gen_range(0..peers.len())])
            }
            1 if p > 0 && p < n => {
                let a = rng.gen_range(0..p);
                let b = rng.gen_range(p..n);
                if problem.classes[order[b]] != problem.slots[a] {
                    continue;
                }
                (a, b)
            }
            _ if n - p > 1 => (rng.gen_range(p..n), rng.gen_range(p..n)),
            _ => (rng.gen_range(0..n), rng.gen_range(0..n)),
        };
        if a == b {
            continue;
        }
        order.swap(a, b);
        if !problem.feasible(&order[..p.min(n)]) {
            order.swap(a, b);
            continue;
        }
        let from = a.min(b);
        if tail_score(&order, from, &states, &scores) > scores[n] {
            rebuild(&order, from, &mut states, &mut scores);
        } else {
            order.swap(a, b);
        }
    }
    (scores[n], order)
}

/// Depth-first walk of every feasible ordering in lexicographic index order;
/// keeps the first ordering reaching the best score.
fn exhaustive(problem: &Problem) -> (Score, Vec<usize>) {
    struct Walk<'p, 'a> {
        problem: &'p Problem<'a>,
        used: Vec<bool>,
        order: Vec<usize>,
        best: Option<(Score, Vec<usize>)>,
    }
    impl Walk<'_, '_> {
        fn go(&mut self, pool: &PoolState, score: Score) {
            let depth = self.order.len();
            if depth == self.problem.n() {
                if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                    self.best = Some((score, self.order.clone()));
                }
                return;
            }
            for i in 0..self.problem.n() {
                if self.used[i] || (depth < self.problem.prefix() && self.problem.classes[i] != self.problem.slots[depth]) {
                    continue;
                }
                let mut next = pool.clone();
                let mut s = score;
                if let Ok(add) = step(&mut next, &self.problem.txs[i]) {
                    s += add;
                }
                self.used[i] = true;
                self.order.push(i);
                self.go(&next, s);
                self.order.pop();
                self.used[i] = false;
            }
        }
    }
    let mut walk = Walk { problem, used: vec![false; problem.n()], order: Vec::new(), best: None };
    walk.go(problem.pool, Score::default());
    walk.best.expect("feasibility checked before search")
}

fn run_restarts(problem: &Problem, params: &PoeParams) -> (Score, Vec<usize>) {
    let cfg = &params.search;
    let restarts = cfg.restarts.max(1);
    let gas_desc = problem.gas_rank();
    let seed_gas = problem.feasible(&gas_desc[..problem.prefix()]);

    let job = |r: usize| {
        let seed = cfg.seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let start = match r {
            0 => problem.greedy(None),
            1 if seed_gas => gas_desc.clone(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
                problem.greedy(Some(&mut rng))
            }
        };
        local_search(problem, start, cfg.budget, seed)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(Score, Vec<usize>)> = {
        use rayon::prelude::*;
        (0..restarts).into_par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Score, Vec<usize>)> = (0..restarts).map(job).collect();

    let mut candidates = results;
    if seed_gas {
        candidates.push((problem.score(&gas_desc), gas_desc));
    }
    // Highest score, then smallest index sequence: independent of scheduling.
    candidates
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("at least one restart")
}

fn finish(txs: &[MainnetTx], order: &[usize], params: &PoeParams, pool: &PoolState) -> Result<OptimizedBatch, PoeError> {
    let ordered_txs: Vec<MainnetTx> = order.iter().map(|&i| txs[i].clone()).collect();
    let forged = reconstruct_forged(&ordered_txs, params)?;
    debug_assert!(forged.matches(params), "optimizer emitted an ordering that does not forge its targets");
    let score = score_ordering(&ordered_txs, pool);
    Ok(OptimizedBatch { ordered_txs, forged, miner_score: score.miner, volume_score: score.volume })
}

/// Orders `mempool` so the prefix forges `params.targets` and the booster
/// key, maximising (miner fees, volume). Deterministic for fixed inputs and
/// search seed regardless of thread count.
pub fn optimize_batch(mempool: &[MainnetTx], params: &PoeParams, pool: &PoolState) -> Result<OptimizedBatch, PoeError> {
    let txs = dedupe_mempool(mempool);
    let problem = Problem::new(&txs, params, pool)?;
    let (_, order) = if problem.feasible_count() <= params.search.exhaustive_limit as u128 {
        exhaustive(&problem)
    } else {
        run_restarts(&problem, params)
    };
    finish(&txs, &order, params, pool)
}

/// Exact optimum over all permutations; ties go to the earliest permutation
/// in lexicographic order of input positions.
pub fn brute_force_optimize(
    mempool: &[MainnetTx],
    params: &PoeParams,
    pool: &PoolState,
) -> Result<OptimizedBatch, PoeError> {
    let txs = dedupe_mempool(mempool);
    if txs.len() > BRUTE_FORCE_LIMIT {
        return Err(PoeError::TooLarge { limit: BRUTE_FORCE_LIMIT, got: txs.len() });
    }
    let problem = Problem::new(&txs, params, pool)?;
    let mut perm: Vec<usize> = (0..txs.len()).collect();
    let mut best: Option<(Score, Vec<usize>)> = None;
    loop {
        if problem.feasible(&perm) {
            let s = problem.score(&perm);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, perm.clone()));
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, order) = best.expect("feasibility checked before enumeration");
    finish(&txs, &order, params, pool)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("pivot has a larger successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::SearchConfig;
    use super::*;
    use crate::amount::{GasAmount, IntertokenAmount, NativeAmount, Ratio};
    use crate::chainsim::tx::{Direction, TxKind};
    use crate::hash::Hash256;
    use crate::ledger::AccountId;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::Rng;

    fn pool() -> PoolState {
        PoolState::with_inventories(IntertokenAmount::from_int(1_000), NativeAmount::from_int(2_500))
    }

    fn mini(target_bits: &[u8], key: Option<&[u8]>) -> PoeParams {
        PoeParams {
            hash_bits: target_bits.len(),
            bits_per_tx: 1,
            targets: vec![Hash256::from_bits(target_bits.iter().copied())],
            booster_pubkey: key.map(|k| Hash256::from_bits(k.iter().copied())),
            min_batch: 0,
            search: SearchConfig::default(),
        }
    }

    #[test]
    fn next_permutation_is_lexicographic() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen, (0..3).permutations(3).collect::<Vec<_>>());
    }

    #[test]
    fn four_tx_example() {
        let txs: Vec<_> = [0u32, 1, 0, 1]
            .iter()
            .enumerate()
            .map(|(i, &f)| tx_with_bits(i as u64, 1000 * (i as i128 + 1), wide_buy(1_000_000_000_000), 1, f, None))
            .collect();
        let params = mini(&[0, 0, 1, 1], None);
        let feasible: Vec<Vec<usize>> = (0..4)
            .permutations(4)
            .filter(|p| p.iter().zip([0u8, 0, 1, 1]).all(|(&i, want)| txs[i].tx_hash.first_bit() == want))
            .collect();
        assert_eq!(feasible.len(), 4);
        let best_gas = feasible
            .iter()
            .map(|p| p.iter().map(|&i| txs[i].clone()).collect::<Vec<_>>())
            .map(|o| score_ordering(&o, &pool()))
            .max()
            .unwrap();
        let got = optimize_batch(&txs, &params, &pool()).unwrap();
        assert_eq!(got.score(), best_gas);
        assert!(got.forged.matches(&params));
        assert_eq!(brute_force_optimize(&txs, &params, &pool()).unwrap().score(), best_gas);
    }

    #[test]
    fn infeasible_names_first_slot() {
        let txs: Vec<_> = (0..4).map(|i| tx_with_bits(i, 1, wide_buy(1), 1, 0, None)).collect();
        let params = mini(&[1, 0, 0, 0], None);
        assert_eq!(
            optimize_batch(&txs, &params, &pool()),
            Err(PoeError::Infeasible { slot: 0, class: SlotClass { first: 1, last: None } })
        );
    }

    #[test]
    fn dedupe_keeps_highest_gas() {
        let a = MainnetTx::new(AccountId(1), 7, NativeAmount::from_mantissa(5), GasAmount::from_int(100_000), wide_buy(1)).unwrap();
        let mut b = a.clone();
        b.gas_price = NativeAmount::from_mantissa(9);
        let c = MainnetTx::new(AccountId(2), 7, NativeAmount::from_mantissa(1), GasAmount::from_int(100_000), wide_buy(1)).unwrap();
        assert_eq!(dedupe_mempool(&[a, b.clone(), c.clone()]), vec![b, c]);
    }

    #[test]
    fn brute_force_ties_pick_first_permutation() {
        let txs: Vec<_> = (0..3).map(|i| tx_with_bits(i, 1000, wide_buy(1_000_000), 1, 0, None)).collect();
        let params = mini(&[0], None);
        let got = brute_force_optimize(&txs, &params, &pool()).unwrap();
        assert_eq!(got.ordered_txs, txs);
        let one = brute_force_optimize(&txs[..1], &params, &pool()).unwrap();
        assert_eq!(one.score(), score_ordering(&txs[..1], &pool()));
    }

    #[test]
    fn local_search_path_forges_targets() {
        // 64 transactions against a 16-bit target with key forging: too many
        // feasible orderings for the exhaustive walk.
        let key: Vec<u8> = (0..16).map(|i| (i % 3 == 0) as u8).collect();
        let target: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let mut params = mini(&target, Some(&key));
        params.search = SearchConfig { budget: 500, restarts: 3, seed: 11, exhaustive_limit: 0 };
        let txs: Vec<_> = (0..64u64)
            .map(|i| {
                let kind = TxKind::Exchange {
                    direction: if i % 2 == 0 { Direction::BuyIntertoken } else { Direction::SellIntertoken },
                    volume_in: 1_000_000_000_000 * (1 + i as i128 % 5),
                    ratio_min: Ratio::parse_decimal("2.4").unwrap(),
                    ratio_max: Ratio::parse_decimal("2.6").unwrap(),
                };
                tx_with_bits(i, 1000 + (i as i128 * 37) % 500, kind, 1, (i % 2) as u32, Some(((i / 2) % 2) as u32))
            })
            .collect();
        let a = optimize_batch(&txs, &params, &pool()).unwrap();
        assert!(Layout::new(&params).unwrap().satisfied_by(&a.ordered_txs));
        assert!(a.forged.matches(&params));
        assert_eq!(a, optimize_batch(&txs, &params, &pool()).unwrap());
        let greedy = Problem::new(&txs, &params, &pool()).unwrap().greedy(None);
        let greedy_txs: Vec<_> = greedy.iter().map(|&i| txs[i].clone()).collect();
        assert!(a.score() >= score_ordering(&greedy_txs, &pool()));
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<MainnetTx>, PoeParams)> {
        (2usize..=7, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = rng.gen_range(1..=n.min(4));
            let firsts: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let target: Vec<u8> = (0..h).map(|i| firsts[i] as u8).collect();
            let txs = (0..n)
                .map(|i| {
                    let buy = rng.gen_bool(0.5);
                    let centre = 2.5 + rng.gen_range(-0.3..0.3);
                    let kind = TxKind::Exchange {
                        direction: if buy { Direction::BuyIntertoken } else { Direction::SellIntertoken },
                        volume_in: rng.gen_range(1..400) * 1_000_000_000_000,
                        ratio_min: Ratio::from_mantissa(((centre - 0.4) * 1e12) as i128),
                        ratio_max: Ratio::from_mantissa(((centre + 0.2) * 1e12) as i128),
                    };
                    tx_with_bits(i as u64, rng.gen_range(1..20) * 100, kind, 1, firsts[i], None)
                })
                .collect();
            let mut target_perm = target;
            // Shuffle the target so slot classes are not simply the input order.
            for i in (1..target_perm.len()).rev() {
                target_perm.swap(i, rng.gen_range(0..=i));
            }
            (txs, mini(&target_perm, None))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matches_brute_force((txs, params) in arb_instance()) {
            let fast = optimize_batch(&txs, &params, &pool()).unwrap();
            let slow = brute_force_optimize(&txs, &params, &pool()).unwrap();
            prop_assert_eq!(fast.score(), slow.score());
            prop_assert!(fast.forged.matches(&params));
        }

        #[test]
        fn same_class_prefix_swap_stays_feasible((txs, params) in arb_instance(), a in 0usize..4, b in 0usize..4) {
            let batch = optimize_batch(&txs, &params, &pool()).unwrap();
            let layout = Layout::new(&params).unwrap();
            let p = layout.prefix_len();
            let (a, b) = (a % p, b % p);
            let mut ordered = batch.ordered_txs.clone();
            if layout.class_of(&ordered[a]) == layout.class_of(&ordered[b]) {
                ordered.swap(a, b);
                prop_assert!(layout.satisfied_by(&ordered));
            }
        }
    }
}
