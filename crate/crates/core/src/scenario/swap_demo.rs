//! The two-party swap walked through end to end: Mike pays native coins on
//! the mainnet, Alice pays alien coins and proves it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::amount::{decimal, AlienAmount, NativeAmount};
use crate::chainsim::alien::{make_spv_proof, AlienChain, AlienTx};
use crate::hash::Hash256;
use crate::ledger::{AccountId, Wallets};
use crate::listrack::{open_swap, SwapOutcome, SwapState, SwapTerms, DEFAULT_SWAP_DEADLINE};
use crate::sig::{KeyPair, KeyRegistry};

pub const MIKE: AccountId = AccountId(1);
pub const ALICE: AccountId = AccountId(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances {
    #[serde(with = "decimal")]
    pub mike_native: NativeAmount,
    #[serde(with = "decimal")]
    pub alice_native: NativeAmount,
    #[serde(with = "decimal")]
    pub mike_alien: AlienAmount,
    #[serde(with = "decimal")]
    pub alice_alien: AlienAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapStep {
    pub block: u64,
    pub action: String,
    pub state: SwapState,
    pub balances: Balances,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapTrace {
    pub path: String,
    pub steps: Vec<SwapStep>,
    pub outcome: SwapOutcome,
}

struct Parties {
    registry: KeyRegistry,
    mike: KeyPair,
    alice: KeyPair,
    mike_alien: KeyPair,
    alice_alien: KeyPair,
}

fn parties() -> Parties {
    let [mike, alice, mike_alien, alice_alien] = ["mike", "alice", "mike-alien", "alice-alien"].map(KeyPair::derive);
    let mut registry = KeyRegistry::new();
    for k in [&mike, &alice, &mike_alien, &alice_alien] {
        registry.register(k);
    }
    Parties { registry, mike, alice, mike_alien, alice_alien }
}

/// Runs the swap with Mike paying 25 native for 10 alien coins and Alice
/// posting 25 native collateral. With `alice_pays` false nobody proves a
/// transfer and the swap expires.
pub fn run_swap_demo(alice_pays: bool) -> SwapTrace {
    let p = parties();
    let mut chain = AlienChain::new();
    chain.fund(p.alice_alien.pubkey, AlienAmount::from_int(50));
    let mut wallets = Wallets::default();
    wallets.credit_native(MIKE, NativeAmount::from_int(100));
    wallets.credit_native(ALICE, NativeAmount::from_int(100));
    let mut forged: BTreeMap<u64, Hash256> = BTreeMap::new();
    forged.insert(0, chain.block(0).expect("genesis").header_hash);

    let terms = SwapTerms {
        mike_account: MIKE,
        alice_account: ALICE,
        mike_pubkey_mainnet: p.mike.pubkey,
        alice_pubkey_mainnet: p.alice.pubkey,
        mike_pubkey_alien: p.mike_alien.pubkey,
        alice_pubkey_alien: p.alice_alien.pubkey,
        volume_native: NativeAmount::from_int(25),
        volume_alien: AlienAmount::from_int(10),
    };
    let payload = terms.signing_payload();
    let mut steps = Vec::new();
    let snapshot = |wallets: &Wallets, chain: &AlienChain| Balances {
        mike_native: wallets.native(MIKE),
        alice_native: wallets.native(ALICE),
        mike_alien: chain.balance(&p.mike_alien.pubkey),
        alice_alien: chain.balance(&p.alice_alien.pubkey),
    };
    steps.push(SwapStep {
        block: 0,
        action: "agreed".into(),
        state: SwapState::Agreed,
        balances: snapshot(&wallets, &chain),
    });

    let opened = 1;
    let mut swap = open_swap(
        terms.clone(),
        &p.mike.sign(&payload),
        &p.alice.sign(&payload),
        terms.volume_native,
        terms.volume_native,
        opened + DEFAULT_SWAP_DEADLINE,
        &p.registry,
        &mut wallets,
    )
    .expect("demo terms are valid");
    steps.push(SwapStep { block: opened, action: "locked".into(), state: swap.state, balances: snapshot(&wallets, &chain) });

    let outcome = if alice_pays {
        let tx = AlienTx::signed(&p.alice_alien, p.mike_alien.pubkey, terms.volume_alien, 0);
        let (block, _) = chain.mine_alien_block(vec![tx.clone()], &p.registry);
        let (height, header) = (block.height, block.header_hash);
        let proof = make_spv_proof(block, 0).expect("one tx");
        forged.insert(height, header);
        steps.push(SwapStep {
            block: 2,
            action: format!("alien transfer mined at height {height} and forged"),
            state: swap.state,
            balances: snapshot(&wallets, &chain),
        });
        let outcome = swap
            .submit_alien_proof(&tx, &proof, &forged, &p.registry, 3, &mut wallets)
            .expect("honest proof verifies");
        steps.push(SwapStep { block: 3, action: "proof accepted".into(), state: swap.state, balances: snapshot(&wallets, &chain) });
        outcome
    } else {
        let block = swap.deadline_block + 1;
        let outcome = swap.expire(block, &mut wallets);
        steps.push(SwapStep { block, action: "deadline passed".into(), state: swap.state, balances: snapshot(&wallets, &chain) });
        outcome
    };
    SwapTrace { path: if alice_pays { "happy" } else { "slash" }.into(), steps, outcome }
}
