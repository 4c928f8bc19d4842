//! Interpool: a simulated cross-chain liquidity pool with proof-of-efficiency
//! block-hash forging.

pub mod amm;
pub mod amount;
pub mod buffer;
pub mod burncycle;
pub mod chainsim;
pub mod codec;
pub mod events;
pub mod hash;
pub mod ledger;
pub mod listrack;
pub mod market;
pub mod poe;
pub mod risk;
pub mod scenario;
pub mod sig;
