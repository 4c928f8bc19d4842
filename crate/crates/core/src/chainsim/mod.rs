//! Simulated alien chain, forge ledger and mainnet block pipeline.

pub mod alien;
pub mod forge;
pub mod tx;
pub mod world;
