//! Mainnet record of alien header hashes forged by boosters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::Hash256;
use crate::listrack::ForgedHashes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeStatus {
    Forged,
    /// The booster's hash disagreed with the alien chain; the height is
    /// forged again in the next block.
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeRecord {
    pub alien_height: u64,
    pub claimed: Hash256,
    pub mainnet_block: u64,
    pub status: ForgeStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeLedger {
    records: BTreeMap<u64, ForgeRecord>,
}

impl ForgeLedger {
    pub fn record(&mut self, rec: ForgeRecord) {
        self.records.insert(rec.alien_height, rec);
    }

    pub fn get(&self, height: u64) -> Option<&ForgeRecord> {
        self.records.get(&height)
    }

    pub fn is_forged(&self, height: u64) -> bool {
        self.records.get(&height).is_some_and(|r| r.status == ForgeStatus::Forged)
    }

    /// Final heights still waiting for a correct forge, oldest first.
    pub fn pending(&self, final_height: u64, limit: usize) -> Vec<u64> {
        let start = self
            .records
            .iter()
            .rev()
            .find(|(_, r)| r.status == ForgeStatus::Forged)
            .map_or(0, |(h, _)| h + 1);
        (start..=final_height).filter(|h| !self.is_forged(*h)).take(limit).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &ForgeRecord> {
        self.records.values()
    }
}

/// Proofs are checked against whatever the booster put on chain, right or wrong.
impl ForgedHashes for ForgeLedger {
    fn forged_hash(&self, height: u64) -> Option<Hash256> {
        self.records.get(&height).map(|r| r.claimed)
    }
}
