//! Ordered per-block event log. Serialised into block reports.

use serde::{Deserialize, Serialize};

use crate::amm::FeeMethod;
use crate::amount::{decimal, IntertokenAmount, NativeAmount, Ratio};
use crate::buffer::Deployment;
use crate::hash::Hash256;
use crate::ledger::AccountId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ProviderId(pub u64);

impl std::fmt::Display for ProviderId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "provider#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ClaimId(pub u64);

impl std::fmt::Display for ClaimId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "claim#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Joined {
        provider: ProviderId,
        account: AccountId,
        #[serde(with = "decimal")]
        deposit: NativeAmount,
        #[serde(with = "decimal")]
        minted: IntertokenAmount,
        #[serde(with = "decimal")]
        ratio: Ratio,
    },
    JoinRejected {
        account: AccountId,
        reason: String,
    },
    InjectionRequested {
        provider: ProviderId,
        #[serde(with = "decimal")]
        amount: NativeAmount,
        deadline: u64,
    },
    CollateralInjected {
        provider: ProviderId,
        #[serde(with = "decimal")]
        amount: NativeAmount,
    },
    Liquidated {
        provider: ProviderId,
        #[serde(with = "decimal")]
        refund: NativeAmount,
        #[serde(with = "decimal")]
        risky_intertoken: IntertokenAmount,
        #[serde(with = "decimal")]
        risky_native: NativeAmount,
        #[serde(with = "decimal")]
        removed_intertoken: IntertokenAmount,
        #[serde(with = "decimal")]
        removed_native: NativeAmount,
        #[serde(with = "decimal")]
        pool_intertoken_before: IntertokenAmount,
        #[serde(with = "decimal")]
        pool_native_before: NativeAmount,
        #[serde(with = "decimal::option")]
        ratio_after: Option<Ratio>,
    },
    Withdrawn {
        provider: ProviderId,
        #[serde(with = "decimal")]
        refund: NativeAmount,
        #[serde(with = "decimal")]
        penalty: NativeAmount,
        #[serde(with = "decimal")]
        risky_intertoken: IntertokenAmount,
        #[serde(with = "decimal")]
        risky_native: NativeAmount,
    },
    BurnRequested {
        claim: ClaimId,
        claimant: AccountId,
        #[serde(with = "decimal")]
        amount: IntertokenAmount,
    },
    BurnAssigned {
        claim: ClaimId,
        provider: ProviderId,
        deadline: u64,
    },
    BurnEscalation {
        claim: ClaimId,
    },
    BurnProven {
        claim: ClaimId,
        provider: ProviderId,
        #[serde(with = "decimal")]
        released_collateral: NativeAmount,
    },
    BurnRejected {
        claim: ClaimId,
        reason: String,
    },
    BurnSlashed {
        claim: ClaimId,
        provider: ProviderId,
        #[serde(with = "decimal")]
        value: NativeAmount,
        #[serde(with = "decimal")]
        slashed: NativeAmount,
        #[serde(with = "decimal")]
        paid_to_claimant: NativeAmount,
    },
    BurnShortfall {
        claim: ClaimId,
        #[serde(with = "decimal")]
        covered_by_buffer: NativeAmount,
        #[serde(with = "decimal")]
        unpaid: NativeAmount,
    },
    KeyUpdated {
        provider: ProviderId,
        new_key: Hash256,
        #[serde(with = "decimal")]
        penalty: NativeAmount,
    },
    ForgeryAlarm {
        alien_height: u64,
        booster_hash: Hash256,
        provider_hash: Hash256,
    },
    Forged {
        alien_heights: Vec<u64>,
    },
    MissedForge {
        alien_heights: Vec<u64>,
        claimed: Vec<Hash256>,
        actual: Vec<Hash256>,
    },
    BoosterPaid {
        booster: AccountId,
        #[serde(with = "decimal")]
        amount: IntertokenAmount,
    },
    BoosterDeferred {
        booster: AccountId,
        #[serde(with = "decimal")]
        amount: IntertokenAmount,
    },
    ProvidersPaid {
        recipients: usize,
        #[serde(with = "decimal")]
        total: NativeAmount,
    },
    FeeMethodSwitched {
        to: FeeMethod,
    },
    BufferDeployed {
        deployment: Deployment,
        volatility: f64Bits,
    },
    Shock {
        #[serde(with = "decimal")]
        target: Ratio,
        #[serde(with = "decimal::option")]
        achieved: Option<Ratio>,
    },
}

/// f64 wrapper with bitwise equality so events stay `Eq`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
#[allow(non_camel_case_types)]
pub struct f64Bits(pub f64);

impl PartialEq for f64Bits {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for f64Bits {}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Joined { .. } => "joined",
            Event::JoinRejected { .. } => "join_rejected",
            Event::InjectionRequested { .. } => "injection_requested",
            Event::CollateralInjected { .. } => "collateral_injected",
            Event::Liquidated { .. } => "liquidated",
            Event::Withdrawn { .. } => "withdrawn",
            Event::BurnRequested { .. } => "burn_requested",
            Event::BurnAssigned { .. } => "burn_assigned",
            Event::BurnEscalation { .. } => "burn_escalation",
            Event::BurnProven { .. } => "burn_proven",
            Event::BurnRejected { .. } => "burn_rejected",
            Event::BurnSlashed { .. } => "burn_slashed",
            Event::BurnShortfall { .. } => "burn_shortfall",
            Event::KeyUpdated { .. } => "key_updated",
            Event::ForgeryAlarm { .. } => "forgery_alarm",
            Event::Forged { .. } => "forged",
            Event::MissedForge { .. } => "missed_forge",
            Event::BoosterPaid { .. } => "booster_paid",
            Event::BoosterDeferred { .. } => "booster_deferred",
            Event::ProvidersPaid { .. } => "providers_paid",
            Event::FeeMethodSwitched { .. } => "fee_method_switched",
            Event::BufferDeployed { .. } => "buffer_deployed",
            Event::Shock { .. } => "shock",
        }
    }
}
