//! Burn claims: escrow, assignment to providers, proof settlement,
//! timeouts with slashing, exit penalties and provider key updates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm;
use crate::amount::{decimal, IntertokenAmount, NativeAmount, Ratio, ShareAmount};
use crate::buffer::AccrualSource;
use crate::chainsim::alien::{AlienTx, SpvProof};
use crate::events::{ClaimId, Event, ProviderId};
use crate::hash::Hash256;
use crate::ledger::{AccountId, InsufficientBalance};
use crate::listrack::{self, ForgedHashes, ProofRejection};
use crate::market::Market;
use crate::risk::{Lifecycle, ProviderClass, ProviderPosition};
use crate::sig::Verifier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurnParams {
    /// Blocks a regular provider has to get the transfer proven.
    pub transfer_window: u64,
    /// Same for full providers.
    pub full_window: u64,
    /// Extra blocks for the transfer to become final and forged; set by the
    /// simulator from the alien finality depth.
    pub finality_lag: u64,
    pub cycle_length: u64,
    pub never_liquidity_limit: u64,
    #[serde(with = "decimal")]
    pub p_max: Ratio,
    /// Penalty decay window; one cycle when unset.
    pub decay_window: Option<u64>,
    /// Share of the deposit charged for a key change while a claim is pending.
    #[serde(with = "decimal")]
    pub key_change_penalty: Ratio,
}

impl Default for BurnParams {
    fn default() -> Self {
        BurnParams {
            transfer_window: 3,
            full_window: 1,
            finality_lag: 0,
            cycle_length: 16,
            never_liquidity_limit: 64,
            p_max: Ratio::fraction(5, 100),
            decay_window: None,
            key_change_penalty: Ratio::fraction(1, 100),
        }
    }
}

impl BurnParams {
    pub fn window(&self) -> u64 {
        self.decay_window.unwrap_or(self.cycle_length).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimState {
    Open,
    Assigned,
    Proven,
    Slashed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnClaim {
    pub id: ClaimId,
    pub claimant: AccountId,
    #[serde(with = "decimal")]
    pub amount: IntertokenAmount,
    pub claimant_alien_pubkey: Hash256,
    pub created_block: u64,
    pub assigned_provider: Option<ProviderId>,
    /// Provider key the transfer must come from, fixed at assignment.
    pub provider_alien_pubkey: Option<Hash256>,
    pub assigned_block: Option<u64>,
    pub deadline_block: Option<u64>,
    pub state: ClaimState,
    pub escalated: bool,
}

impl BurnClaim {
    pub fn is_terminal(&self) -> bool {
        matches!(self.state, ClaimState::Proven | ClaimState::Slashed)
    }

    /// Intertoken held in escrow by this claim.
    pub fn escrow(&self) -> IntertokenAmount {
        if self.is_terminal() {
            IntertokenAmount::ZERO
        } else {
            self.amount
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BurnError {
    #[error("claim amount must be positive")]
    ZeroAmount,
    #[error(transparent)]
    Funds(#[from] InsufficientBalance),
    #[error("{0} does not exist")]
    UnknownClaim(ClaimId),
    #[error("{0} is not awaiting a proof")]
    NotAssigned(ClaimId),
    #[error("alien transfer already used for another claim")]
    Replayed,
    #[error("{0}")]
    Rejected(#[from] ProofRejection),
    #[error("{0} is not an open position")]
    StalePosition(ProviderId),
}

/// Claims plus the set of alien transfers already spent on settlements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnBook {
    pub claims: BTreeMap<ClaimId, BurnClaim>,
    next_claim: u64,
    used_transfers: BTreeSet<Hash256>,
}

impl BurnBook {
    pub fn escrow_total(&self) -> IntertokenAmount {
        self.claims.values().map(BurnClaim::escrow).sum()
    }

    pub fn open_volume(&self) -> IntertokenAmount {
        self.claims.values().filter(|c| c.state == ClaimState::Open).map(|c| c.amount).sum()
    }

    pub fn claim(&self, id: ClaimId) -> Option<&BurnClaim> {
        self.claims.get(&id)
    }

    /// Puts a claim whose provider left back in the open queue.
    pub fn reopen(&mut self, id: ClaimId) {
        if let Some(c) = self.claims.get_mut(&id).filter(|c| c.state == ClaimState::Assigned) {
            c.state = ClaimState::Open;
            c.assigned_provider = None;
            c.provider_alien_pubkey = None;
            c.assigned_block = None;
            c.deadline_block = None;
        }
    }
}

/// Escrows `amount` of the user's intertoken against an alien payout.
pub fn claim_burn(
    book: &mut BurnBook,
    market: &mut Market,
    user: AccountId,
    amount: IntertokenAmount,
    alien_pubkey: Hash256,
    block: u64,
) -> Result<ClaimId, BurnError> {
    if !amount.is_positive() {
        return Err(BurnError::ZeroAmount);
    }
    market.wallets.debit_intertoken(user, amount)?;
    let id = ClaimId(book.next_claim);
    book.next_claim += 1;
    book.claims.insert(
        id,
        BurnClaim {
            id,
            claimant: user,
            amount,
            claimant_alien_pubkey: alien_pubkey,
            created_block: block,
            assigned_provider: None,
            provider_alien_pubkey: None,
            assigned_block: None,
            deadline_block: None,
            state: ClaimState::Open,
            escalated: false,
        },
    );
    Ok(id)
}

/// Rotation view over the live positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnQueue {
    /// Full providers, then regulars; each group by rotation key.
    pub full: Vec<ProviderId>,
    pub rotation: Vec<ProviderId>,
    #[serde(with = "decimal")]
    pub burning_appetite: IntertokenAmount,
}

/// A provider's place in the rotation: the block it last served, or the
/// block it joined if it never has.
fn rotation_key(p: &ProviderPosition) -> (u64, ProviderId) {
    (p.last_assigned.unwrap_or(p.join_block), p.id)
}

impl BurnQueue {
    pub fn build(positions: &BTreeMap<ProviderId, ProviderPosition>, book: &BurnBook) -> BurnQueue {
        let mut active: Vec<&ProviderPosition> =
            positions.values().filter(|p| p.lifecycle == Lifecycle::Active).collect();
        active.sort_by_key(|p| rotation_key(p));
        let pick = |class| active.iter().filter(|p| p.class == class).map(|p| p.id).collect();
        BurnQueue {
            full: pick(ProviderClass::Full),
            rotation: pick(ProviderClass::Regular),
            burning_appetite: book.open_volume(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub claim: ClaimId,
    pub provider: ProviderId,
    pub deadline: u64,
}

fn eligible(p: &ProviderPosition, amount: IntertokenAmount) -> bool {
    p.lifecycle == Lifecycle::Active && p.burn_claim.is_none() && p.flag_deadline.is_none() && p.minted >= amount
}

/// Matches open claims, oldest first, to providers: regulars idle past the
/// never-liquidity limit, then full providers, then the regular rotation.
/// Pure: reads state, returns the plan.
pub fn plan_assignments(
    positions: &BTreeMap<ProviderId, ProviderPosition>,
    book: &BurnBook,
    block: u64,
    params: &BurnParams,
) -> Vec<Assignment> {
    let queue = BurnQueue::build(positions, book);
    let overdue = |id: &ProviderId| {
        let p = &positions[id];
        block.saturating_sub(rotation_key(p).0) >= params.never_liquidity_limit
    };
    let order: Vec<ProviderId> = queue
        .rotation
        .iter()
        .filter(|id| overdue(id))
        .chain(queue.full.iter())
        .chain(queue.rotation.iter().filter(|id| !overdue(id)))
        .copied()
        .collect();
    let mut taken = BTreeSet::new();
    let mut plan = Vec::new();
    for claim in book.claims.values().filter(|c| c.state == ClaimState::Open) {
        let found = order
            .iter()
            .find(|id| !taken.contains(*id) && eligible(&positions[*id], claim.amount));
        if let Some(&provider) = found {
            taken.insert(provider);
            let window = match positions[&provider].class {
                ProviderClass::Full => params.full_window,
                ProviderClass::Regular => params.transfer_window,
            };
            plan.push(Assignment { claim: claim.id, provider, deadline: block + window + params.finality_lag });
        }
    }
    plan
}

/// Applies the plan; claims left open are escalated once.
pub fn assign_claims(book: &mut BurnBook, market: &mut Market, block: u64, params: &BurnParams) -> Vec<Event> {
    let plan = plan_assignments(&market.positions, book, block, params);
    let mut events = Vec::new();
    for a in &plan {
        let pos = market.positions.get_mut(&a.provider).expect("planned from live positions");
        pos.burn_claim = Some(a.claim);
        pos.last_assigned = Some(block);
        let claim = book.claims.get_mut(&a.claim).expect("planned from open claims");
        claim.state = ClaimState::Assigned;
        claim.assigned_provider = Some(a.provider);
        claim.provider_alien_pubkey = Some(pos.alien_pubkey);
        claim.assigned_block = Some(block);
        claim.deadline_block = Some(a.deadline);
        events.push(Event::BurnAssigned { claim: a.claim, provider: a.provider, deadline: a.deadline });
    }
    for c in book.claims.values_mut().filter(|c| c.state == ClaimState::Open && !c.escalated) {
        c.escalated = true;
        events.push(Event::BurnEscalation { claim: c.id });
    }
    events
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settled {
    pub provider: ProviderId,
    pub released_collateral: NativeAmount,
    pub unlocked_coins: ShareAmount,
}

/// Verifies the provider's alien transfer and, on success, burns the escrow
/// and releases the pro-rata share of collateral. A proof whose header folds
/// correctly but disagrees with the forged hash raises a forgery alarm.
#[allow(clippy::too_many_arguments)]
pub fn settle_burn_proof(
    book: &mut BurnBook,
    market: &mut Market,
    claim_id: ClaimId,
    raw_tx: &AlienTx,
    proof: &SpvProof,
    forged: &impl ForgedHashes,
    verifier: &impl Verifier,
    alarms: &mut Vec<Event>,
) -> Result<Settled, BurnError> {
    let claim = book.claims.get(&claim_id).ok_or(BurnError::UnknownClaim(claim_id))?;
    let (Some(provider), Some(sender), ClaimState::Assigned) =
        (claim.assigned_provider, claim.provider_alien_pubkey, claim.state)
    else {
        return Err(BurnError::NotAssigned(claim_id));
    };
    if book.used_transfers.contains(&raw_tx.leaf_hash()) {
        return Err(BurnError::Replayed);
    }
    let verdict = listrack::verify_transfer(
        raw_tx,
        proof,
        &sender,
        &claim.claimant_alien_pubkey,
        claim.amount.cast(),
        forged,
        verifier,
    );
    if verdict == Err(ProofRejection::HeaderMismatch) {
        if let Some(booster_hash) = forged.forged_hash(proof.block_height) {
            alarms.push(Event::ForgeryAlarm {
                alien_height: proof.block_height,
                booster_hash,
                provider_hash: proof.header_hash(),
            });
        }
    }
    verdict?;

    let amount = claim.amount;
    let pos = market.positions.get_mut(&provider).ok_or(BurnError::StalePosition(provider))?;
    let release = share_of(pos.collateral.mantissa(), amount, pos.minted);
    let unlock = share_of(pos.interpool_coins.mantissa() - pos.unlocked_coins.mantissa(), amount, pos.minted);
    let released_collateral = NativeAmount::from_mantissa(release);
    let unlocked_coins = ShareAmount::from_mantissa(unlock);
    pos.collateral -= released_collateral;
    pos.unlocked_coins += unlocked_coins;
    pos.minted = (pos.minted - amount).clamp_non_negative();
    pos.burn_claim = None;
    if pos.minted.is_zero() {
        pos.lifecycle = Lifecycle::Completed;
    }
    let account = pos.account;
    market.wallets.credit_native(account, released_collateral);
    market.buffer.burn_escrow(amount, &mut market.pool.supply);
    book.used_transfers.insert(raw_tx.leaf_hash());
    book.claims.get_mut(&claim_id).expect("looked up above").state = ClaimState::Proven;
    Ok(Settled { provider, released_collateral, unlocked_coins })
}

/// `total · amount / owed`, everything when the claim covers the whole obligation.
fn share_of(total: i128, amount: IntertokenAmount, owed: IntertokenAmount) -> i128 {
    if amount >= owed || !owed.is_positive() {
        return total.max(0);
    }
    amm::mul_div_floor(total.max(0), amount.mantissa(), owed.mantissa()).unwrap_or(0)
}

/// Slashes every assigned claim whose deadline has arrived. The claimant is
/// paid the claim's native value out of the slash, topped up from the buffer.
pub fn timeout_burns(book: &mut BurnBook, market: &mut Market, block: u64, ratio: Option<Ratio>) -> Vec<Event> {
    let mut events = Vec::new();
    let due: Vec<ClaimId> = book
        .claims
        .values()
        .filter(|c| c.state == ClaimState::Assigned && c.deadline_block.is_some_and(|d| block >= d))
        .map(|c| c.id)
        .collect();
    for id in due {
        let claim = book.claims.get_mut(&id).expect("collected above");
        let provider = claim.assigned_provider.expect("assigned claims carry a provider");
        let value = ratio.and_then(|r| claim.amount.to_native(r).ok()).unwrap_or_default();
        let slashed = match market.positions.get_mut(&provider) {
            Some(pos) => {
                let s = value.min(pos.collateral).clamp_non_negative();
                pos.collateral -= s;
                pos.minted = (pos.minted - claim.amount).clamp_non_negative();
                pos.burn_claim = None;
                if pos.minted.is_zero() && pos.lifecycle == Lifecycle::Active {
                    pos.lifecycle = Lifecycle::Completed;
                }
                s
            }
            None => NativeAmount::ZERO,
        };
        market.buffer.accrue_native(slashed, AccrualSource::CollateralSlash);
        let paid = value.min(market.buffer.native_stack);
        market.buffer.native_stack -= paid;
        market.wallets.credit_native(claim.claimant, paid);
        market.buffer.burn_escrow(claim.amount, &mut market.pool.supply);
        claim.state = ClaimState::Slashed;
        events.push(Event::BurnSlashed { claim: id, provider, value, slashed, paid_to_claimant: paid });
        if value > slashed {
            events.push(Event::BurnShortfall {
                claim: id,
                covered_by_buffer: paid - slashed.min(paid),
                unpaid: value - paid,
            });
        }
    }
    events
}

/// `p_max · max(0, 1 − Δ/W) · deposit`, floored to the grid.
pub fn penalty_for(delta: u64, window: u64, deposit: NativeAmount, p_max: Ratio) -> NativeAmount {
    if delta >= window || window == 0 {
        return NativeAmount::ZERO;
    }
    let max = deposit.scale(p_max).unwrap_or_default();
    let left = (window - delta) as i128;
    NativeAmount::from_mantissa(amm::mul_div_floor(max.mantissa(), left, window as i128).unwrap_or(0))
}

/// Blocks until the position is expected to be handed a claim: zero for
/// full providers and anyone already serving, otherwise one cycle per
/// regular provider ahead of it in the rotation.
pub fn projected_delta(position: &ProviderPosition, queue: &BurnQueue, params: &BurnParams) -> u64 {
    if position.class == ProviderClass::Full || position.burn_claim.is_some() {
        return 0;
    }
    let rank = queue.rotation.iter().position(|id| *id == position.id).unwrap_or(queue.rotation.len());
    rank as u64 * params.cycle_length
}

pub fn early_exit_penalty(
    position: &ProviderPosition,
    positions: &BTreeMap<ProviderId, ProviderPosition>,
    book: &BurnBook,
    params: &BurnParams,
) -> NativeAmount {
    let queue = BurnQueue::build(positions, book);
    let delta = projected_delta(position, &queue, params);
    penalty_for(delta, params.window(), position.deposit, params.p_max)
}

/// Changes the provider's alien key. Free when no claim is pending;
/// otherwise a share of the deposit moves from collateral to the buffer and
/// the pending claim still expects the old key.
pub fn update_alien_key(
    market: &mut Market,
    provider: ProviderId,
    new_key: Hash256,
    params: &BurnParams,
) -> Result<Event, BurnError> {
    let pos = market
        .positions
        .get_mut(&provider)
        .filter(|p| p.is_live())
        .ok_or(BurnError::StalePosition(provider))?;
    let penalty = if pos.burn_claim.is_some() {
        pos.deposit.scale(params.key_change_penalty).unwrap_or_default().min(pos.collateral).clamp_non_negative()
    } else {
        NativeAmount::ZERO
    };
    pos.collateral -= penalty;
    pos.alien_pubkey = new_key;
    market.buffer.accrue_native(penalty, AccrualSource::Penalty);
    Ok(Event::KeyUpdated { provider, new_key, penalty })
}
