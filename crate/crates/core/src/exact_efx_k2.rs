//! Exact EFX for `{1, 2}`-instances by single-item swaps and moves between
//! the top and bottom earning tiers.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market_init::Transfer;
use crate::model::{Agent, Item, MarketState};
use crate::rational::Rational;
use crate::verify::{check_equilibrium, check_pef1, CostTable};

/// Agents grouped by earning `z`, `z + 1` and `z + 2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TierView {
    pub z: Rational,
    tier: Vec<u8>,
}

impl TierView {
    /// 0, 1 or 2: offset of the agent's earning above `z`.
    pub fn tier(&self, agent: Agent) -> u8 {
        self.tier[agent]
    }

    pub fn members(&self, offset: u8) -> Vec<Agent> {
        (0..self.tier.len()).filter(|&i| self.tier[i] == offset).collect()
    }
}

fn require_k_two(market: &MarketState) -> Result<()> {
    if market.k() != Rational::integer(2) {
        return Err(Error::RequiresKTwo(market.k()));
    }
    Ok(())
}

/// Tiers around the current minimum earning.
pub fn earning_tiers(market: &MarketState) -> Result<TierView> {
    require_k_two(market)?;
    let z = market.earnings().into_iter().min().expect("at least one agent");
    tiers_at(market, z)
}

/// Tiers around a fixed base `z`; every earning must be `z`, `z + 1` or
/// `z + 2`, and every top-tier agent must hold a high-payment item.
pub fn tiers_at(market: &MarketState, z: Rational) -> Result<TierView> {
    let mut tier = Vec::with_capacity(market.agents());
    for i in 0..market.agents() {
        let p = market.earning(i);
        let offset = (0u8..3).find(|&t| p == z + Rational::from(t as u32));
        let Some(offset) = offset else {
            return Err(Error::TierViolation { agent: i, earning: p, z });
        };
        if offset == 2 && !market.is_high_agent(i) {
            return Err(Error::LemmaViolation(format!(
                "top-tier agent {} holds no high-payment item",
                i + 1
            )));
        }
        tier.push(offset);
    }
    Ok(TierView { z, tier })
}

/// Smallest `i` that is not EFX towards some agent, paired with the smallest
/// such `j`. On a hit, asserts: `i` top tier and unraised, `j` bottom tier
/// and unraised, `X_i` holds both payment levels, `X_j ⊆ MPB_i`.
pub fn efx_violation(market: &MarketState, tiers: &TierView, unraised: &[bool]) -> Result<Option<(Agent, Agent)>> {
    let table = CostTable::new(market.instance(), market.allocation());
    let n = market.agents();
    let hit = (0..n).find_map(|i| {
        (0..n)
            .find(|&j| j != i && table.violates_efx(i, j, Rational::ONE))
            .map(|j| (i, j))
    });
    let Some((i, j)) = hit else { return Ok(None) };
    let fail = |what: &str| {
        Err(Error::LemmaViolation(format!(
            "agent {} is not EFX towards agent {} but {what}",
            i + 1,
            j + 1
        )))
    };
    if tiers.tier(i) != 2 || !unraised[i] {
        return fail("the envier is not an unraised top-tier agent");
    }
    if tiers.tier(j) != 0 || !unraised[j] {
        return fail("the envied agent is not an unraised bottom-tier agent");
    }
    if market.high_count(i) == 0 || market.low_count(i) == 0 {
        return fail("the envier does not hold both payment levels");
    }
    if market.bundle(j).any(|e| !market.is_mpb(i, e)) {
        return fail("the envied bundle is not inside the envier's MPB set");
    }
    Ok(Some((i, j)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum K2Branch {
    Swap,
    Move,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct K2Round {
    pub round: usize,
    pub envier: Agent,
    pub target: Agent,
    pub branch: K2Branch,
    /// Payment-2 item leaving the envier.
    pub item_out: Item,
    /// Payment-1 item the envier receives on a swap.
    pub item_in: Option<Item>,
    pub earnings_before: (Rational, Rational),
    pub earnings_after: (Rational, Rational),
    /// Top-tier agents holding both payment levels, after the round.
    pub eta: usize,
    pub transfers: Vec<Transfer>,
}

/// Swaps the envier's smallest payment-2 item for the target's smallest
/// payment-1 item, or moves it over when the target holds none.
pub fn k2_round(market: &mut MarketState, i: Agent, j: Agent, round: usize) -> Result<K2Round> {
    let e_i = market
        .bundle(i)
        .find(|&e| market.payments().is_high(e))
        .ok_or_else(|| Error::PreconditionViolated(format!("agent {} holds no payment-2 item", i + 1)))?;
    let e_j = market.bundle(j).find(|&e| !market.payments().is_high(e));
    if !market.is_mpb(j, e_i) {
        return Err(Error::MpbViolation { agent: j, item: e_i, context: "k = 2 round, item to target" });
    }
    if let Some(e) = e_j {
        if !market.is_mpb(i, e) {
            return Err(Error::MpbViolation { agent: i, item: e, context: "k = 2 round, item to envier" });
        }
    }
    let earnings_before = (market.earning(i), market.earning(j));
    let mut transfers = Vec::with_capacity(2);
    market.move_item(e_i, j);
    transfers.push(Transfer { item: e_i, from: i, to: j });
    if let Some(e) = e_j {
        market.move_item(e, i);
        transfers.push(Transfer { item: e, from: j, to: i });
    }
    let branch = if e_j.is_some() { K2Branch::Swap } else { K2Branch::Move };
    let earnings_after = (market.earning(i), market.earning(j));
    let z = earnings_before.1;
    let expected = match branch {
        K2Branch::Swap => (z + Rational::ONE, z + Rational::ONE),
        K2Branch::Move => (z, z + Rational::integer(2)),
    };
    if earnings_after != expected {
        return Err(Error::PreconditionViolated(format!(
            "round {round} left earnings {} and {}, expected {} and {}",
            earnings_after.0, earnings_after.1, expected.0, expected.1
        )));
    }
    if branch == K2Branch::Move && market.low_count(j) != 0 {
        return Err(Error::PreconditionViolated(format!("agent {} keeps a payment-1 item after a move", j + 1)));
    }
    Ok(K2Round {
        round,
        envier: i,
        target: j,
        branch,
        item_out: e_i,
        item_in: e_j,
        earnings_before,
        earnings_after,
        eta: 0,
        transfers,
    })
}

/// Top-tier agents holding both payment levels.
pub fn eta_top(market: &MarketState, tiers: &TierView) -> usize {
    (0..market.agents())
        .filter(|&i| tiers.tier(i) == 2 && market.high_count(i) > 0 && market.low_count(i) > 0)
        .count()
}

#[derive(Clone, Debug)]
pub struct K2Outcome {
    pub market: MarketState,
    pub z: Rational,
    pub rounds: Vec<K2Round>,
}

/// Runs swap/move rounds until the allocation is EFX. `unraised` marks the
/// agents whose payments the pEF1 loop never raised.
pub fn run_efx_k2(mut market: MarketState, unraised: &[bool]) -> Result<K2Outcome> {
    require_k_two(&market)?;
    if !check_equilibrium(&market).holds() {
        return Err(Error::PreconditionViolated("input is not an equilibrium".into()));
    }
    if !check_pef1(&market).holds() {
        return Err(Error::PreconditionViolated("input is not pEF1".into()));
    }
    let n = market.agents();
    let tiers = earning_tiers(&market)?;
    let z = tiers.z;
    let raised_bundles: Vec<(Agent, Vec<Item>)> = (0..n)
        .filter(|&i| !unraised[i])
        .map(|i| (i, market.bundle(i).collect()))
        .collect();
    let mut eta = eta_top(&market, &tiers);
    let mut rounds = Vec::new();
    let mut tiers = tiers;
    while let Some((i, j)) = efx_violation(&market, &tiers, unraised)? {
        if rounds.len() == n {
            return Err(Error::RoundCapExceeded { phase: "exact EFX", cap: n });
        }
        let mut round = k2_round(&mut market, i, j, rounds.len() + 1)?;
        tiers = check_round_invariants(&market, z)?;
        let next = eta_top(&market, &tiers);
        if next + 1 != eta {
            return Err(Error::LemmaViolation(format!(
                "top-tier mixed agents went from {eta} to {next} in round {}",
                round.round
            )));
        }
        eta = next;
        round.eta = next;
        rounds.push(round);
    }
    for (i, bundle) in &raised_bundles {
        if !market.bundle(*i).eq(bundle.iter().copied()) {
            return Err(Error::LemmaViolation(format!("raised agent {} had its bundle changed", i + 1)));
        }
    }
    Ok(K2Outcome { market, z, rounds })
}

fn check_round_invariants(market: &MarketState, z: Rational) -> Result<TierView> {
    if let Some(w) = check_equilibrium(market).witness() {
        return Err(Error::MpbViolation {
            agent: w.agent,
            item: w.item.unwrap_or(0),
            context: "exact EFX equilibrium",
        });
    }
    if let Some(w) = check_pef1(market).witness() {
        return Err(Error::LemmaViolation(format!(
            "pEF1 lost: agent {} towards agent {}",
            w.agent + 1,
            w.other + 1
        )));
    }
    tiers_at(market, z)
}
