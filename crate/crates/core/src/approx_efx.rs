//! `(2 − 1/k)`-EFX from a pEF1 `{1, k}`-payment equilibrium by swapping a
//! strong envier's single high-payment item for the envied agent's whole
//! bundle. Payments never change.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market_init::Transfer;
use crate::model::{Agent, Item, MarketState};
use crate::rational::Rational;
use crate::verify::{check_equilibrium, check_pef1, min_beta_pefx, CostTable};

/// `2 − 1/k`.
pub fn approx_factor(k: Rational) -> Rational {
    Rational::integer(2) - k.recip()
}

#[derive(Clone, Debug)]
pub struct ApproxContext {
    market: MarketState,
    z: Option<Rational>,
    round: usize,
}

impl ApproxContext {
    pub fn new(market: MarketState) -> Self {
        ApproxContext { market, z: None, round: 0 }
    }

    pub fn market(&self) -> &MarketState {
        &self.market
    }

    pub fn into_market(self) -> MarketState {
        self.market
    }

    /// Minimum `N_L` earning fixed at entry; `None` when the loop was skipped.
    pub fn z(&self) -> Option<Rational> {
        self.z
    }

    pub fn rounds(&self) -> usize {
        self.round
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproxRound {
    pub round: usize,
    pub envier: Agent,
    pub target: Agent,
    /// The envier's high-payment item, handed to the target.
    pub item: Item,
    /// The target's former bundle, handed to the envier.
    pub bundle: Vec<Item>,
    pub earnings_before: (Rational, Rational),
    pub earnings_after: (Rational, Rational),
    pub transfers: Vec<Transfer>,
}

/// Among the agents `i` strongly envies (cost test with factor `2 − 1/k`),
/// the one with minimum earning, ties to the smallest index.
pub fn strong_envy_target(market: &MarketState, i: Agent) -> Option<Agent> {
    let table = CostTable::new(market.instance(), market.allocation());
    target_in(&table, market, i)
}

fn target_in(table: &CostTable, market: &MarketState, i: Agent) -> Option<Agent> {
    let beta = approx_factor(market.k());
    (0..market.agents())
        .filter(|&j| j != i && table.violates_efx(i, j, beta))
        .min_by_key(|&j| (market.earning(j), j))
}

/// Smallest-index strong envier and its target.
pub fn find_strong_envy(market: &MarketState) -> Option<(Agent, Agent)> {
    let table = CostTable::new(market.instance(), market.allocation());
    (0..market.agents()).find_map(|i| target_in(&table, market, i).map(|j| (i, j)))
}

/// `X_i ← X_i ∪ X_j − e`, `X_j ← {e}`.
pub fn approx_round(ctx: &mut ApproxContext, i: Agent, j: Agent) -> Result<ApproxRound> {
    let market = &ctx.market;
    let fail = |what: &str| {
        Err(Error::PreconditionViolated(format!(
            "swap between envier {} and target {}: {what}",
            i + 1,
            j + 1
        )))
    };
    if !market.is_high_agent(i) {
        return fail("envier holds no high-payment item");
    }
    if !market.is_low_agent(j) {
        return fail("target holds a high-payment item");
    }
    if market.alpha(i) != Rational::ONE {
        return fail("envier's MPB ratio is not 1");
    }
    let bundle: Vec<Item> = market.bundle(j).collect();
    if bundle.iter().any(|&e| !market.is_mpb(i, e)) {
        return fail("target bundle is not inside the envier's MPB set");
    }
    if market.high_count(i) != 1 {
        return fail("envier holds more than one high-payment item");
    }
    let e = market.bundle(i).find(|&e| market.payments().is_high(e)).expect("one high item");
    if !market.is_mpb(j, e) {
        return Err(Error::MpbViolation { agent: j, item: e, context: "approx swap high item" });
    }
    let earnings_before = (market.earning(i), market.earning(j));

    let mut transfers = Vec::with_capacity(bundle.len() + 1);
    for &f in &bundle {
        ctx.market.move_item(f, i);
        transfers.push(Transfer { item: f, from: j, to: i });
    }
    ctx.market.move_item(e, j);
    transfers.push(Transfer { item: e, from: i, to: j });
    ctx.round += 1;

    Ok(ApproxRound {
        round: ctx.round,
        envier: i,
        target: j,
        item: e,
        bundle,
        earnings_before,
        earnings_after: (ctx.market.earning(i), ctx.market.earning(j)),
        transfers,
    })
}

#[derive(Clone, Debug)]
pub struct ApproxOutcome {
    pub context: ApproxContext,
    pub rounds: Vec<ApproxRound>,
}

impl ApproxOutcome {
    pub fn market(&self) -> &MarketState {
        self.context.market()
    }
}

/// Loops over the smallest-index strong envier until none is left.
///
/// The input must be a pEF1 `{1, k}`-payment equilibrium. If it is already
/// `(2 − 1/k)`-pEFX the loop is skipped and `z` stays unset.
pub fn run_approx_efx(market: MarketState) -> Result<ApproxOutcome> {
    if !check_equilibrium(&market).holds() {
        return Err(Error::PreconditionViolated("input is not an equilibrium".into()));
    }
    if !check_pef1(&market).holds() {
        return Err(Error::PreconditionViolated("input is not pEF1".into()));
    }
    let beta = approx_factor(market.k());
    let mut ctx = ApproxContext::new(market);
    let mut rounds = Vec::new();
    check_equilibrium_properties(&ctx.market)?;

    if min_beta_pefx(&ctx.market).at_most(beta) {
        if let Some((i, j)) = find_strong_envy(&ctx.market) {
            return Err(Error::LemmaViolation(format!(
                "allocation is (2-1/k)-pEFX yet agent {} strongly envies agent {}",
                i + 1,
                j + 1
            )));
        }
        return Ok(ApproxOutcome { context: ctx, rounds });
    }

    let k = ctx.market.k();
    let z = ctx
        .market
        .low_agents()
        .into_iter()
        .map(|j| ctx.market.earning(j))
        .min()
        .ok_or_else(|| Error::LemmaViolation("not (2-1/k)-pEFX but every agent holds a high item".into()))?;
    if z >= k {
        return Err(Error::LemmaViolation(format!("minimum low-group earning {z} is not below k = {k}")));
    }
    ctx.z = Some(z);
    for j in ctx.market.low_agents() {
        let p = ctx.market.earning(j);
        if p != z && p != z + Rational::ONE {
            return Err(Error::LemmaViolation(format!(
                "low-group agent {} earns {p}, expected {z} or {}",
                j + 1,
                z + Rational::ONE
            )));
        }
    }
    check_invariants(&ctx.market, z)?;

    let n = ctx.market.agents();
    let mut eta = eta_high(&ctx.market);
    while let Some((i, j)) = find_strong_envy(&ctx.market) {
        if rounds.len() == n {
            return Err(Error::RoundCapExceeded { phase: "approximate EFX", cap: n });
        }
        check_round_lemmas(&ctx.market)?;
        rounds.push(approx_round(&mut ctx, i, j)?);
        check_invariants(&ctx.market, z)?;
        let next = eta_high(&ctx.market);
        if next >= eta {
            return Err(Error::LemmaViolation(format!(
                "high-group agents holding low items did not decrease ({eta} -> {next})"
            )));
        }
        eta = next;
    }
    Ok(ApproxOutcome { context: ctx, rounds })
}

/// Number of `N_H` agents holding at least one low-payment item.
pub fn eta_high(market: &MarketState) -> usize {
    (0..market.agents())
        .filter(|&i| market.high_count(i) > 0 && market.low_count(i) > 0)
        .count()
}

/// MPB ratios in `{1, 1/k}`, ratio 1 on `N_L`, and every high-payment item
/// costing `k` and MPB for each `N_L` agent.
fn check_equilibrium_properties(market: &MarketState) -> Result<()> {
    let k = market.k();
    let high = market.high_items();
    for i in 0..market.agents() {
        let a = market.alpha(i);
        if a != Rational::ONE && a != k.recip() {
            return Err(Error::LemmaViolation(format!("agent {} has MPB ratio {a}", i + 1)));
        }
        if market.is_low_agent(i) {
            if a != Rational::ONE {
                return Err(Error::LemmaViolation(format!("low-group agent {} has MPB ratio {a}", i + 1)));
            }
            if let Some(&e) = high.iter().find(|&&e| !market.instance().is_high(i, e) || !market.is_mpb(i, e)) {
                return Err(Error::LemmaViolation(format!(
                    "high-payment item {} is not a cost-k MPB item of low-group agent {}",
                    e + 1,
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Low-item count bound for pEF1 `N_H` agents, and `p(X_j) < k` for every
/// pair that is pEF1 but not `(2 − 1/k)`-pEFX.
fn check_round_lemmas(market: &MarketState) -> Result<()> {
    check_equilibrium_properties(market)?;
    let n = market.agents();
    let beta = approx_factor(market.k());
    let min_low = market.low_agents().into_iter().map(|j| market.bundle_len(j)).min();
    for i in 0..n {
        let pef1_i = (0..n).all(|j| market.bundle_len(i) == 0 || market.hat_earning(i) <= market.earning(j));
        if market.is_high_agent(i) && pef1_i {
            if let Some(bound) = min_low {
                if market.low_count(i) > bound {
                    return Err(Error::LemmaViolation(format!(
                        "agent {} holds {} low-payment items, more than {bound}",
                        i + 1,
                        market.low_count(i)
                    )));
                }
            }
        }
        let Some(min_pay) = market.bundle(i).map(|e| market.payments().payment(e)).min() else {
            continue;
        };
        let residual = market.earning(i) - min_pay;
        for j in (0..n).filter(|&j| j != i) {
            let pef1_ij = market.hat_earning(i) <= market.earning(j);
            if pef1_ij && residual > beta * market.earning(j) && market.earning(j) >= market.k() {
                return Err(Error::LemmaViolation(format!(
                    "agent {} is not (2-1/k)-pEFX towards agent {} earning {} >= k",
                    i + 1,
                    j + 1,
                    market.earning(j)
                )));
            }
        }
    }
    Ok(())
}

/// Equilibrium, earning ranges of both groups and `(2 − 1/k)`-EFX inside
/// `N_L`.
fn check_invariants(market: &MarketState, z: Rational) -> Result<()> {
    if let Some(w) = check_equilibrium(market).witness() {
        return Err(Error::MpbViolation {
            agent: w.agent,
            item: w.item.unwrap_or(0),
            context: "approximate EFX equilibrium",
        });
    }
    let k = market.k();
    let beta = approx_factor(k);
    let low = market.low_agents();
    for i in 0..market.agents() {
        let p = market.earning(i);
        let (lo, hi) = if market.is_low_agent(i) { (z, k + z) } else { (k, k + z) };
        if p < lo || p > hi {
            return Err(Error::LemmaViolation(format!(
                "agent {} earns {p}, outside [{lo}, {hi}]",
                i + 1
            )));
        }
    }
    let table = CostTable::new(market.instance(), market.allocation());
    for &i in &low {
        if let Some(&j) = low.iter().find(|&&j| j != i && table.violates_efx(i, j, beta)) {
            return Err(Error::LemmaViolation(format!(
                "low-group agents {} and {} are not (2-1/k)-EFX",
                i + 1,
                j + 1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_market_state, Allocation, Instance, PaymentVector};
    use crate::verify::min_beta_efx;
    use alloc::vec;

    #[test]
    fn factor_values() {
        assert_eq!(approx_factor(Rational::integer(6)), Rational::new(11, 6).unwrap());
        assert_eq!(approx_factor(Rational::integer(3)), Rational::new(5, 3).unwrap());
        assert_eq!(approx_factor(Rational::new(5, 2).unwrap()), Rational::new(8, 5).unwrap());
    }

    #[test]
    fn two_agent_swap() {
        // k = 3. Agent 1 holds {H, e2}, agent 2 holds {e3}, which agent 1 likes.
        let k = Rational::integer(3);
        let inst = Instance::new(k, vec![vec![true, false, false], vec![true, true, false]]).unwrap();
        let pay = PaymentVector::from_values(k, &[k, Rational::ONE, Rational::ONE]).unwrap();
        let s = build_market_state(inst, Allocation::new(2, vec![0, 0, 1]).unwrap(), pay).unwrap();
        assert_eq!(strong_envy_target(&s, 0), Some(1));
        let out = run_approx_efx(s).unwrap();
        assert_eq!(out.rounds.len(), 1);
        let r = &out.rounds[0];
        assert_eq!((r.envier, r.target, r.item), (0, 1, 0));
        assert_eq!(r.earnings_after, (Rational::integer(2), k));
        assert_eq!(out.context.z(), Some(Rational::ONE));
        let m = out.market();
        assert!(min_beta_efx(m.instance(), m.allocation()).at_most(approx_factor(k)));
    }

    #[test]
    fn already_fair_input_is_untouched() {
        let k = Rational::integer(2);
        let inst = Instance::new(k, vec![vec![false, true], vec![true, false]]).unwrap();
        let s = build_market_state(inst, Allocation::new(2, vec![0, 1]).unwrap(), PaymentVector::all_low(k, 2))
            .unwrap();
        let out = run_approx_efx(s.clone()).unwrap();
        assert!(out.rounds.is_empty());
        assert_eq!(out.context.z(), None);
        assert_eq!(out.market(), &s);
    }

    #[test]
    fn equal_earning_targets_tie_to_smaller_index() {
        // k = 3. Agent 3 holds {H, e2} and likes the single items of
        // agents 1 and 2, who both earn 1.
        let k = Rational::integer(3);
        let inst = Instance::new(
            k,
            vec![
                vec![true, true, false, true],
                vec![true, true, true, false],
                vec![true, false, false, false],
            ],
        )
        .unwrap();
        let pay = PaymentVector::from_values(k, &[k, Rational::ONE, Rational::ONE, Rational::ONE]).unwrap();
        let s = build_market_state(inst, Allocation::new(3, vec![2, 2, 0, 1]).unwrap(), pay).unwrap();
        assert_eq!(strong_envy_target(&s, 2), Some(0));
    }
}
