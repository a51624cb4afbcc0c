//! Big-earner / least-earner loop producing a pEF1 `{1, k}`-payment
//! equilibrium.
//!
//! Agent ties are broken by the group reindexing computed at
//! initialization, so "smallest index" below always means smallest rank.
//! Everything stored or reported uses the original agent indices.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market_init::{initial_equilibrium, AgentGroups, InitialEquilibrium, Transfer};
use crate::model::{Agent, Allocation, Instance, Item, MarketState};
use crate::rational::Rational;
use crate::verify::check_equilibrium;

#[derive(Clone, Debug)]
pub struct SolverState {
    market: MarketState,
    unraised: Vec<bool>,
    groups: AgentGroups,
    initial: Allocation,
    round: usize,
    last_least: Option<Rational>,
}

impl SolverState {
    /// Fresh solver state on top of an initial equilibrium; every agent
    /// starts unraised.
    pub fn new(init: &InitialEquilibrium) -> Self {
        let n = init.state.agents();
        SolverState {
            market: init.state.clone(),
            unraised: vec![true; n],
            groups: init.groups.clone(),
            initial: init.state.allocation().clone(),
            round: 0,
            last_least: None,
        }
    }

    /// Assembles a state from explicit parts, e.g. a saved snapshot.
    pub fn from_parts(
        market: MarketState,
        groups: AgentGroups,
        unraised: Vec<bool>,
        initial: Allocation,
    ) -> Result<Self> {
        let n = market.agents();
        if unraised.len() != n || groups.order().len() != n || initial.agents() != n {
            return Err(Error::AgentOutOfRange { agent: n, n });
        }
        if initial.items() != market.items() {
            return Err(Error::ItemCountMismatch { got: initial.items(), expected: market.items() });
        }
        Ok(SolverState { market, unraised, groups, initial, round: 0, last_least: None })
    }

    pub fn market(&self) -> &MarketState {
        &self.market
    }

    pub fn into_market(self) -> MarketState {
        self.market
    }

    pub fn groups(&self) -> &AgentGroups {
        &self.groups
    }

    /// `i ∈ U`.
    pub fn is_unraised(&self, agent: Agent) -> bool {
        self.unraised[agent]
    }

    pub fn unraised(&self) -> &[bool] {
        &self.unraised
    }

    /// `X⁰`.
    pub fn initial_allocation(&self) -> &Allocation {
        &self.initial
    }

    pub fn rounds(&self) -> usize {
        self.round
    }

    pub fn big_earner(&self) -> Result<Agent> {
        big_earner_by(&self.market, |i| self.groups.rank(i))
    }

    pub fn least_earner(&self) -> Agent {
        least_earner_by(&self.market, |i| self.groups.rank(i))
    }
}

fn big_earner_by(market: &MarketState, rank: impl Fn(Agent) -> usize) -> Result<Agent> {
    (0..market.agents())
        .filter(|&i| market.bundle_len(i) > 0)
        .max_by_key(|&i| (market.hat_earning(i), core::cmp::Reverse(rank(i))))
        .ok_or(Error::AllEmpty)
}

fn least_earner_by(market: &MarketState, rank: impl Fn(Agent) -> usize) -> Agent {
    (0..market.agents())
        .min_by_key(|&i| (market.earning(i), rank(i)))
        .expect("at least one agent")
}

/// Argmax of `hat_earning`, ties to the smallest index.
pub fn select_big_earner(market: &MarketState) -> Result<Agent> {
    big_earner_by(market, |i| i)
}

/// Argmin of earning, ties to the smallest index.
pub fn select_least_earner(market: &MarketState) -> Agent {
    least_earner_by(market, |i| i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pef1Branch {
    /// `l ∈ U`: one item goes from `b` to `l`.
    Direct,
    /// `l ∉ U`: `b` hands an item to an unraised intermediary, which hands
    /// one of `l`'s initial items to `l`.
    ViaIntermediary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pef1Round {
    pub round: usize,
    pub big: Agent,
    pub least: Agent,
    pub hat_big: Rational,
    pub least_earning: Rational,
    pub branch: Pef1Branch,
    pub intermediary: Option<Agent>,
    /// Agents whose group was raised this round.
    pub raised_agents: Vec<Agent>,
    pub raised_items: Vec<Item>,
    pub transfers: Vec<Transfer>,
    /// Net earning change of the intermediary.
    pub intermediary_delta: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    Done,
    Continued(Box<Pef1Round>),
}

/// Executes one loop body. Returns `Done` without touching the state once
/// the big earner is pEF1 towards the least earner.
pub fn pef1_round(state: &mut SolverState) -> Result<RoundOutcome> {
    let b = state.big_earner()?;
    let l = state.least_earner();
    let hat_b = state.market.hat_earning(b);
    let p_l = state.market.earning(l);
    if let Some(prev) = state.last_least {
        if p_l < prev {
            return Err(Error::LemmaViolation(format!(
                "least earning dropped from {prev} to {p_l} in round {}",
                state.round + 1
            )));
        }
    }
    state.last_least = Some(p_l);
    if hat_b <= p_l {
        return Ok(RoundOutcome::Done);
    }

    let before = state.market.earnings();
    let mut raised_agents = Vec::new();
    let mut raised_items = Vec::new();
    let mut transfers = Vec::new();
    let mut intermediary = None;
    let branch;

    if state.unraised[l] {
        branch = Pef1Branch::Direct;
        if state.unraised[b] {
            let members = state.groups.groups()[state.groups.group_of(b)].clone();
            raised_items = members.iter().flat_map(|&a| state.market.bundle(a)).collect();
            raised_items.sort_unstable();
            state.market.raise_items(&raised_items)?;
            for &a in &members {
                state.unraised[a] = false;
            }
            raised_agents = members;
        }
        let e = state.market.bundle(b).next().ok_or(Error::AllEmpty)?;
        move_checked(&mut state.market, e, l, &mut transfers, "pEF1 direct transfer")?;
    } else {
        branch = Pef1Branch::ViaIntermediary;
        if state.unraised[b] {
            return Err(Error::LemmaViolation(format!(
                "least earner {} is raised but big earner {} is not",
                l + 1,
                b + 1
            )));
        }
        let initial = &state.initial;
        let i = state
            .groups
            .order()
            .iter()
            .copied()
            .filter(|&i| state.unraised[i])
            .find(|&i| state.market.bundle(i).any(|e| initial.owner(e) == l))
            .ok_or(Error::MissingIntermediary { least: l })?;
        let e1 = state
            .market
            .bundle(b)
            .find(|&e| state.market.is_mpb(i, e))
            .ok_or_else(|| {
                Error::LemmaViolation(format!("no item of big earner {} is MPB for agent {}", b + 1, i + 1))
            })?;
        let e2 = state
            .market
            .bundle(i)
            .find(|&e| initial.owner(e) == l)
            .expect("intermediary holds an initial item of l");
        move_checked(&mut state.market, e1, i, &mut transfers, "pEF1 intermediary receipt")?;
        move_checked(&mut state.market, e2, l, &mut transfers, "pEF1 least earner receipt")?;
        intermediary = Some(i);
    }
    state.round += 1;

    let after = state.market.earnings();
    let intermediary_delta = intermediary.map(|i| after[i] - before[i]);
    if let (Some(i), [t1, t2]) = (intermediary, transfers.as_slice()) {
        let pay = |e| state.market.payments().payment(e);
        if pay(t1.item) == pay(t2.item) && after[i] != before[i] {
            return Err(Error::LemmaViolation(format!("intermediary {} changed earning", i + 1)));
        }
    }
    for a in 0..state.market.agents() {
        let exempt = a == b || a == l || Some(a) == intermediary || raised_agents.contains(&a);
        if !exempt && after[a] != before[a] {
            return Err(Error::LemmaViolation(format!(
                "agent {} changed earning in round {} without being involved",
                a + 1,
                state.round
            )));
        }
    }
    check_solver_invariants(state)?;

    Ok(RoundOutcome::Continued(Box::new(Pef1Round {
        round: state.round,
        big: b,
        least: l,
        hat_big: hat_b,
        least_earning: p_l,
        branch,
        intermediary,
        raised_agents,
        raised_items,
        transfers,
        intermediary_delta,
    })))
}

fn move_checked(
    market: &mut MarketState,
    item: Item,
    to: Agent,
    log: &mut Vec<Transfer>,
    context: &'static str,
) -> Result<()> {
    if !market.is_mpb(to, item) {
        return Err(Error::MpbViolation { agent: to, item, context });
    }
    let from = market.allocation().owner(item);
    market.move_item(item, to);
    log.push(Transfer { item, from, to });
    Ok(())
}

/// Equilibrium, MPB ratios by raise status, prefix of raised groups and
/// pEF1 inside each group.
pub fn check_solver_invariants(state: &SolverState) -> Result<()> {
    let market = &state.market;
    if let Some(w) = check_equilibrium(market).witness() {
        return Err(Error::MpbViolation {
            agent: w.agent,
            item: w.item.unwrap_or(0),
            context: "pEF1 loop equilibrium",
        });
    }
    let k_inv = market.k().recip();
    for i in 0..market.agents() {
        let expected = if state.unraised[i] { Rational::ONE } else { k_inv };
        if market.alpha(i) != expected {
            return Err(Error::LemmaViolation(format!(
                "agent {} has MPB ratio {}, expected {}",
                i + 1,
                market.alpha(i),
                expected
            )));
        }
    }
    let groups = state.groups.groups();
    let mut seen_unraised = false;
    for (r, members) in groups.iter().enumerate() {
        let raised = members.iter().filter(|&&a| !state.unraised[a]).count();
        if raised != 0 && raised != members.len() {
            return Err(Error::LemmaViolation(format!("group {} is partly raised", r + 1)));
        }
        if raised == 0 {
            seen_unraised = true;
        } else if seen_unraised || r + 1 == groups.len() {
            return Err(Error::LemmaViolation(format!("raised groups do not form a proper prefix at group {}", r + 1)));
        }
    }
    for members in groups {
        for &i in members.iter().filter(|&&i| market.bundle_len(i) > 0) {
            if let Some(&j) = members.iter().find(|&&j| market.hat_earning(i) > market.earning(j)) {
                return Err(Error::LemmaViolation(format!(
                    "agents {} and {} in the same group are not pEF1",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Full pEF1 run: initialization record plus every round.
#[derive(Clone, Debug)]
pub struct Pef1Run {
    pub state: SolverState,
    pub init_transfers: Vec<Transfer>,
    pub rounds: Vec<Pef1Round>,
}

pub fn run_pef1(instance: &Instance) -> Result<SolverState> {
    run_pef1_traced(instance).map(|run| run.state)
}

pub fn run_pef1_traced(instance: &Instance) -> Result<Pef1Run> {
    let init = initial_equilibrium(instance)?;
    let mut run = Pef1Run {
        state: SolverState::new(&init),
        init_transfers: init.transfers,
        rounds: Vec::new(),
    };
    check_solver_invariants(&run.state)?;
    continue_pef1(&mut run)?;
    Ok(run)
}

/// Runs rounds on `run.state` until done, appending to `run.rounds`.
pub fn continue_pef1(run: &mut Pef1Run) -> Result<()> {
    let (n, m) = (run.state.market.agents(), run.state.market.items());
    let cap = 4 * n * n * m * m;
    loop {
        match pef1_round(&mut run.state)? {
            RoundOutcome::Done => return Ok(()),
            RoundOutcome::Continued(round) => {
                run.rounds.push(*round);
                if run.rounds.len() > cap {
                    return Err(Error::IterationCapExceeded { phase: "pEF1 loop", cap });
                }
            }
        }
    }
}
