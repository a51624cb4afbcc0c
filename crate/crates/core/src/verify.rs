//! Decision procedures for the fairness and efficiency notions.
//!
//! Every check returns a witness on failure. Witnesses are the first
//! violation in lexicographic `(i, j, e)` order and carry both sides of the
//! violated inequality, so callers can replay them against the definitions.

use alloc::vec::Vec;

use crate::model::{Agent, Allocation, Instance, Item, MarketState};
use crate::rational::Rational;

/// One violated inequality: `lhs > rhs`.
///
/// For the equilibrium check `other == agent`, `lhs` is `α_{i,e}` and `rhs`
/// is `α_i`. For the pairwise notions `lhs` is the envier's residual and
/// `rhs` is the compared bundle's value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub agent: Agent,
    pub other: Agent,
    pub item: Option<Item>,
    pub lhs: Rational,
    pub rhs: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FairnessVerdict {
    Holds,
    Violated(Witness),
}

impl FairnessVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, FairnessVerdict::Holds)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            FairnessVerdict::Holds => None,
            FairnessVerdict::Violated(w) => Some(w),
        }
    }
}

/// An approximation factor; `Unbounded` orders above every finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Beta {
    Finite(Rational),
    Unbounded,
}

impl Beta {
    pub fn finite(&self) -> Option<Rational> {
        match self {
            Beta::Finite(v) => Some(*v),
            Beta::Unbounded => None,
        }
    }
}

impl core::fmt::Display for Beta {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Beta::Finite(v) => write!(f, "{v}"),
            Beta::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Smallest β for which a β-notion holds, and the first pair attaining it.
/// `binding` is `None` exactly when the value is 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BetaResult {
    pub value: Beta,
    pub binding: Option<(Agent, Agent)>,
}

impl BetaResult {
    pub fn at_most(&self, bound: Rational) -> bool {
        self.value <= Beta::Finite(bound)
    }
}

pub fn check_equilibrium(state: &MarketState) -> FairnessVerdict {
    for i in 0..state.agents() {
        if let Some(e) = state.bundle(i).find(|&e| !state.is_mpb(i, e)) {
            return FairnessVerdict::Violated(Witness {
                agent: i,
                other: i,
                item: Some(e),
                lhs: state.ratio(i, e),
                rhs: state.alpha(i),
            });
        }
    }
    FairnessVerdict::Holds
}

fn max_payment_item(state: &MarketState, agent: Agent) -> Option<Item> {
    let mut best: Option<Item> = None;
    for e in state.bundle(agent) {
        match best {
            Some(b) if state.payments().payment(b) >= state.payments().payment(e) => {}
            _ => best = Some(e),
        }
    }
    best
}

/// pEF1: for all `i, j`, `X_i = ∅` or `p(X_i) − max_e p(e) ≤ p(X_j)`.
pub fn check_pef1(state: &MarketState) -> FairnessVerdict {
    let n = state.agents();
    for i in 0..n {
        if state.bundle_len(i) == 0 {
            continue;
        }
        let hat = state.hat_earning(i);
        for j in (0..n).filter(|&j| j != i) {
            let other = state.earning(j);
            if hat > other {
                return FairnessVerdict::Violated(Witness {
                    agent: i,
                    other: j,
                    item: max_payment_item(state, i),
                    lhs: hat,
                    rhs: other,
                });
            }
        }
    }
    FairnessVerdict::Holds
}

/// Folds pairwise `(residual_i, value_j)` ratios into a [`BetaResult`].
fn beta_over_pairs<F>(n: usize, mut pair: F) -> BetaResult
where
    F: FnMut(Agent, Agent) -> Option<(Rational, Rational)>,
{
    let mut value = Rational::ONE;
    let mut binding = None;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let Some((num, den)) = pair(i, j) else { continue };
            if den.is_zero() {
                if num.is_positive() {
                    return BetaResult { value: Beta::Unbounded, binding: Some((i, j)) };
                }
                continue;
            }
            let ratio = num / den;
            if ratio > value {
                value = ratio;
                binding = Some((i, j));
            }
        }
    }
    BetaResult { value: Beta::Finite(value), binding }
}

/// Minimal β with `p(X_i − e) ≤ β·p(X_j)` for every pair and every `e ∈ X_i`.
pub fn min_beta_pefx(state: &MarketState) -> BetaResult {
    let residual: Vec<Option<Rational>> = (0..state.agents())
        .map(|i| {
            let min = state.bundle(i).map(|e| state.payments().payment(e)).min()?;
            Some(state.earning(i) - min)
        })
        .collect();
    beta_over_pairs(state.agents(), |i, j| residual[i].map(|num| (num, state.earning(j))))
}

/// Per-agent bundle costs `c_i(X_j)` for every ordered pair.
pub(crate) struct CostTable {
    n: usize,
    cost: Vec<Rational>,
    min_item: Vec<Option<Rational>>,
    max_item: Vec<Option<Rational>>,
}

impl CostTable {
    pub(crate) fn new(instance: &Instance, allocation: &Allocation) -> Self {
        let n = instance.agents();
        let bundles = allocation.bundles();
        let mut cost = Vec::with_capacity(n * n);
        for i in 0..n {
            for bundle in &bundles {
                cost.push(instance.bundle_cost(i, bundle.iter().copied()));
            }
        }
        let own = |i: usize| bundles[i].iter().map(move |&e| instance.cost(i, e));
        let min_item = (0..n).map(|i| own(i).min()).collect();
        let max_item = (0..n).map(|i| own(i).max()).collect();
        CostTable { n, cost, min_item, max_item }
    }

    /// `c_i(X_j)`.
    pub(crate) fn cost(&self, i: Agent, j: Agent) -> Rational {
        self.cost[i * self.n + j]
    }

    /// `c_i(X_i)` minus the cheapest item, or `None` for an empty bundle.
    pub(crate) fn efx_residual(&self, i: Agent) -> Option<Rational> {
        self.min_item[i].map(|c| self.cost(i, i) - c)
    }

    pub(crate) fn ef1_residual(&self, i: Agent) -> Option<Rational> {
        self.max_item[i].map(|c| self.cost(i, i) - c)
    }

    /// True when `i` fails the β-EFX test against `j`.
    pub(crate) fn violates_efx(&self, i: Agent, j: Agent, beta: Rational) -> bool {
        self.efx_residual(i).is_some_and(|r| r > beta * self.cost(i, j))
    }
}

/// EF1: for all `i, j`, `X_i = ∅` or `c_i(X_i) − max_e c_i(e) ≤ c_i(X_j)`.
pub fn check_ef1(instance: &Instance, allocation: &Allocation) -> FairnessVerdict {
    let table = CostTable::new(instance, allocation);
    for i in 0..instance.agents() {
        let Some(residual) = table.ef1_residual(i) else { continue };
        for j in (0..instance.agents()).filter(|&j| j != i) {
            if residual > table.cost(i, j) {
                let item = allocation
                    .bundle(i)
                    .fold(None, |best: Option<Item>, e| match best {
                        Some(b) if instance.cost(i, b) >= instance.cost(i, e) => Some(b),
                        _ => Some(e),
                    });
                return FairnessVerdict::Violated(Witness {
                    agent: i,
                    other: j,
                    item,
                    lhs: residual,
                    rhs: table.cost(i, j),
                });
            }
        }
    }
    FairnessVerdict::Holds
}

/// Minimal β with `c_i(X_i − e) ≤ β·c_i(X_j)` for every pair and `e ∈ X_i`.
pub fn min_beta_efx(instance: &Instance, allocation: &Allocation) -> BetaResult {
    let table = CostTable::new(instance, allocation);
    beta_over_pairs(instance.agents(), |i, j| {
        table.efx_residual(i).map(|num| (num, table.cost(i, j)))
    })
}

/// True when `allocation` is β-EFX.
pub fn is_beta_efx(instance: &Instance, allocation: &Allocation, beta: Rational) -> bool {
    min_beta_efx(instance, allocation).at_most(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_market_state, PaymentVector};
    use alloc::vec;

    fn k(v: i128) -> Rational {
        Rational::integer(v)
    }

    #[test]
    fn equilibrium_holds_for_own_low_items() {
        let inst = Instance::new(k(2), vec![vec![false, true], vec![true, false]]).unwrap();
        let s = build_market_state(
            inst,
            Allocation::new(2, vec![0, 1]).unwrap(),
            PaymentVector::all_low(k(2), 2),
        )
        .unwrap();
        assert!(check_equilibrium(&s).holds());
    }

    #[test]
    fn equilibrium_fails_on_costly_item() {
        // Row [1, 2], payments (1, 1), agent owns e2: alpha = 1 but ratio 2.
        let inst = Instance::new(k(2), vec![vec![false, true], vec![false, false]]).unwrap();
        let s = build_market_state(
            inst,
            Allocation::new(2, vec![1, 0]).unwrap(),
            PaymentVector::all_low(k(2), 2),
        )
        .unwrap();
        let v = check_equilibrium(&s);
        let w = v.witness().unwrap();
        assert_eq!((w.agent, w.item), (0, Some(1)));
        assert_eq!((w.lhs, w.rhs), (k(2), k(1)));
    }

    #[test]
    fn single_agent_everything_holds() {
        let inst = Instance::new(k(2), vec![vec![false; 3]]).unwrap();
        let alloc = Allocation::new(1, vec![0, 0, 0]).unwrap();
        let s = build_market_state(inst.clone(), alloc.clone(), PaymentVector::all_low(k(2), 3)).unwrap();
        assert!(check_equilibrium(&s).holds());
        assert!(check_pef1(&s).holds());
        assert!(check_ef1(&inst, &alloc).holds());
        assert_eq!(min_beta_efx(&inst, &alloc).value, Beta::Finite(Rational::ONE));
        assert_eq!(min_beta_pefx(&s).value, Beta::Finite(Rational::ONE));
    }

    #[test]
    fn pef1_fails_against_empty_bundle() {
        let inst = Instance::new(k(2), vec![vec![false; 3], vec![false; 3]]).unwrap();
        let s = build_market_state(
            inst,
            Allocation::new(2, vec![0, 0, 0]).unwrap(),
            PaymentVector::all_low(k(2), 3),
        )
        .unwrap();
        let v = check_pef1(&s);
        let w = v.witness().unwrap();
        assert_eq!((w.agent, w.other), (0, 1));
        assert_eq!((w.lhs, w.rhs), (k(2), k(0)));
        assert_eq!(min_beta_pefx(&s).value, Beta::Unbounded);
    }

    #[test]
    fn ef1_fails_when_one_agent_holds_everything() {
        let inst = Instance::new(k(2), vec![vec![false; 2], vec![false; 2]]).unwrap();
        let alloc = Allocation::new(2, vec![0, 0]).unwrap();
        assert!(!check_ef1(&inst, &alloc).holds());
        assert_eq!(min_beta_efx(&inst, &alloc).value, Beta::Unbounded);
    }

    #[test]
    fn beta_efx_two_agents() {
        // c1 = [1, 1, 2]; agent 1 owns {e1, e3}, agent 2 owns {e2}.
        let inst = Instance::new(k(2), vec![vec![false, false, true], vec![false; 3]]).unwrap();
        let alloc = Allocation::new(2, vec![0, 1, 0]).unwrap();
        let r = min_beta_efx(&inst, &alloc);
        assert_eq!(r.value, Beta::Finite(k(2)));
        assert_eq!(r.binding, Some((0, 1)));
    }

    #[test]
    fn beta_is_one_for_singletons() {
        let inst = Instance::new(k(3), vec![vec![false, true], vec![true, false]]).unwrap();
        let alloc = Allocation::new(2, vec![1, 0]).unwrap();
        let r = min_beta_efx(&inst, &alloc);
        assert_eq!(r, BetaResult { value: Beta::Finite(Rational::ONE), binding: None });
    }

    #[test]
    fn beta_pefx_formula() {
        // k = 2, earnings z = 2 and z + 2 = 4 where the richer agent holds a
        // payment-1 item: (4 - 1) / 2 = 3/2.
        let inst = Instance::new(k(2), vec![vec![false, false, true, false], vec![false; 4]]).unwrap();
        let pay = PaymentVector::from_values(k(2), &[k(1), k(1), k(2), k(1)]).unwrap();
        let s = build_market_state(inst, Allocation::new(2, vec![1, 1, 0, 0]).unwrap(), pay).unwrap();
        assert_eq!(s.earning(0), k(3));
        let r = min_beta_pefx(&s);
        assert_eq!(r.value, Beta::Finite(Rational::ONE));
        let inst = Instance::new(k(2), vec![vec![false; 5], vec![false; 5]]).unwrap();
        let pay = PaymentVector::from_values(k(2), &[k(1), k(1), k(2), k(1), k(1)]).unwrap();
        let s = build_market_state(inst, Allocation::new(2, vec![1, 1, 0, 0, 0]).unwrap(), pay).unwrap();
        assert_eq!((s.earning(0), s.earning(1)), (k(4), k(2)));
        assert_eq!(min_beta_pefx(&s).value, Beta::Finite(Rational::new(3, 2).unwrap()));
    }

    #[test]
    fn beta_ordering() {
        assert!(Beta::Finite(k(1_000_000)) < Beta::Unbounded);
        assert!(Beta::Finite(k(1)) < Beta::Finite(k(2)));
    }
}
