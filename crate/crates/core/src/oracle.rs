//! Exhaustive ground truth for small instances.
//!
//! Allocations are enumerated in lexicographic owner order (item 1 most
//! significant), so every witness returned here is the lexicographically
//! least one with the requested property. Pareto checks run against the
//! frontier of achievable cost profiles, built item by item and pruned of
//! dominated partial profiles; costs are scaled to integers (`1 -> q`,
//! `k = p/q -> p`) so the inner loops avoid rational arithmetic.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};
use crate::rational::Rational;
use crate::verify::Beta;

/// Default cap on `n^m`; enumeration requires `n^m` strictly below it.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// `n^m`, or `None` on overflow.
pub fn allocation_count(agents: usize, items: usize) -> Option<u64> {
    (agents as u64).checked_pow(u32::try_from(items).ok()?)
}

fn check_budget(instance: &Instance, budget: u64) -> Result<u64> {
    let (n, m) = (instance.agents(), instance.items());
    match allocation_count(n, m) {
        Some(count) if count < budget => Ok(count),
        _ => Err(Error::BudgetExceeded { agents: n, items: m, budget }),
    }
}

/// Every allocation of `m` items to `n` agents, lexicographic in the owner
/// vector.
#[derive(Clone, Debug)]
pub struct Allocations {
    n: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for Allocations {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        while pos > 0 {
            pos -= 1;
            if succ[pos] + 1 < self.n {
                succ[pos] += 1;
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(Allocation::new(self.n, current).expect("owners in range"))
    }
}

pub fn enumerate_allocations(instance: &Instance, budget: u64) -> Result<Allocations> {
    check_budget(instance, budget)?;
    Ok(Allocations { n: instance.agents(), next: Some(vec![0; instance.items()]) })
}

/// `(c_1(X_1), ..., c_n(X_n))`.
pub fn cost_profile(instance: &Instance, allocation: &Allocation) -> Vec<Rational> {
    allocation
        .bundles()
        .into_iter()
        .enumerate()
        .map(|(i, b)| instance.bundle_cost(i, b))
        .collect()
}

/// `a` is nowhere worse than `b` and strictly better somewhere.
pub fn profile_dominates<T: Ord>(a: &[T], b: &[T]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// True when allocation `a` Pareto dominates allocation `b`.
pub fn dominates(instance: &Instance, a: &Allocation, b: &Allocation) -> bool {
    profile_dominates(&cost_profile(instance, a), &cost_profile(instance, b))
}

/// Integer costs proportional to the instance's.
#[derive(Clone, Debug)]
struct Scaled {
    n: usize,
    m: usize,
    cost: Vec<i64>,
}

impl Scaled {
    fn new(instance: &Instance) -> Self {
        let k = instance.k();
        let (hi, lo) = (k.numer() as i64, k.denom() as i64);
        let (n, m) = (instance.agents(), instance.items());
        let cost = (0..n)
            .flat_map(|i| (0..m).map(move |e| (i, e)))
            .map(|(i, e)| if instance.is_high(i, e) { hi } else { lo })
            .collect();
        Scaled { n, m, cost }
    }

    fn cost(&self, i: usize, e: usize) -> i64 {
        self.cost[i * self.m + e]
    }

    fn profile(&self, owner: &[usize]) -> Vec<i64> {
        let mut p = vec![0; self.n];
        for (e, &i) in owner.iter().enumerate() {
            p[i] += self.cost(i, e);
        }
        p
    }

    /// Minimal achievable profiles.
    fn frontier(&self) -> BTreeSet<Vec<i64>> {
        let mut layer: Vec<Vec<i64>> = vec![vec![0; self.n]];
        for e in 0..self.m {
            let mut next: BTreeSet<Vec<i64>> = BTreeSet::new();
            for p in &layer {
                for i in 0..self.n {
                    let mut q = p.clone();
                    q[i] += self.cost(i, e);
                    next.insert(q);
                }
            }
            let cand: Vec<Vec<i64>> = next.into_iter().collect();
            layer = cand
                .iter()
                .filter(|p| !cand.iter().any(|q| profile_dominates(q, p)))
                .cloned()
                .collect();
        }
        layer.into_iter().collect()
    }

    /// Minimal EFX factor as a fraction, `None` for unbounded.
    fn efx_beta(&self, owner: &[usize]) -> Option<(i64, i64)> {
        let n = self.n;
        let mut own = vec![0i64; n];
        let mut cheapest = vec![i64::MAX; n];
        let mut cross = vec![0i64; n * n];
        for (e, &j) in owner.iter().enumerate() {
            for i in 0..n {
                cross[i * n + j] += self.cost(i, e);
            }
            own[j] += self.cost(j, e);
            cheapest[j] = cheapest[j].min(self.cost(j, e));
        }
        let mut best = (1i64, 1i64);
        for i in (0..n).filter(|&i| cheapest[i] != i64::MAX) {
            let num = own[i] - cheapest[i];
            for j in (0..n).filter(|&j| j != i) {
                let den = cross[i * n + j];
                if den == 0 {
                    if num > 0 {
                        return None;
                    }
                    continue;
                }
                if (num as i128) * (best.1 as i128) > (best.0 as i128) * (den as i128) {
                    best = (num, den);
                }
            }
        }
        Some(best)
    }
}

fn to_beta(b: Option<(i64, i64)>) -> Beta {
    match b {
        None => Beta::Unbounded,
        Some((num, den)) => Beta::Finite(Rational::new(num as i128, den as i128).expect("positive denominator")),
    }
}

/// Every owner vector, lexicographic, without allocating `Allocation`s.
fn for_each_owner(n: usize, m: usize, mut f: impl FnMut(&[usize]) -> bool) {
    let mut owner = vec![0usize; m];
    loop {
        if !f(&owner) {
            return;
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if owner[pos] + 1 < n {
                owner[pos] += 1;
                break;
            }
            owner[pos] = 0;
        }
    }
}

/// The minimal cost profiles over all allocations, in scaled integer units.
#[derive(Clone, Debug)]
pub struct ParetoFrontier {
    scaled: Scaled,
    profiles: BTreeSet<Vec<i64>>,
}

impl ParetoFrontier {
    pub fn new(instance: &Instance, budget: u64) -> Result<Self> {
        check_budget(instance, budget)?;
        let scaled = Scaled::new(instance);
        let profiles = scaled.frontier();
        Ok(ParetoFrontier { scaled, profiles })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn contains(&self, allocation: &Allocation) -> bool {
        self.profiles.contains(&self.scaled.profile(allocation.owners()))
    }
}

/// True when no allocation Pareto dominates `allocation`.
pub fn is_pareto_optimal(instance: &Instance, allocation: &Allocation, budget: u64) -> Result<bool> {
    Ok(ParetoFrontier::new(instance, budget)?.contains(allocation))
}

/// The lexicographically least allocation that is EFX and Pareto optimal.
pub fn exists_efx_po(instance: &Instance, budget: u64) -> Result<Option<Allocation>> {
    let frontier = ParetoFrontier::new(instance, budget)?;
    let s = &frontier.scaled;
    let mut found = None;
    for_each_owner(s.n, s.m, |owner| {
        if frontier.profiles.contains(&s.profile(owner)) && s.efx_beta(owner) == Some((1, 1)) {
            found = Some(owner.to_vec());
            return false;
        }
        true
    });
    Ok(found.map(|o| Allocation::new(s.n, o).expect("owners in range")))
}

/// Minimum of the EFX factor over Pareto optimal allocations, with the
/// lexicographically least allocation attaining it.
pub fn best_efx_beta_over_po(instance: &Instance, budget: u64) -> Result<(Beta, Allocation)> {
    let frontier = ParetoFrontier::new(instance, budget)?;
    let s = &frontier.scaled;
    let mut best: Option<(Beta, Vec<usize>)> = None;
    for_each_owner(s.n, s.m, |owner| {
        if !frontier.profiles.contains(&s.profile(owner)) {
            return true;
        }
        let beta = to_beta(s.efx_beta(owner));
        if best.as_ref().is_none_or(|(b, _)| beta < *b) {
            best = Some((beta, owner.to_vec()));
        }
        beta != Beta::Finite(Rational::ONE)
    });
    let (beta, owner) = best.expect("some allocation is Pareto optimal");
    Ok((beta, Allocation::new(s.n, owner).expect("owners in range")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::min_beta_efx;

    fn inst(k: i128, rows: &[&[u8]]) -> Instance {
        Instance::new(
            Rational::integer(k),
            rows.iter().map(|r| r.iter().map(|&c| c != 1).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let i = inst(2, &[&[1, 1], &[1, 1]]);
        let all: Vec<_> = enumerate_allocations(&i, DEFAULT_BUDGET).unwrap().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[1].owners(), &[0, 1]);
        let i = inst(2, &[&[1], &[1], &[1]]);
        assert_eq!(enumerate_allocations(&i, DEFAULT_BUDGET).unwrap().count(), 3);
        let i = Instance::new(Rational::integer(2), vec![vec![false; 24]; 2]).unwrap();
        assert!(matches!(
            enumerate_allocations(&i, DEFAULT_BUDGET),
            Err(Error::BudgetExceeded { agents: 2, items: 24, .. })
        ));
    }

    #[test]
    fn dominance_examples() {
        let r = |v: i128| Rational::integer(v);
        assert!(!profile_dominates(&[r(1), r(1)], &[r(1), r(1)]));
        assert!(profile_dominates(&[r(0), r(1)], &[r(1), r(1)]));
        assert!(!profile_dominates(&[r(0), r(3)], &[r(1), r(1)]));
    }

    #[test]
    fn pareto_two_by_two() {
        let i = inst(2, &[&[1, 2], &[2, 1]]);
        let good = Allocation::new(2, vec![0, 1]).unwrap();
        let swapped = Allocation::new(2, vec![1, 0]).unwrap();
        assert!(is_pareto_optimal(&i, &good, DEFAULT_BUDGET).unwrap());
        assert!(!is_pareto_optimal(&i, &swapped, DEFAULT_BUDGET).unwrap());
        assert!(dominates(&i, &good, &swapped));
        assert_eq!(exists_efx_po(&i, DEFAULT_BUDGET).unwrap(), Some(good.clone()));
        let (beta, w) = best_efx_beta_over_po(&i, DEFAULT_BUDGET).unwrap();
        assert_eq!(beta, Beta::Finite(Rational::ONE));
        assert_eq!(w, good);
    }

    #[test]
    fn single_agent() {
        let i = inst(3, &[&[1, 3, 1]]);
        let only = Allocation::new(1, vec![0, 0, 0]).unwrap();
        assert!(is_pareto_optimal(&i, &only, DEFAULT_BUDGET).unwrap());
        assert_eq!(exists_efx_po(&i, DEFAULT_BUDGET).unwrap(), Some(only.clone()));
        assert_eq!(best_efx_beta_over_po(&i, DEFAULT_BUDGET).unwrap(), (Beta::Finite(Rational::ONE), only));
    }

    #[test]
    fn frontier_matches_brute_force() {
        let i = inst(3, &[&[1, 3, 1, 3], &[3, 1, 1, 1], &[1, 1, 3, 3]]);
        let all: Vec<_> = enumerate_allocations(&i, DEFAULT_BUDGET).unwrap().collect();
        let frontier = ParetoFrontier::new(&i, DEFAULT_BUDGET).unwrap();
        for a in &all {
            let brute = !all.iter().any(|b| dominates(&i, b, a));
            assert_eq!(frontier.contains(a), brute);
        }
        let scaled = Scaled::new(&i);
        for a in all.iter().take(20) {
            assert_eq!(to_beta(scaled.efx_beta(a.owners())), min_beta_efx(&i, a).value);
        }
    }
}
