//! Instances, allocations, payments and the derived market quantities.
//!
//! Agents and items are dense `0..n` / `0..m` indices. A normalized
//! [`Instance`] stores one bit per (agent, item): cost `k` when set, cost `1`
//! otherwise. A [`MarketState`] couples an instance with an allocation and a
//! `{1, k}` payment vector and exposes pain-per-buck ratios, MPB sets,
//! earnings and the `L`/`H` item and `N_L`/`N_H` agent groups.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rational::Rational;

pub type Agent = usize;
pub type Item = usize;

/// Cost matrix before normalization. Entries are non-negative; zero entries
/// are rejected later by [`normalize_instance`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RawInstance {
    n: usize,
    m: usize,
    costs: Vec<Rational>,
}

impl RawInstance {
    pub fn new(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::EmptyInstance);
        }
        let mut costs = Vec::with_capacity(n * m);
        for (agent, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::RaggedMatrix);
            }
            for (item, value) in row.into_iter().enumerate() {
                if value.is_negative() {
                    return Err(Error::NegativeCost { agent, item, value });
                }
                costs.push(value);
            }
        }
        Ok(RawInstance { n, m, costs })
    }

    /// Convenience constructor from integer costs.
    pub fn from_integers(rows: &[&[i64]]) -> Result<Self> {
        RawInstance::new(
            rows.iter()
                .map(|row| row.iter().map(|&c| Rational::from(c)).collect())
                .collect(),
        )
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> usize {
        self.m
    }

    pub fn cost(&self, agent: Agent, item: Item) -> Rational {
        self.costs[agent * self.m + item]
    }

    pub fn row(&self, agent: Agent) -> &[Rational] {
        &self.costs[agent * self.m..(agent + 1) * self.m]
    }

    /// Multiplies one agent's costs by `factor`.
    pub fn with_scaled_row(&self, agent: Agent, factor: Rational) -> RawInstance {
        let mut out = self.clone();
        for c in &mut out.costs[agent * self.m..(agent + 1) * self.m] {
            *c = *c * factor;
        }
        out
    }
}

/// A normalized `{1, k}` instance.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Instance {
    n: usize,
    m: usize,
    k: Rational,
    high: Vec<bool>,
}

impl Instance {
    pub fn new(k: Rational, high: Vec<Vec<bool>>) -> Result<Self> {
        let n = high.len();
        let m = high.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::EmptyInstance);
        }
        if high.iter().any(|row| row.len() != m) {
            return Err(Error::RaggedMatrix);
        }
        Instance::from_flat(k, n, m, high.into_iter().flatten().collect())
    }

    fn from_flat(k: Rational, n: usize, m: usize, high: Vec<bool>) -> Result<Self> {
        if k <= Rational::ONE {
            return Err(Error::InvalidK(k));
        }
        for agent in 0..n {
            if high[agent * m..(agent + 1) * m].iter().all(|&h| h) {
                return Err(Error::NoLowItem { agent });
            }
        }
        Ok(Instance { n, m, k, high })
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> Rational {
        self.k
    }

    pub fn is_high(&self, agent: Agent, item: Item) -> bool {
        self.high[agent * self.m + item]
    }

    pub fn high_row(&self, agent: Agent) -> &[bool] {
        &self.high[agent * self.m..(agent + 1) * self.m]
    }

    pub fn cost(&self, agent: Agent, item: Item) -> Rational {
        if self.is_high(agent, item) {
            self.k
        } else {
            Rational::ONE
        }
    }

    pub fn bundle_cost<I>(&self, agent: Agent, items: I) -> Rational
    where
        I: IntoIterator<Item = Item>,
    {
        let (low, high) = items.into_iter().fold((0i128, 0i128), |(l, h), e| {
            if self.is_high(agent, e) {
                (l, h + 1)
            } else {
                (l + 1, h)
            }
        });
        Rational::integer(low) + Rational::integer(high) * self.k
    }

    /// Expands the bit matrix back into `{1, k}` costs.
    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            n: self.n,
            m: self.m,
            costs: self
                .high
                .iter()
                .map(|&h| if h { self.k } else { Rational::ONE })
                .collect(),
        }
    }
}

/// Rescales every agent's costs by its own minimum so that entries land in
/// `{1, k}`.
///
/// Each row may hold at most two distinct values, and every row with two
/// values must have the same high/low ratio, which becomes `k`. A row with a
/// single value becomes all ones. Because the check is per row, multiplying
/// any row by a positive constant leaves the result unchanged.
pub fn normalize_instance(raw: &RawInstance) -> Result<Instance> {
    let (n, m) = (raw.agents(), raw.items());
    let mut k: Option<Rational> = None;
    let mut high = Vec::with_capacity(n * m);
    for agent in 0..n {
        let row = raw.row(agent);
        if let Some(item) = row.iter().position(Rational::is_zero) {
            return Err(Error::ZeroCost { agent, item });
        }
        let lo = row.iter().copied().fold(row[0], Rational::min);
        let hi = row.iter().copied().fold(row[0], Rational::max);
        if row.iter().any(|&c| c != lo && c != hi) {
            return Err(Error::NotBiValued { agent });
        }
        if hi != lo {
            let ratio = hi / lo;
            match k {
                None => k = Some(ratio),
                Some(existing) if existing != ratio => {
                    return Err(Error::NotBiValued { agent })
                }
                Some(_) => {}
            }
        }
        high.extend(row.iter().map(|&c| hi != lo && c == hi));
    }
    let k = k.ok_or(Error::AlreadyUniform)?;
    Instance::from_flat(k, n, m, high)
}

/// A total map from items to agents.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Allocation {
    n: usize,
    owner: Vec<Agent>,
}

impl Allocation {
    pub fn new(agents: usize, owner: Vec<Agent>) -> Result<Self> {
        if agents == 0 || owner.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if let Some(&agent) = owner.iter().find(|&&a| a >= agents) {
            return Err(Error::AgentOutOfRange { agent, n: agents });
        }
        Ok(Allocation { n: agents, owner })
    }

    /// Builds an allocation from explicit bundles; every item must appear in
    /// exactly one bundle.
    pub fn from_bundles(items: usize, bundles: &[Vec<Item>]) -> Result<Self> {
        let mut owner = vec![usize::MAX; items];
        let mut seen = 0;
        for (agent, bundle) in bundles.iter().enumerate() {
            for &e in bundle {
                if e >= items || owner[e] != usize::MAX {
                    return Err(Error::ItemCountMismatch { got: seen + 1, expected: items });
                }
                owner[e] = agent;
                seen += 1;
            }
        }
        if seen != items {
            return Err(Error::ItemCountMismatch { got: seen, expected: items });
        }
        Allocation::new(bundles.len(), owner)
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, item: Item) -> Agent {
        self.owner[item]
    }

    pub fn owners(&self) -> &[Agent] {
        &self.owner
    }

    /// Items held by `agent`, ascending.
    pub fn bundle(&self, agent: Agent) -> impl Iterator<Item = Item> + '_ {
        self.owner
            .iter()
            .enumerate()
            .filter(move |&(_, &a)| a == agent)
            .map(|(e, _)| e)
    }

    pub fn bundles(&self) -> Vec<Vec<Item>> {
        let mut out = vec![Vec::new(); self.n];
        for (e, &a) in self.owner.iter().enumerate() {
            out[a].push(e);
        }
        out
    }

    pub(crate) fn assign(&mut self, item: Item, agent: Agent) {
        self.owner[item] = agent;
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum PaymentLevel {
    Low,
    High,
}

/// Item payments, each either `1` or `k`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PaymentVector {
    k: Rational,
    levels: Vec<PaymentLevel>,
}

impl PaymentVector {
    pub fn from_levels(k: Rational, levels: Vec<PaymentLevel>) -> Self {
        PaymentVector { k, levels }
    }

    pub fn all_low(k: Rational, items: usize) -> Self {
        PaymentVector::from_levels(k, vec![PaymentLevel::Low; items])
    }

    pub fn from_values(k: Rational, values: &[Rational]) -> Result<Self> {
        let levels = values
            .iter()
            .enumerate()
            .map(|(item, &value)| {
                if value == Rational::ONE {
                    Ok(PaymentLevel::Low)
                } else if value == k {
                    Ok(PaymentLevel::High)
                } else {
                    Err(Error::InvalidPayment { item, value })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PaymentVector { k, levels })
    }

    pub fn k(&self) -> Rational {
        self.k
    }

    pub fn items(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, item: Item) -> PaymentLevel {
        self.levels[item]
    }

    pub fn levels(&self) -> &[PaymentLevel] {
        &self.levels
    }

    pub fn is_high(&self, item: Item) -> bool {
        self.levels[item] == PaymentLevel::High
    }

    pub fn payment(&self, item: Item) -> Rational {
        match self.levels[item] {
            PaymentLevel::Low => Rational::ONE,
            PaymentLevel::High => self.k,
        }
    }

    pub fn values(&self) -> Vec<Rational> {
        (0..self.levels.len()).map(|e| self.payment(e)).collect()
    }

    pub fn total<I: IntoIterator<Item = Item>>(&self, items: I) -> Rational {
        items.into_iter().map(|e| self.payment(e)).sum()
    }

    /// Multiplies a payment by `k`; only payment-1 items may be raised.
    pub(crate) fn raise(&mut self, item: Item) -> Result<()> {
        match self.levels[item] {
            PaymentLevel::Low => {
                self.levels[item] = PaymentLevel::High;
                Ok(())
            }
            PaymentLevel::High => Err(Error::RaiseOverflow { item }),
        }
    }
}

/// Instance + allocation + payments, with the derived market quantities.
///
/// Pain-per-buck ratios depend only on costs and payments, so moving items
/// refreshes bundle counts while raising payments refreshes `alpha` and the
/// MPB sets as well.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MarketState {
    instance: Instance,
    allocation: Allocation,
    payments: PaymentVector,
    alpha: Vec<Rational>,
    mpb: Vec<bool>,
    low_count: Vec<u32>,
    high_count: Vec<u32>,
}

impl MarketState {
    pub fn new(instance: Instance, allocation: Allocation, payments: PaymentVector) -> Result<Self> {
        if allocation.agents() != instance.agents() {
            return Err(Error::AgentOutOfRange {
                agent: allocation.agents().saturating_sub(1),
                n: instance.agents(),
            });
        }
        if allocation.items() != instance.items() {
            return Err(Error::ItemCountMismatch {
                got: allocation.items(),
                expected: instance.items(),
            });
        }
        if payments.items() != instance.items() {
            return Err(Error::ItemCountMismatch {
                got: payments.items(),
                expected: instance.items(),
            });
        }
        if payments.k() != instance.k() {
            return Err(Error::InvalidPayment { item: 0, value: payments.k() });
        }
        let n = instance.agents();
        let mut state = MarketState {
            instance,
            allocation,
            payments,
            alpha: vec![Rational::ZERO; n],
            mpb: Vec::new(),
            low_count: vec![0; n],
            high_count: vec![0; n],
        };
        state.refresh_ratios();
        state.refresh_counts();
        Ok(state)
    }

    fn refresh_ratios(&mut self) {
        let (n, m) = (self.instance.agents(), self.instance.items());
        self.mpb = vec![false; n * m];
        for i in 0..n {
            let ratio = |e: Item| self.instance.cost(i, e) / self.payments.payment(e);
            let alpha = (0..m).map(ratio).fold(ratio(0), Rational::min);
            self.alpha[i] = alpha;
            for e in 0..m {
                self.mpb[i * m + e] = ratio(e) == alpha;
            }
        }
    }

    fn refresh_counts(&mut self) {
        self.low_count.iter_mut().for_each(|c| *c = 0);
        self.high_count.iter_mut().for_each(|c| *c = 0);
        for (e, &a) in self.allocation.owners().iter().enumerate() {
            if self.payments.is_high(e) {
                self.high_count[a] += 1;
            } else {
                self.low_count[a] += 1;
            }
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    pub fn payments(&self) -> &PaymentVector {
        &self.payments
    }

    pub fn agents(&self) -> usize {
        self.instance.agents()
    }

    pub fn items(&self) -> usize {
        self.instance.items()
    }

    pub fn k(&self) -> Rational {
        self.instance.k()
    }

    pub fn bundle(&self, agent: Agent) -> impl Iterator<Item = Item> + '_ {
        self.allocation.bundle(agent)
    }

    pub fn bundle_len(&self, agent: Agent) -> usize {
        (self.low_count[agent] + self.high_count[agent]) as usize
    }

    /// Number of payment-1 items held by `agent`.
    pub fn low_count(&self, agent: Agent) -> usize {
        self.low_count[agent] as usize
    }

    /// Number of payment-k items held by `agent`.
    pub fn high_count(&self, agent: Agent) -> usize {
        self.high_count[agent] as usize
    }

    /// Pain-per-buck ratio `c_i(e) / p(e)`.
    pub fn ratio(&self, agent: Agent, item: Item) -> Rational {
        self.instance.cost(agent, item) / self.payments.payment(item)
    }

    /// Minimum pain-per-buck ratio of `agent` over all items.
    pub fn alpha(&self, agent: Agent) -> Rational {
        self.alpha[agent]
    }

    pub fn is_mpb(&self, agent: Agent, item: Item) -> bool {
        self.mpb[agent * self.items() + item]
    }

    pub fn mpb_items(&self, agent: Agent) -> Vec<Item> {
        (0..self.items()).filter(|&e| self.is_mpb(agent, e)).collect()
    }

    /// `p(X_i)`.
    pub fn earning(&self, agent: Agent) -> Rational {
        Rational::from(self.low_count[agent]) + Rational::from(self.high_count[agent]) * self.k()
    }

    /// `p(X_i)` minus the largest single payment in the bundle; zero for an
    /// empty bundle.
    pub fn hat_earning(&self, agent: Agent) -> Rational {
        let (low, high) = (self.low_count[agent], self.high_count[agent]);
        if high > 0 {
            Rational::from(low) + Rational::from(high - 1) * self.k()
        } else if low > 0 {
            Rational::from(low - 1)
        } else {
            Rational::ZERO
        }
    }

    /// Items with payment 1 (`L`).
    pub fn low_items(&self) -> Vec<Item> {
        (0..self.items()).filter(|&e| !self.payments.is_high(e)).collect()
    }

    /// Items with payment k (`H`).
    pub fn high_items(&self) -> Vec<Item> {
        (0..self.items()).filter(|&e| self.payments.is_high(e)).collect()
    }

    /// `i ∈ N_L`: the bundle holds no payment-k item.
    pub fn is_low_agent(&self, agent: Agent) -> bool {
        self.high_count[agent] == 0
    }

    /// `i ∈ N_H`: the bundle holds at least one payment-k item.
    pub fn is_high_agent(&self, agent: Agent) -> bool {
        self.high_count[agent] > 0
    }

    pub fn low_agents(&self) -> Vec<Agent> {
        (0..self.agents()).filter(|&i| self.is_low_agent(i)).collect()
    }

    pub fn high_agents(&self) -> Vec<Agent> {
        (0..self.agents()).filter(|&i| self.is_high_agent(i)).collect()
    }

    /// Every agent holds only MPB items.
    pub fn is_equilibrium(&self) -> bool {
        self.allocation
            .owners()
            .iter()
            .enumerate()
            .all(|(e, &a)| self.is_mpb(a, e))
    }

    pub fn earnings(&self) -> Vec<Rational> {
        (0..self.agents()).map(|i| self.earning(i)).collect()
    }

    pub(crate) fn move_item(&mut self, item: Item, to: Agent) {
        let from = self.allocation.owner(item);
        if from == to {
            return;
        }
        if self.payments.is_high(item) {
            self.high_count[from] -= 1;
            self.high_count[to] += 1;
        } else {
            self.low_count[from] -= 1;
            self.low_count[to] += 1;
        }
        self.allocation.assign(item, to);
    }

    pub(crate) fn raise_items(&mut self, items: &[Item]) -> Result<()> {
        for &e in items {
            self.payments.raise(e)?;
        }
        self.refresh_ratios();
        self.refresh_counts();
        Ok(())
    }
}

/// Assembles a market state and computes every derived quantity.
pub fn build_market_state(
    instance: Instance,
    allocation: Allocation,
    payments: PaymentVector,
) -> Result<MarketState> {
    MarketState::new(instance, allocation, payments)
}

pub fn earning(state: &MarketState, agent: Agent) -> Rational {
    state.earning(agent)
}

pub fn hat_earning(state: &MarketState, agent: Agent) -> Rational {
    state.hat_earning(agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d).unwrap()
    }

    #[test]
    fn normalize_rescales_uniform_row() {
        let raw = RawInstance::from_integers(&[&[1, 6], &[6, 6]]).unwrap();
        let inst = normalize_instance(&raw).unwrap();
        assert_eq!(inst.k(), Rational::integer(6));
        assert_eq!(inst.high_row(0), &[false, true]);
        assert_eq!(inst.high_row(1), &[false, false]);
    }

    #[test]
    fn normalize_fractional_k() {
        let raw = RawInstance::from_integers(&[&[2, 3], &[3, 2]]).unwrap();
        let inst = normalize_instance(&raw).unwrap();
        assert_eq!(inst.k(), r(3, 2));
        assert_eq!(inst.cost(0, 0), Rational::ONE);
        assert_eq!(inst.cost(0, 1), r(3, 2));
        assert_eq!(inst.cost(1, 0), r(3, 2));
        assert_eq!(inst.cost(1, 1), Rational::ONE);
    }

    #[test]
    fn normalize_rejects_three_values() {
        let raw = RawInstance::from_integers(&[&[1, 2, 5]]).unwrap();
        assert_eq!(normalize_instance(&raw), Err(Error::NotBiValued { agent: 0 }));
    }

    #[test]
    fn normalize_rejects_mismatched_ratios() {
        let raw = RawInstance::from_integers(&[&[1, 2], &[1, 3]]).unwrap();
        assert_eq!(normalize_instance(&raw), Err(Error::NotBiValued { agent: 1 }));
    }

    #[test]
    fn normalize_rejects_zero_and_uniform() {
        let raw = RawInstance::from_integers(&[&[0, 1], &[1, 1]]).unwrap();
        assert_eq!(normalize_instance(&raw), Err(Error::ZeroCost { agent: 0, item: 0 }));
        let raw = RawInstance::from_integers(&[&[3, 3], &[5, 5]]).unwrap();
        assert_eq!(normalize_instance(&raw), Err(Error::AlreadyUniform));
        assert!(matches!(
            RawInstance::from_integers(&[&[-1, 1]]),
            Err(Error::NegativeCost { .. })
        ));
    }

    #[test]
    fn instance_requires_low_item_and_k_above_one() {
        assert_eq!(
            Instance::new(Rational::integer(2), vec![vec![true, true]]),
            Err(Error::NoLowItem { agent: 0 })
        );
        assert_eq!(
            Instance::new(Rational::ONE, vec![vec![false]]),
            Err(Error::InvalidK(Rational::ONE))
        );
    }

    fn two_by_two() -> Instance {
        Instance::new(Rational::integer(2), vec![vec![false, true], vec![true, false]]).unwrap()
    }

    #[test]
    fn market_state_two_agents() {
        let inst = two_by_two();
        let alloc = Allocation::new(2, vec![0, 1]).unwrap();
        let pay = PaymentVector::all_low(inst.k(), 2);
        let s = build_market_state(inst, alloc, pay).unwrap();
        assert_eq!(s.alpha(0), Rational::ONE);
        assert_eq!(s.alpha(1), Rational::ONE);
        assert_eq!(s.mpb_items(0), vec![0]);
        assert_eq!(s.mpb_items(1), vec![1]);
        assert_eq!(s.low_items(), vec![0, 1]);
        assert!(s.high_items().is_empty());
        assert_eq!(s.low_agents(), vec![0, 1]);
        assert!(s.is_equilibrium());
    }

    #[test]
    fn market_state_single_agent() {
        let inst = Instance::new(Rational::integer(3), vec![vec![false]]).unwrap();
        let alloc = Allocation::new(1, vec![0]).unwrap();
        let s = build_market_state(inst.clone(), alloc, PaymentVector::all_low(inst.k(), 1)).unwrap();
        assert_eq!(s.alpha(0), Rational::ONE);
        assert_eq!(s.mpb_items(0), vec![0]);
        assert_eq!(s.low_agents(), vec![0]);
    }

    #[test]
    fn payments_outside_one_and_k_rejected() {
        let k = Rational::integer(2);
        assert_eq!(
            PaymentVector::from_values(k, &[Rational::ONE, Rational::integer(3)]),
            Err(Error::InvalidPayment { item: 1, value: Rational::integer(3) })
        );
    }

    #[test]
    fn earnings_and_hat() {
        let k = Rational::integer(6);
        let inst = Instance::new(k, vec![vec![false, false, true], vec![false, false, false]]).unwrap();
        let alloc = Allocation::new(2, vec![0, 0, 0]).unwrap();
        let pay = PaymentVector::from_values(k, &[Rational::ONE, Rational::ONE, k]).unwrap();
        let s = build_market_state(inst, alloc, pay).unwrap();
        assert_eq!(earning(&s, 0), Rational::integer(8));
        assert_eq!(hat_earning(&s, 0), Rational::integer(2));
        assert_eq!(earning(&s, 1), Rational::ZERO);
        assert_eq!(hat_earning(&s, 1), Rational::ZERO);
    }

    #[test]
    fn hat_of_single_and_triple_low() {
        let k = Rational::integer(6);
        let inst = Instance::new(k, vec![vec![false; 4], vec![false; 4]]).unwrap();
        let alloc = Allocation::new(2, vec![0, 1, 1, 1]).unwrap();
        let s = build_market_state(inst, alloc, PaymentVector::all_low(k, 4)).unwrap();
        assert_eq!(hat_earning(&s, 0), Rational::ZERO);
        assert_eq!(earning(&s, 1), Rational::integer(3));
        assert_eq!(hat_earning(&s, 1), Rational::integer(2));
    }

    #[test]
    fn from_bundles_requires_partition() {
        assert!(Allocation::from_bundles(3, &[vec![0, 1], vec![2]]).is_ok());
        assert!(Allocation::from_bundles(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(Allocation::from_bundles(3, &[vec![0], vec![2]]).is_err());
    }
}
