//! Initial `{1, k}` equilibrium, MPB graph, overpaid-path resolution and
//! agent groups.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Agent, Allocation, Instance, Item, MarketState, PaymentLevel, PaymentVector};
use crate::rational::Rational;

/// Items costing `k` to every agent (`M+`) and the rest (`M-`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemPartition {
    consistently_large: Vec<bool>,
}

impl ItemPartition {
    pub fn is_consistently_large(&self, item: Item) -> bool {
        self.consistently_large[item]
    }

    pub fn consistently_large(&self) -> Vec<Item> {
        (0..self.consistently_large.len()).filter(|&e| self.consistently_large[e]).collect()
    }

    pub fn remainder(&self) -> Vec<Item> {
        (0..self.consistently_large.len()).filter(|&e| !self.consistently_large[e]).collect()
    }
}

pub fn split_items(instance: &Instance) -> ItemPartition {
    let consistently_large = (0..instance.items())
        .map(|e| (0..instance.agents()).all(|i| instance.is_high(i, e)))
        .collect();
    ItemPartition { consistently_large }
}

/// One item changing hands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Transfer {
    pub item: Item,
    pub from: Agent,
    pub to: Agent,
}

/// Directed graph on agents with an edge `i -> j` iff `X_j ∩ MPB_i ≠ ∅`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MpbGraph {
    n: usize,
    edge: Vec<bool>,
}

impl MpbGraph {
    pub fn new(state: &MarketState) -> Self {
        let n = state.agents();
        let mut edge = vec![false; n * n];
        for (e, &j) in state.allocation().owners().iter().enumerate() {
            for i in (0..n).filter(|&i| i != j) {
                if state.is_mpb(i, e) {
                    edge[i * n + j] = true;
                }
            }
        }
        MpbGraph { n, edge }
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, from: Agent, to: Agent) -> bool {
        self.edge[from * self.n + to]
    }

    pub fn successors(&self, agent: Agent) -> impl Iterator<Item = Agent> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(agent, j))
    }

    pub fn predecessors(&self, agent: Agent) -> impl Iterator<Item = Agent> + '_ {
        (0..self.n).filter(move |&i| self.has_edge(i, agent))
    }

    /// Agents with a directed path to `target` that stays inside `allowed`
    /// (the target itself included).
    pub fn reaching(&self, target: Agent, allowed: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[target] = true;
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for u in self.predecessors(v) {
                if allowed[u] && !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    /// Agents reachable from `source` along edges, `source` included.
    pub fn reachable_from(&self, source: Agent) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in self.successors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// Payment-1 items go to the smallest-index agent with cost 1; items in `M+`
/// get payment `k` and go to whoever currently earns least.
pub fn build_initial_state(instance: &Instance) -> Result<MarketState> {
    let (n, m, k) = (instance.agents(), instance.items(), instance.k());
    let split = split_items(instance);
    let mut owner = vec![0; m];
    let mut levels = vec![PaymentLevel::Low; m];
    let mut earned = vec![Rational::ZERO; n];
    for e in 0..m {
        let (agent, pay) = if split.is_consistently_large(e) {
            levels[e] = PaymentLevel::High;
            (argmin_earning(&earned), k)
        } else {
            let agent = (0..n).find(|&i| !instance.is_high(i, e)).expect("item outside M+ has a cost-1 agent");
            (agent, Rational::ONE)
        };
        owner[e] = agent;
        earned[agent] += pay;
    }
    let state = MarketState::new(
        instance.clone(),
        Allocation::new(n, owner)?,
        PaymentVector::from_levels(k, levels),
    )?;
    if let Some(i) = (0..n).find(|&i| state.alpha(i) != Rational::ONE) {
        return Err(Error::InternalInvariant(format!(
            "initial MPB ratio of agent {} is {}, expected 1",
            i + 1,
            state.alpha(i)
        )));
    }
    Ok(state)
}

fn argmin_earning(earned: &[Rational]) -> Agent {
    (0..earned.len()).min_by_key(|&i| (earned[i], i)).unwrap_or(0)
}

/// Fires transfer chains until no over-earner can push earning to a poorer
/// agent along MPB-feasible hops. See [`resolve_overpaid_paths_traced`].
pub fn resolve_overpaid_paths(state: MarketState) -> Result<MarketState> {
    resolve_overpaid_paths_traced(state, &mut Vec::new())
}

/// Same as [`resolve_overpaid_paths`], appending every move to `log`.
///
/// A chain `i = u_0, ..., u_t = j` ships one item from each `u_s` to
/// `u_{s+1}`, each item being MPB for its receiver, and fires only when
/// `hat_i > p(X_j)`. Chains run over payment-1 items with the payment-`k`
/// items held aside; those are then dealt one by one, in index order, to the
/// current least earner. Every agent must start with MPB ratio 1, which
/// makes every payment-`k` item MPB for everyone.
pub fn resolve_overpaid_paths_traced(mut state: MarketState, log: &mut Vec<Transfer>) -> Result<MarketState> {
    let (n, m) = (state.agents(), state.items());
    if let Some(i) = (0..n).find(|&i| state.alpha(i) != Rational::ONE) {
        return Err(Error::PreconditionViolated(format!(
            "path resolution needs MPB ratio 1 for every agent, agent {} has {}",
            i + 1,
            state.alpha(i)
        )));
    }
    if !state.is_equilibrium() {
        return Err(Error::PreconditionViolated("path resolution needs an equilibrium".into()));
    }

    let cap = 4 * n * m * (n + m);
    let mut fired = 0;
    while let Some(path) = find_low_chain(&state) {
        fired += 1;
        if fired > cap {
            return Err(Error::IterationCapExceeded { phase: "path resolution", cap });
        }
        let before = squared_low_counts(&state);
        for s in (0..path.len() - 1).rev() {
            let (u, v) = (path[s], path[s + 1]);
            let e = state
                .bundle(u)
                .find(|&e| !state.payments().is_high(e) && state.is_mpb(v, e))
                .ok_or_else(|| Error::InternalInvariant(format!("chain hop {} -> {} lost its item", u + 1, v + 1)))?;
            ship(&mut state, e, v, log, "path resolution")?;
        }
        if squared_low_counts(&state) >= before {
            return Err(Error::InternalInvariant("path resolution potential did not decrease".into()));
        }
    }

    let mut earned: Vec<Rational> = (0..n).map(|i| Rational::from(state.low_count(i))).collect();
    for e in state.high_items() {
        let to = argmin_earning(&earned);
        earned[to] += state.k();
        ship(&mut state, e, to, log, "high item dealing")?;
    }

    check_path_fixpoint(&state)?;
    Ok(state)
}

fn ship(state: &mut MarketState, item: Item, to: Agent, log: &mut Vec<Transfer>, context: &'static str) -> Result<()> {
    let from = state.allocation().owner(item);
    if from == to {
        return Ok(());
    }
    if !state.is_mpb(to, item) {
        return Err(Error::MpbViolation { agent: to, item, context });
    }
    state.move_item(item, to);
    log.push(Transfer { item, from, to });
    Ok(())
}

fn squared_low_counts(state: &MarketState) -> u64 {
    (0..state.agents()).map(|i| (state.low_count(i) as u64).pow(2)).sum()
}

/// Shortest violating chain over payment-1 items, scanning sources in index
/// order and breaking ties by the lexicographically least path.
fn find_low_chain(state: &MarketState) -> Option<Vec<Agent>> {
    let n = state.agents();
    let count: Vec<usize> = (0..n).map(|i| state.low_count(i)).collect();
    let floor = *count.iter().min()?;
    let mut flow = vec![false; n * n];
    for e in state.low_items() {
        let u = state.allocation().owner(e);
        for v in (0..n).filter(|&v| v != u && state.is_mpb(v, e)) {
            flow[u * n + v] = true;
        }
    }
    for i in 0..n {
        let hat = count[i].saturating_sub(1);
        if hat <= floor {
            continue;
        }
        let mut parent = vec![usize::MAX; n];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            if u != i && count[u] < hat {
                let mut path = vec![u];
                let mut v = u;
                while v != i {
                    v = parent[v];
                    path.push(v);
                }
                path.reverse();
                return Some(path);
            }
            for v in 0..n {
                if flow[u * n + v] && parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
    }
    None
}

/// Checks that no chain `i ⇝ j` over MPB-feasible hops has `hat_i > p(X_j)`.
pub fn check_path_fixpoint(state: &MarketState) -> Result<()> {
    let graph = MpbGraph::new(state);
    for i in 0..state.agents() {
        let hat = state.hat_earning(i);
        // Item flow runs against the edges: j can take from i when i -> j is
        // reversed, so the agents i can push to are those reaching i.
        let all = vec![true; state.agents()];
        let receivers = graph.reaching(i, &all);
        if let Some(j) = (0..state.agents()).find(|&j| j != i && receivers[j] && hat > state.earning(j)) {
            return Err(Error::InternalInvariant(format!(
                "overpaid chain remains from agent {} (hat {}) to agent {} (earning {})",
                i + 1,
                hat,
                j + 1,
                state.earning(j)
            )));
        }
    }
    Ok(())
}

/// Groups `N_1, ..., N_R` in creation order plus the reindexing that makes
/// each group a contiguous block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentGroups {
    groups: Vec<Vec<Agent>>,
    representatives: Vec<Agent>,
    order: Vec<Agent>,
    rank: Vec<usize>,
    group_of: Vec<usize>,
}

impl AgentGroups {
    /// Members of each group, ascending by original index.
    pub fn groups(&self) -> &[Vec<Agent>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn representatives(&self) -> &[Agent] {
        &self.representatives
    }

    pub fn group_of(&self, agent: Agent) -> usize {
        self.group_of[agent]
    }

    /// Agents listed by their new index.
    pub fn order(&self) -> &[Agent] {
        &self.order
    }

    /// New index of `agent`.
    pub fn rank(&self, agent: Agent) -> usize {
        self.rank[agent]
    }

    /// Groups with an explicit member list; used when replaying saved states.
    pub fn from_groups(n: usize, groups: Vec<Vec<Agent>>, representatives: Vec<Agent>) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        for (r, members) in groups.iter().enumerate() {
            for &a in members {
                if a >= n || group_of[a] != usize::MAX {
                    return Err(Error::GroupPropertyViolation(format!("groups do not partition {n} agents")));
                }
                group_of[a] = r;
                order.push(a);
            }
        }
        if order.len() != n || representatives.len() != groups.len() {
            return Err(Error::GroupPropertyViolation(format!("groups do not partition {n} agents")));
        }
        let mut rank = vec![0; n];
        for (pos, &a) in order.iter().enumerate() {
            rank[a] = pos;
        }
        Ok(AgentGroups { groups, representatives, order, rank, group_of })
    }
}

/// Repeatedly takes the big earner among ungrouped agents and groups it with
/// every ungrouped agent that reaches it in the MPB graph restricted to
/// ungrouped agents. Asserts the three group properties on the result.
pub fn partition_agent_groups(state: &MarketState) -> Result<AgentGroups> {
    let n = state.agents();
    let graph = MpbGraph::new(state);
    let mut ungrouped = vec![true; n];
    let mut groups = Vec::new();
    let mut representatives = Vec::new();
    while let Some(b) = (0..n)
        .filter(|&i| ungrouped[i])
        .max_by_key(|&i| (state.hat_earning(i), core::cmp::Reverse(i)))
    {
        let members: Vec<Agent> = {
            let reach = graph.reaching(b, &ungrouped);
            (0..n).filter(|&i| reach[i]).collect()
        };
        for &a in &members {
            ungrouped[a] = false;
        }
        groups.push(members);
        representatives.push(b);
    }
    let out = AgentGroups::from_groups(n, groups, representatives)?;
    check_group_properties(state, &out)?;
    Ok(out)
}

fn check_group_properties(state: &MarketState, groups: &AgentGroups) -> Result<()> {
    let n = state.agents();
    for i in 0..n {
        for j in (0..n).filter(|&j| groups.group_of(i) < groups.group_of(j)) {
            if let Some(e) = state.bundle(i).find(|&e| !state.instance().is_high(j, e)) {
                return Err(Error::GroupPropertyViolation(format!(
                    "agent {} in a lower group has cost 1 on item {} held by agent {}",
                    j + 1,
                    e + 1,
                    i + 1
                )));
            }
        }
    }
    let last = groups.group_count() - 1;
    let split = split_items(state.instance());
    if let Some(e) = split
        .consistently_large()
        .into_iter()
        .find(|&e| groups.group_of(state.allocation().owner(e)) != last)
    {
        return Err(Error::GroupPropertyViolation(format!(
            "consistently large item {} is outside the lowest group",
            e + 1
        )));
    }
    for members in groups.groups() {
        for &i in members {
            if state.bundle_len(i) == 0 {
                continue;
            }
            if let Some(&j) = members.iter().find(|&&j| state.hat_earning(i) > state.earning(j)) {
                return Err(Error::GroupPropertyViolation(format!(
                    "agents {} and {} share a group but are not pEF1",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Output of the whole initialization pipeline.
#[derive(Clone, Debug)]
pub struct InitialEquilibrium {
    pub state: MarketState,
    pub groups: AgentGroups,
    pub transfers: Vec<Transfer>,
}

/// `build_initial_state`, then path resolution, then group partition.
pub fn initial_equilibrium(instance: &Instance) -> Result<InitialEquilibrium> {
    let mut transfers = Vec::new();
    let state = resolve_overpaid_paths_traced(build_initial_state(instance)?, &mut transfers)?;
    let groups = partition_agent_groups(&state)?;
    Ok(InitialEquilibrium { state, groups, transfers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(k: i128, rows: &[&[u8]]) -> Instance {
        Instance::new(
            Rational::integer(k),
            rows.iter().map(|r| r.iter().map(|&c| c != 1).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_examples() {
        let s = split_items(&inst(2, &[&[1, 2], &[1, 2]]));
        assert_eq!(s.consistently_large(), vec![1]);
        assert_eq!(s.remainder(), vec![0]);
        // A raw row [2, 2] normalizes to all-low, so item 2 is not in M+.
        let raw = crate::model::RawInstance::from_integers(&[&[1, 2], &[2, 2]]).unwrap();
        let s = split_items(&crate::model::normalize_instance(&raw).unwrap());
        assert!(s.consistently_large().is_empty());
        assert!(split_items(&inst(2, &[&[1, 1], &[1, 1]])).consistently_large().is_empty());
    }

    #[test]
    fn initial_state_examples() {
        let s = build_initial_state(&inst(2, &[&[1, 2], &[2, 1]])).unwrap();
        assert_eq!(s.allocation().owners(), &[0, 1]);
        assert_eq!(s.payments().values(), vec![Rational::ONE, Rational::ONE]);

        let s = build_initial_state(&inst(2, &[&[1, 2], &[1, 2]])).unwrap();
        assert_eq!(s.allocation().owner(1), 1);
        assert!(s.payments().is_high(1));

        let s = build_initial_state(&inst(2, &[&[1; 4], &[1; 4]])).unwrap();
        assert_eq!(s.allocation().owners(), &[0, 0, 0, 0]);
    }

    #[test]
    fn single_high_column_goes_to_first_agent() {
        let i = Instance::new(Rational::integer(2), vec![vec![false, true], vec![false, true]]).unwrap();
        let s = build_initial_state(&i).unwrap();
        // e1 goes to agent 1 (earning 1) so the M+ item lands on agent 2.
        assert_eq!(s.allocation().owners(), &[0, 1]);
        let i = Instance::new(Rational::integer(2), vec![vec![true, false], vec![true, false]]).unwrap();
        let s = build_initial_state(&i).unwrap();
        assert_eq!(s.allocation().owner(0), 0);
        assert!(s.payments().is_high(0));
    }

    #[test]
    fn resolution_balances_identical_agents() {
        let s = build_initial_state(&inst(2, &[&[1; 4], &[1; 4]])).unwrap();
        let mut log = Vec::new();
        let s = resolve_overpaid_paths_traced(s, &mut log).unwrap();
        assert_eq!(s.earnings(), vec![Rational::integer(2), Rational::integer(2)]);
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|t| t.from == 0 && t.to == 1));
    }

    #[test]
    fn resolution_fixed_point_unchanged() {
        let s = build_initial_state(&inst(2, &[&[1, 2], &[2, 1]])).unwrap();
        let r = resolve_overpaid_paths(s.clone()).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn resolution_through_intermediary() {
        // Agent 1 holds e1..e4, agent 2 holds e5..e7 and can take e1, agent 3
        // can only take e5. The chain 1 -> 2 -> 3 leaves agent 2 at earning 3.
        let i = inst(
            3,
            &[&[1, 1, 1, 1, 3, 3, 3], &[1, 3, 3, 3, 1, 1, 1], &[3, 3, 3, 3, 1, 3, 3]],
        );
        let s = build_initial_state(&i).unwrap();
        assert_eq!(s.allocation().owners(), &[0, 0, 0, 0, 1, 1, 1]);
        let mut log = Vec::new();
        let s = resolve_overpaid_paths_traced(s, &mut log).unwrap();
        assert_eq!(
            log,
            vec![Transfer { item: 4, from: 1, to: 2 }, Transfer { item: 0, from: 0, to: 1 }]
        );
        assert_eq!(s.earnings(), vec![Rational::integer(3), Rational::integer(3), Rational::ONE]);
        assert!(s.is_equilibrium());
    }

    #[test]
    fn groups_of_disconnected_agents() {
        // Agent 1 earns 3, agent 2 earns 1, nobody can take anyone's items.
        let i = inst(2, &[&[1, 1, 1, 2], &[2, 2, 2, 1]]);
        let s = resolve_overpaid_paths(build_initial_state(&i).unwrap()).unwrap();
        let g = partition_agent_groups(&s).unwrap();
        assert_eq!(g.groups(), &[vec![0], vec![1]]);
        assert_eq!(g.representatives(), &[0, 1]);
    }

    #[test]
    fn single_group_and_single_agent() {
        let i = inst(2, &[&[1, 1], &[1, 1]]);
        let e = initial_equilibrium(&i).unwrap();
        assert_eq!(e.groups.group_count(), 1);
        let i = inst(2, &[&[1, 2, 2]]);
        let e = initial_equilibrium(&i).unwrap();
        assert_eq!(e.groups.groups(), &[vec![0]]);
        assert_eq!(e.groups.rank(0), 0);
    }

    #[test]
    fn reindexing_makes_groups_contiguous() {
        // Agent 2 is the big earner and forms the first group.
        let i = inst(2, &[&[1, 2, 2, 2], &[2, 1, 1, 1]]);
        let e = initial_equilibrium(&i).unwrap();
        assert_eq!(e.groups.groups(), &[vec![1], vec![0]]);
        assert_eq!(e.groups.order(), &[1, 0]);
        assert_eq!((e.groups.rank(0), e.groups.rank(1)), (1, 0));
    }
}
