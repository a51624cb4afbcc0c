use alloc::string::String;

use crate::rational::Rational;

/// Every failure the engine can report.
///
/// Input problems (`NotBiValued`, `ZeroCost`, ...) come from validation.
/// The remaining variants are raised by runtime checks of properties the
/// algorithms are supposed to maintain; seeing one means either an
/// implementation bug or a broken invariant, never bad input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("instance must have at least one agent and one item")]
    EmptyInstance,
    #[error("cost matrix rows have inconsistent lengths")]
    RaggedMatrix,
    #[error("negative cost {value} for agent {agent} on item {item}")]
    NegativeCost { agent: usize, item: usize, value: Rational },
    #[error("zero cost for agent {agent} on item {item}; binary instances are not supported")]
    ZeroCost { agent: usize, item: usize },
    #[error("agent {agent} has more than two distinct costs or a cost ratio differing from k")]
    NotBiValued { agent: usize },
    #[error("every agent values all items identically; no k > 1 exists")]
    AlreadyUniform,
    #[error("k = {0} must be strictly greater than 1")]
    InvalidK(Rational),
    #[error("agent {agent} has no cost-1 item")]
    NoLowItem { agent: usize },
    #[error("allocation refers to agent {agent} but the instance has {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("allocation covers {got} items, expected {expected}")]
    ItemCountMismatch { got: usize, expected: usize },
    #[error("payment {value} of item {item} is not 1 or k")]
    InvalidPayment { item: usize, value: Rational },
    #[error("enumeration of {agents}^{items} allocations exceeds the budget of {budget}")]
    BudgetExceeded { agents: usize, items: usize, budget: u64 },
    #[error("k must equal 2 for the exact EFX phase (got {0})")]
    RequiresKTwo(Rational),

    #[error("internal invariant failed: {0}")]
    InternalInvariant(String),
    #[error("iteration cap of {cap} exceeded in {phase}")]
    IterationCapExceeded { phase: &'static str, cap: usize },
    #[error("round cap of {cap} exceeded in {phase}")]
    RoundCapExceeded { phase: &'static str, cap: usize },
    #[error("item {item} is not an MPB item of agent {agent} ({context})")]
    MpbViolation { agent: usize, item: usize, context: &'static str },
    #[error("raising item {item} would push its payment above k")]
    RaiseOverflow { item: usize },
    #[error("no unraised agent holds an item initially owned by least earner {least}")]
    MissingIntermediary { least: usize },
    #[error("agent group property violated: {0}")]
    GroupPropertyViolation(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("lemma violated: {0}")]
    LemmaViolation(String),
    #[error("earning {earning} of agent {agent} lies outside the tiers z, z+1, z+2 (z = {z})")]
    TierViolation { agent: usize, earning: Rational, z: Rational },
    #[error("every bundle is empty")]
    AllEmpty,
}

impl Error {
    /// True for the variants that signal a failed runtime assertion.
    pub fn is_assertion(&self) -> bool {
        matches!(
            self,
            Error::InternalInvariant(_)
                | Error::IterationCapExceeded { .. }
                | Error::RoundCapExceeded { .. }
                | Error::MpbViolation { .. }
                | Error::RaiseOverflow { .. }
                | Error::MissingIntermediary { .. }
                | Error::GroupPropertyViolation(_)
                | Error::PreconditionViolated(_)
                | Error::LemmaViolation(_)
                | Error::TierViolation { .. }
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
