//! Pareto-optimal fair division of chores for bi-valued cost instances.
//!
//! The pipeline builds a `{1, k}`-payment market equilibrium, turns it
//! pEF1 ([`pef1_solver`]), then either `(2 − 1/k)`-EFX ([`approx_efx`]) or,
//! when `k = 2`, exactly EFX ([`exact_efx_k2`]). Every stage keeps the
//! allocation an equilibrium, which certifies Pareto optimality; [`verify`]
//! and [`oracle`] check the claims independently.
//!
//! All arithmetic is exact. The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod approx_efx;
pub mod error;
pub mod exact_efx_k2;
pub mod market_init;
pub mod model;
pub mod oracle;
pub mod pef1_solver;
pub mod rational;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    build_market_state, normalize_instance, Agent, Allocation, Instance, Item, MarketState, PaymentLevel,
    PaymentVector, RawInstance,
};
pub use rational::Rational;
pub use verify::{Beta, BetaResult, FairnessVerdict, Witness};
