//! Seeded instance generator.
//!
//! The stream is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`). Costs
//! are drawn row-major: entry `(i, e)` is `k` iff `x · den < num · 2⁶⁴` for the
//! next 64-bit draw `x` and `highProb = num/den`. A row that came out all
//! high gets one entry reset to 1 at index `⌊x · m / 2⁶⁴⌋` for a fresh draw.

use bichore_core::{RawInstance, Rational};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    pub k: Rational,
    pub high_prob: Rational,
    pub seed: u64,
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(HarnessError::field("n/m", "must be at least 1"));
        }
        if self.k <= Rational::ONE {
            return Err(HarnessError::field("k", format!("{} is not greater than 1", self.k)));
        }
        if self.high_prob.is_negative() || self.high_prob > Rational::ONE {
            return Err(HarnessError::field("high_prob", format!("{} is outside [0, 1]", self.high_prob)));
        }
        Ok(())
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: Rational) -> bool {
    let x = rng.next_u64() as u128;
    x * (p.denom() as u128) < (p.numer() as u128) << 64
}

fn below(rng: &mut ChaCha8Rng, m: usize) -> usize {
    ((rng.next_u64() as u128 * m as u128) >> 64) as usize
}

pub fn gen_instance(params: &GenParams) -> Result<RawInstance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut rows = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let mut row: Vec<bool> = (0..params.m).map(|_| bernoulli(&mut rng, params.high_prob)).collect();
        if row.iter().all(|&h| h) {
            row[below(&mut rng, params.m)] = false;
        }
        rows.push(row.into_iter().map(|h| if h { params.k } else { Rational::ONE }).collect());
    }
    Ok(RawInstance::new(rows)?)
}
