//! Seeded noise streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, index, tag)`, so a trial's noise does not depend on which thread
//! runs it or in what order trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    InitialState = 0,
    Process = 1,
    Privacy = 2,
}

const TAGS: u64 = 4;

/// Independent generator for `(seed, index, tag)`.
pub fn substream(seed: u64, index: u64, tag: StreamTag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(TAGS).wrapping_add(tag as u64));
    rng
}

pub fn standard_normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    Vector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

/// Draws from `N(0, L Lᵀ)` given the lower Cholesky factor `L`.
pub fn correlated_normal(rng: &mut ChaCha8Rng, factor: &Matrix) -> Vector {
    factor * standard_normal_vector(rng, factor.ncols())
}
