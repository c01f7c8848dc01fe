//! Reproducible random number streams.
//!
//! All stochastic modules draw from ChaCha8: a counter-based generator whose
//! 64-bit stream field gives every replica an independent sequence from the
//! same master seed. Replica r of a run seeded s always sees the same bits,
//! regardless of how replicas are scheduled.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream for replica `replica` of a run with master seed `master_seed`.
pub fn replica_rng(master_seed: u64, replica: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}

/// Exact Binomial(n, 1/2) sample: n fair coins, counted by popcount.
///
/// Bits come from the generator 64 at a time; the tail block is masked down
/// to the remaining width. The law is exact for every n, not an
/// approximation, because each wealth unit gets one unbiased bit.
pub fn sample_binomial_half(n: u64, rng: &mut impl RngCore) -> u64 {
    let mut remaining = n;
    let mut heads: u64 = 0;
    while remaining >= 64 {
        heads += rng.next_u64().count_ones() as u64;
        remaining -= 64;
    }
    if remaining > 0 {
        let mask = (1u64 << remaining) - 1;
        heads += (rng.next_u64() & mask).count_ones() as u64;
    }
    heads
}

/// Exponential variate with the given mean (inverse-CDF on one uniform).
pub fn sample_exponential(mean: f64, rng: &mut impl RngCore) -> f64 {
    // 53-bit uniform in (0, 1]; the offset keeps ln away from 0.
    let u = ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0);
    -u.ln() * mean
}

/// Uniform f64 in [0, 1) with 53 random bits.
pub fn uniform_unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}
