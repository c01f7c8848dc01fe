//! Shared proptest strategies for the crate's unit tests.

use crate::dist::Pmf;
use proptest::prelude::*;

prop_compose! {
    /// Normalized pmf from a random integer composition, so the weights sum
    /// to 1 up to one rounding per entry and the truncation defect is zero.
    pub fn arb_pmf(max_support: usize)
        (parts in prop::collection::vec(0u32..8, 1..=max_support))
        -> Pmf
    {
        let mut parts = parts;
        if parts.iter().all(|p| *p == 0) {
            parts[0] = 1;
        }
        let total: u32 = parts.iter().sum();
        let weights: Vec<f64> =
            parts.iter().map(|p| *p as f64 / total as f64).collect();
        Pmf::new(weights, 0.0).unwrap()
    }
}
