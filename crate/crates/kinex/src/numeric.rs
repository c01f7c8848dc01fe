//! Log-factorial machinery for binomial and multinomial weights.
//!
//! Coefficients like C(m, n) 2^{-m} underflow f64 long before the index
//! ranges used here become interesting, so everything is assembled in
//! log-space and exponentiated once.

use std::sync::OnceLock;

/// Largest factorial that fits a u128 exactly.
const EXACT_MAX: usize = 33;
/// Size of the precomputed ln-factorial table.
const TABLE_LEN: usize = 1 << 16;

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0_f64; TABLE_LEN];
        let mut exact: u128 = 1;
        for n in 1..=EXACT_MAX {
            exact *= n as u128;
            t[n] = (exact as f64).ln();
        }
        // Kahan-compensated continuation keeps the absolute error near 1 ulp
        // instead of letting it grow linearly with n.
        let mut sum = t[EXACT_MAX];
        let mut comp = 0.0_f64;
        for n in (EXACT_MAX + 1)..TABLE_LEN {
            let term = (n as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            t[n] = sum;
        }
        t
    })
}

/// ln(n!) with near-ulp accuracy for any n reachable in this crate.
pub fn ln_factorial(n: usize) -> f64 {
    let t = table();
    if n < TABLE_LEN {
        return t[n];
    }
    // Stirling series; error < 1e-17 relative for n this large.
    let x = (n + 1) as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// ln C(m, k); requires k <= m.
pub fn ln_binomial(m: usize, k: usize) -> f64 {
    debug_assert!(k <= m);
    ln_factorial(m) - ln_factorial(k) - ln_factorial(m - k)
}

/// C(m, k) 2^{-m}, the probability that m fair coins show exactly k heads.
pub fn binomial_half_weight(m: usize, k: usize) -> f64 {
    if k > m {
        return 0.0;
    }
    (ln_binomial(m, k) - m as f64 * std::f64::consts::LN_2).exp()
}

/// C(n, k) as u128, or None on overflow.
pub fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)?;
        acc /= i + 1;
    }
    Some(acc)
}

/// Flat lower-triangular table of fair-coin thinning weights.
///
/// `coeff(m, n)` with n <= m <= max_m is stored at `m (m + 1) / 2 + n` and
/// equals C(m, n) 2^{-m}. Shared by the collision gain and the ODE right-hand
/// side so both see bit-identical coefficients.
pub struct ThinTable {
    max_m: usize,
    coeffs: Vec<f64>,
}

/// Largest m for which the multiplicative C(m, n) recurrence stays in u128.
const EXACT_ROW_MAX: usize = 120;

impl ThinTable {
    pub fn new(max_m: usize) -> Self {
        let mut coeffs = Vec::with_capacity((max_m + 1) * (max_m + 2) / 2);
        for m in 0..=max_m {
            if m <= EXACT_ROW_MAX {
                // Exact integer counts scaled by an exact power of two:
                // one rounding per coefficient.
                let scale = 2.0_f64.powi(-(m as i32));
                let mut c: u128 = 1;
                for n in 0..=m {
                    coeffs.push(c as f64 * scale);
                    if n < m {
                        c = c * (m - n) as u128 / (n + 1) as u128;
                    }
                }
            } else {
                for n in 0..=m {
                    coeffs.push(binomial_half_weight(m, n));
                }
            }
        }
        ThinTable { max_m, coeffs }
    }

    #[inline]
    pub fn max_m(&self) -> usize {
        self.max_m
    }

    /// C(m, n) 2^{-m}; n <= m <= max_m.
    #[inline]
    pub fn coeff(&self, m: usize, n: usize) -> f64 {
        self.coeffs[m * (m + 1) / 2 + n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_factorials_exact() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120.0_f64.ln()).abs() < 1e-15);
        assert!((ln_factorial(12) - 479_001_600.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn table_and_stirling_agree_at_the_seam() {
        // Recompute ln(70000!) by summation and compare with the Stirling branch.
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for n in 1..=70_000usize {
            let term = (n as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
        }
        let rel = (ln_factorial(70_000) - sum).abs() / sum;
        assert!(rel < 1e-14, "rel = {rel:.3e}");
    }

    #[test]
    fn binomial_coefficients_match_pascal() {
        let mut row = vec![1.0_f64];
        for m in 1..=60usize {
            let mut next = vec![1.0; m + 1];
            for k in 1..m {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
            for k in 0..=m {
                let rel = (ln_binomial(m, k).exp() - row[k]).abs() / row[k];
                assert!(rel < 1e-12, "C({m},{k}) rel err {rel:.3e}");
            }
        }
    }

    #[test]
    fn coin_weights_sum_to_one() {
        let t = ThinTable::new(128);
        for m in [0usize, 1, 2, 7, 64, 128] {
            let s: f64 = (0..=m).map(|n| t.coeff(m, n)).sum();
            assert!((s - 1.0).abs() < 1e-13, "m = {m}: sum = {s}");
        }
    }

    #[test]
    fn exact_binomial_counts() {
        assert_eq!(binomial_u128(0, 0), Some(1));
        assert_eq!(binomial_u128(4, 2), Some(6));
        assert_eq!(binomial_u128(12, 2), Some(66));
        assert_eq!(binomial_u128(64, 4), Some(635_376));
    }
}
