//! Probability mass functions on {0, 1, ..., K} and the collision gain.
//!
//! The gain operator is the distribution-level image of one wealth exchange:
//! pool two independent fortunes and deal the pooled amount back out with
//! fair coins. Everything downstream (the mean-field ODE, equilibrium
//! residuals, moment checks) is built on this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, ThinTable};

/// Tolerance for the "sums to one" check on normalized inputs.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Hard cap on truncation indices.
pub const MAX_TRUNCATION: usize = 512;
/// Tail mass a default truncation must push below.
pub const DEFAULT_TAIL_BOUND: f64 = 1e-30;

/// Weights on {0, ..., K} plus the mass known to lie beyond K.
///
/// `trunc_defect` is bookkeeping, never folded back in: operations that lose
/// mass past the truncation report it rather than renormalize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf")]
pub struct Pmf {
    weights: Vec<f64>,
    trunc_defect: f64,
}

#[derive(Deserialize)]
struct RawPmf {
    weights: Vec<f64>,
    trunc_defect: f64,
}

impl TryFrom<RawPmf> for Pmf {
    type Error = Error;
    fn try_from(raw: RawPmf) -> Result<Pmf> {
        Pmf::new(raw.weights, raw.trunc_defect)
    }
}

impl Pmf {
    /// Builds a pmf, rejecting negative or non-finite weights.
    ///
    /// Magnitudes below 1e-13 on the wrong side of zero are treated as
    /// solver roundoff and snapped to 0 so that ODE snapshots remain valid.
    pub fn new(mut weights: Vec<f64>, trunc_defect: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Parameter("pmf needs at least one weight".into()));
        }
        for (n, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::Parameter(format!("weight[{n}] is not finite")));
            }
            if *w < 0.0 {
                if *w < -1e-13 {
                    return Err(Error::Parameter(format!("weight[{n}] = {w} is negative")));
                }
                *w = 0.0;
            }
        }
        if !trunc_defect.is_finite() || trunc_defect < -1e-13 {
            return Err(Error::Parameter(format!(
                "truncation defect {trunc_defect} is invalid"
            )));
        }
        Ok(Pmf {
            weights,
            trunc_defect: trunc_defect.max(0.0),
        })
    }

    /// Point mass at k on the window {0, ..., k_max}.
    pub fn dirac(k: usize, k_max: usize) -> Result<Self> {
        if k > k_max {
            return Err(Error::Parameter(format!(
                "dirac atom {k} exceeds truncation {k_max}"
            )));
        }
        let mut weights = vec![0.0; k_max + 1];
        weights[k] = 1.0;
        Ok(Pmf {
            weights,
            trunc_defect: 0.0,
        })
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Truncation index K (weights run over 0..=K).
    #[inline]
    pub fn truncation(&self) -> usize {
        self.weights.len() - 1
    }

    #[inline]
    pub fn trunc_defect(&self) -> f64 {
        self.trunc_defect
    }

    /// Weight at n; zero beyond the truncation.
    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        self.weights.get(n).copied().unwrap_or(0.0)
    }

    /// Sum of the stored weights.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Stored mass plus the declared tail accounts for all probability.
    pub fn is_normalized(&self) -> bool {
        (self.mass() + self.trunc_defect - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// First moment of the stored weights (ascending index order).
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(n, w)| n as f64 * w)
            .sum()
    }

    /// Second moment of the stored weights.
    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(n, w)| (n * n) as f64 * w)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Cumulative distribution F(k) = sum of weights up to k.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    /// Generalized inverse CDF: min { k : F(k) >= z } for z in (0, 1].
    ///
    /// If z exceeds every stored cumulative (possible when mass sits in the
    /// truncation defect), the last index is returned.
    pub fn quantile(&self, z: f64) -> Result<usize> {
        if !(z > 0.0 && z <= 1.0) {
            return Err(Error::Parameter(format!(
                "quantile level {z} outside (0, 1]"
            )));
        }
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if acc >= z {
                return Ok(k);
            }
        }
        Ok(self.truncation())
    }

    /// Same law on a different window; shrinking moves cut mass into the defect.
    pub fn with_truncation(&self, k_max: usize) -> Pmf {
        let mut weights = self.weights.clone();
        let mut defect = self.trunc_defect;
        if k_max + 1 < weights.len() {
            defect += weights[k_max + 1..].iter().sum::<f64>();
            weights.truncate(k_max + 1);
        } else {
            weights.resize(k_max + 1, 0.0);
        }
        Pmf {
            weights,
            trunc_defect: defect,
        }
    }
}

/// Signed coordinates produced by generator-type operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVector {
    entries: Vec<f64>,
}

impl SignedVector {
    pub fn new(entries: Vec<f64>) -> Self {
        SignedVector { entries }
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        self.entries.get(n).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// Poisson(lambda) truncated to {0, ..., k_max}.
///
/// Entries are assembled in log-space, so far-tail weights keep full
/// relative accuracy instead of degrading through the recurrence.
pub fn poisson_pmf(lambda: f64, k_max: usize) -> Result<Pmf> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("poisson rate {lambda} must be > 0")));
    }
    if k_max > MAX_TRUNCATION {
        return Err(Error::SizeLimit {
            what: "truncation index",
            count: k_max as u128,
            limit: MAX_TRUNCATION as u128,
        });
    }
    let ln_lambda = lambda.ln();
    let weights: Vec<f64> = (0..=k_max)
        .map(|k| (k as f64 * ln_lambda - lambda - ln_factorial(k)).exp())
        .collect();
    let mass: f64 = weights.iter().sum();
    Pmf::new(weights, (1.0 - mass).max(0.0))
}

/// Binomial(n, gamma) on its natural window {0, ..., n}; defect is exactly 0.
pub fn binomial_pmf(n: usize, gamma: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
        return Err(Error::Parameter(format!(
            "success probability {gamma} outside [0, 1]"
        )));
    }
    if gamma == 0.0 {
        return Pmf::dirac(0, n);
    }
    if gamma == 1.0 {
        return Pmf::dirac(n, n);
    }
    let ln_g = gamma.ln();
    let ln_1g = (1.0 - gamma).ln();
    let weights: Vec<f64> = (0..=n)
        .map(|k| {
            (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
                + k as f64 * ln_g
                + (n - k) as f64 * ln_1g)
                .exp()
        })
        .collect();
    Pmf::new(weights, 0.0)
}

/// Smallest truncation K with Poisson(lambda) tail mass beyond K under 1e-30.
///
/// Uses the geometric bound tail(K) <= p(K+1) / (1 - lambda/(K+2)), valid as
/// soon as K + 2 > lambda. Errors if no K <= 512 suffices.
pub fn default_truncation(lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("poisson rate {lambda} must be > 0")));
    }
    let ln_lambda = lambda.ln();
    for k in (lambda.ceil() as usize)..=MAX_TRUNCATION {
        let ln_next = (k + 1) as f64 * ln_lambda - lambda - ln_factorial(k + 1);
        let bound = ln_next.exp() / (1.0 - lambda / (k + 2) as f64);
        if bound < DEFAULT_TAIL_BOUND {
            return Ok(k);
        }
    }
    Err(Error::SizeLimit {
        what: "truncation index",
        count: MAX_TRUNCATION as u128 + 1,
        limit: MAX_TRUNCATION as u128,
    })
}

/// out[m] = sum_k p[k] q[m-k]; plain O(|p| |q|) convolution.
pub(crate) fn convolve_into(p: &[f64], q: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.resize(p.len() + q.len() - 1, 0.0);
    for (k, pk) in p.iter().enumerate() {
        if *pk == 0.0 {
            continue;
        }
        for (l, ql) in q.iter().enumerate() {
            out[k + l] += pk * ql;
        }
    }
}

/// Binomially thinned mass landing on n: sum_{m >= n} C(m, n) 2^{-m} conv[m].
#[inline]
pub(crate) fn thin_sum(conv: &[f64], table: &ThinTable, n: usize) -> f64 {
    let mut acc = 0.0;
    for m in n..conv.len() {
        acc += table.coeff(m, n) * conv[m];
    }
    acc
}

/// Law of dealing the pooled sum of X ~ p and Y ~ q back out with fair coins.
///
/// Computed as a single sum over the convolution (convolve first, then thin),
/// O(K^2) instead of the O(K^3) literal double sum. The output window is
/// K_p + K_q, wide enough that nothing can escape; the output defect only
/// carries the images of the input defects.
pub fn collision_gain(p: &Pmf, q: &Pmf) -> Result<Pmf> {
    if !p.is_normalized() || !q.is_normalized() {
        return Err(Error::Parameter(
            "collision gain requires normalized inputs".into(),
        ));
    }
    let k_out = p.truncation() + q.truncation();
    let table = ThinTable::new(k_out);
    let mut conv = Vec::new();
    convolve_into(p.weights(), q.weights(), &mut conv);
    let weights: Vec<f64> = (0..=k_out).map(|n| thin_sum(&conv, &table, n)).collect();
    let out_mass: f64 = weights.iter().sum();
    let in_mass = (p.mass() + p.trunc_defect()) * (q.mass() + q.trunc_defect());
    Pmf::new(weights, (in_mass - out_mass).max(0.0))
}
