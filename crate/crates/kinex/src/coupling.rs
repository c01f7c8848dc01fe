//! Shared-coin coupled pair process as an interacting ensemble: M pairs
//! (x, xbar), the xbar side stationary at Poisson(lambda), exchanges driven
//! by one fair-coin sequence per event so the two sides contract.

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::dist::{self, Pmf};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Contraction rate of the squared-gap envelope: (1 - sqrt(2/3)) / 4.
pub fn contraction_rate() -> f64 {
    (1.0 - (2.0f64 / 3.0).sqrt()) / 4.0
}

/// Hyperbolic envelope 1 / (rate t + 1) that the squared gap obeys once it
/// has dropped to 1; `t` counts from the moment the envelope is anchored.
pub fn contraction_envelope(t: f64) -> f64 {
    1.0 / (contraction_rate() * t + 1.0)
}

/// Heads among the first `a` and among the first `b` tosses of one shared
/// fair-coin sequence, consuming ceil(max(a,b)/64) generator words.
fn shared_coin_sums(a: u64, b: u64, rng: &mut impl RngCore) -> (u64, u64) {
    let lo = a.min(b);
    let hi = a.max(b);
    let mut heads_lo = 0u64;
    let mut heads_hi = 0u64;
    let mut drawn = 0u64;
    while drawn < hi {
        let take = (hi - drawn).min(64);
        let mask = if take == 64 { !0 } else { (1u64 << take) - 1 };
        let bits = rng.next_u64() & mask;
        if drawn < lo {
            let lo_take = (lo - drawn).min(take);
            let lo_mask = if lo_take == 64 { !0 } else { (1u64 << lo_take) - 1 };
            heads_lo += (bits & lo_mask).count_ones() as u64;
        }
        heads_hi += bits.count_ones() as u64;
        drawn += take;
    }
    if a <= b {
        (heads_lo, heads_hi)
    } else {
        (heads_hi, heads_lo)
    }
}

/// M coupled pairs plus running exact sums of (x - xbar)^2 and ^4, kept
/// incrementally so recording costs O(1).
#[derive(Debug, Clone)]
pub struct CoupledEnsemble {
    pairs: Vec<(u64, u64)>,
    t: f64,
    sum_sq: i128,
    sum_quad: i128,
}

impl CoupledEnsemble {
    /// Draw the x side iid from `p0` and the xbar side from Poisson(lambda),
    /// joined by the comonotone quantile coupling (one shared uniform level
    /// per pair), so the initial mean squared gap estimates the squared
    /// second-order transport distance.
    pub fn init_comonotone(p0: &Pmf, lambda: f64, pairs: usize, rng: &mut Rng) -> Result<Self> {
        if pairs < 2 {
            return Err(Error::Config("need at least two coupled pairs".into()));
        }
        if !p0.is_normalized() || p0.trunc_defect() > 1e-6 {
            return Err(Error::Parameter(
                "initial law must be normalized with negligible tail defect".into(),
            ));
        }
        if (p0.mean() - lambda).abs() > 1e-6 {
            return Err(Error::Parameter(format!(
                "initial mean {} does not match the target rate {}",
                p0.mean(),
                lambda
            )));
        }
        let target = dist::poisson_pmf(lambda, dist::default_truncation(lambda)?)?;
        let mut out = CoupledEnsemble {
            pairs: Vec::with_capacity(pairs),
            t: 0.0,
            sum_sq: 0,
            sum_quad: 0,
        };
        for _ in 0..pairs {
            // (0, 1] level shared by both quantile functions.
            let z = 1.0 - rng::uniform_unit(rng);
            let x = p0.quantile(z)? as u64;
            let xbar = target.quantile(z)? as u64;
            out.push_pair(x, xbar);
        }
        Ok(out)
    }

    fn push_pair(&mut self, x: u64, xbar: u64) {
        let d = x as i128 - xbar as i128;
        self.sum_sq += d * d;
        self.sum_quad += d * d * d * d;
        self.pairs.push((x, xbar));
    }

    fn retally(&mut self, idx: usize, new: (u64, u64)) {
        let (x, xbar) = self.pairs[idx];
        let d = x as i128 - xbar as i128;
        self.sum_sq -= d * d;
        self.sum_quad -= d * d * d * d;
        let d = new.0 as i128 - new.1 as i128;
        self.sum_sq += d * d;
        self.sum_quad += d * d * d * d;
        self.pairs[idx] = new;
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.pairs
    }

    /// Ensemble mean of (x - xbar)^2.
    pub fn mean_square_gap(&self) -> f64 {
        self.sum_sq as f64 / self.pairs.len() as f64
    }

    /// Standard error of the mean squared gap across the ensemble.
    pub fn gap_stderr(&self) -> f64 {
        let m = self.pairs.len() as f64;
        let m2 = self.sum_sq as f64 / m;
        let m4 = self.sum_quad as f64 / m;
        ((m4 - m2 * m2).max(0.0) / m).sqrt()
    }

    fn marginal(&self, side: impl Fn(&(u64, u64)) -> u64) -> Pmf {
        let mut counts: Vec<u64> = Vec::new();
        for pair in &self.pairs {
            let v = side(pair) as usize;
            if counts.len() <= v {
                counts.resize(v + 1, 0);
            }
            counts[v] += 1;
        }
        let m = self.pairs.len() as f64;
        Pmf::new(counts.iter().map(|c| *c as f64 / m).collect(), 0.0)
            .expect("histogram weights are valid")
    }

    pub fn x_marginal(&self) -> Pmf {
        self.marginal(|p| p.0)
    }

    pub fn xbar_marginal(&self) -> Pmf {
        self.marginal(|p| p.1)
    }

    /// One exchange event: pair i pools with a distinct partner j on both
    /// sides, one shared coin sequence deals both pools back out, the
    /// partner takes the complements, and time advances by Exp(2/M).
    pub fn coupled_step(&mut self, rng: &mut Rng) {
        let m = self.pairs.len();
        let i = rng.gen_range(0..m);
        let mut j = rng.gen_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let (xi, bi) = self.pairs[i];
        let (yj, bj) = self.pairs[j];
        let pool_x = xi + yj;
        let pool_b = bi + bj;
        let (nx, nb) = shared_coin_sums(pool_x, pool_b, rng);
        self.retally(i, (nx, nb));
        self.retally(j, (pool_x - nx, pool_b - nb));
        self.t += rng::sample_exponential(2.0 / m as f64, rng);
    }
}

/// Mean squared gap over time with its ensemble standard error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub times: Vec<f64>,
    pub d_mean: Vec<f64>,
    pub d_stderr: Vec<f64>,
}

impl CouplingTrace {
    pub fn to_trace_series(&self, label: impl Into<String>) -> Result<crate::metrics::TraceSeries> {
        crate::metrics::TraceSeries::new(self.times.clone(), self.d_mean.clone(), label)
    }
}

/// Evolve a comonotone-initialized ensemble to `t_end`, recording the mean
/// squared gap on the uniform grid {0, grid_step, 2 grid_step, ...}. Grid
/// points are read from the state in force at that model time.
pub fn run_coupling(
    p0: &Pmf,
    lambda: f64,
    pairs: usize,
    t_end: f64,
    grid_step: f64,
    seed: u64,
    replica: u64,
) -> Result<CouplingTrace> {
    if !(t_end > 0.0 && t_end.is_finite()) || !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::Config(
            "horizon and grid step must be positive and finite".into(),
        ));
    }
    let mut rng = rng::replica_rng(seed, replica);
    let mut ens = CoupledEnsemble::init_comonotone(p0, lambda, pairs, &mut rng)?;

    let n_grid = (t_end / grid_step + 1e-9).floor() as usize + 1;
    let mut trace = CouplingTrace {
        times: Vec::with_capacity(n_grid),
        d_mean: Vec::with_capacity(n_grid),
        d_stderr: Vec::with_capacity(n_grid),
    };
    let mut grid_idx = 0usize;
    while grid_idx < n_grid {
        let d_mean = ens.mean_square_gap();
        let d_stderr = ens.gap_stderr();
        ens.coupled_step(&mut rng);
        // Grid points the step jumped over saw the pre-step state.
        while grid_idx < n_grid {
            let g = grid_idx as f64 * grid_step;
            if g >= ens.t {
                break;
            }
            trace.times.push(g);
            trace.d_mean.push(d_mean);
            trace.d_stderr.push(d_stderr);
            grid_idx += 1;
        }
    }
    Ok(trace)
}
