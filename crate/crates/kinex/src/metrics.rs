//! Distances between discrete laws (Wasserstein, total variation), the Gini
//! index, and least-squares decay fits for relaxation curves.

use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::error::{Error, Result};

/// Tail defect above which quantile-based distances are refused.
pub const TAIL_DEFECT_LIMIT: f64 = 1e-6;

/// Wasserstein order: integrate |F^-1 - G^-1| or its square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    One,
    Two,
}

/// Wasserstein distance between two laws on the nonnegative integers,
/// computed by merging the two CDF level sets into piecewise-constant
/// quantile segments — exact up to floating roundoff, no quadrature grid.
pub fn wasserstein(p: &Pmf, q: &Pmf, order: Order) -> Result<f64> {
    for side in [p, q] {
        if !side.is_normalized() {
            return Err(Error::Parameter(
                "wasserstein requires normalized inputs".into(),
            ));
        }
        if side.trunc_defect() > TAIL_DEFECT_LIMIT {
            return Err(Error::Numerical(format!(
                "tail defect {:e} exceeds {:e}; quantiles near 1 are unreliable",
                side.trunc_defect(),
                TAIL_DEFECT_LIMIT
            )));
        }
    }

    // (value, cumulative mass) per atom, zero weights skipped.
    let levels = |w: &Pmf| -> Vec<(usize, f64)> {
        let mut acc = 0.0;
        let mut out = Vec::new();
        for (n, wn) in w.weights().iter().enumerate() {
            if *wn > 0.0 {
                acc += wn;
                out.push((n, acc));
            }
        }
        out
    };
    let pa = levels(p);
    let qa = levels(q);

    let mut acc = 0.0f64;
    let mut z = 0.0f64;
    let mut i = 0;
    let mut j = 0;
    while i < pa.len() && j < qa.len() {
        let (np, zp) = pa[i];
        let (nq, zq) = qa[j];
        let z_next = zp.min(zq);
        let gap = (np as f64 - nq as f64).abs();
        let cost = match order {
            Order::One => gap,
            Order::Two => gap * gap,
        };
        acc += (z_next - z) * cost;
        z = z_next;
        if zp <= z_next {
            i += 1;
        }
        if zq <= z_next {
            j += 1;
        }
    }

    Ok(match order {
        Order::One => acc,
        Order::Two => acc.sqrt(),
    })
}

/// Half the L1 distance between the stored weight vectors.
pub fn total_variation(p: &Pmf, q: &Pmf) -> f64 {
    let len = p.weights().len().max(q.weights().len());
    let mut acc = 0.0;
    for n in 0..len {
        acc += (p.get(n) - q.get(n)).abs();
    }
    0.5 * acc
}

/// Gini index of a wealth vector: mean absolute difference over twice the
/// mean, via the sorted O(n log n) form.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("gini of an empty vector".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Parameter(
            "gini requires finite nonnegative values".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Parameter(
            "gini is undefined for zero total wealth".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut acc = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        acc += (2.0 * (i as f64 + 1.0) - n - 1.0) * x;
    }
    Ok(acc / (n * total))
}

/// Gini index of a law on the nonnegative integers, from the identity
/// E|X - Y| = 2 sum_n F(n)(1 - F(n)) for iid X, Y.
pub fn gini_pmf(p: &Pmf) -> Result<f64> {
    let mu = p.mean();
    if mu <= 0.0 {
        return Err(Error::Parameter(
            "gini is undefined for zero mean".into(),
        ));
    }
    let mut acc = 0.0;
    let mut cum = 0.0;
    for wn in p.weights() {
        cum += wn;
        acc += cum * (1.0 - cum);
    }
    Ok(acc / mu)
}

/// One metric tracked over time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl TraceSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let s = TraceSeries {
            times,
            values,
            label: label.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Parameter(
                "trace times and values must have equal length".into(),
            ));
        }
        for pair in self.times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Parameter(
                    "trace times must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Both decay hypotheses fitted to the same window, with goodness of fit;
/// the caller interprets, the fitter never picks a winner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub exp_rate: f64,
    pub exp_r2: f64,
    pub poly_exponent: f64,
    pub poly_r2: f64,
}

/// Least-squares fits of log v against t (exponential decay) and log v
/// against log t (power-law decay) over `window`, inclusive on both ends.
pub fn fit_decay(series: &TraceSeries, window: (f64, f64)) -> Result<DecayFit> {
    series.validate()?;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (t, v) in series.times.iter().zip(&series.values) {
        if *t >= window.0 && *t <= window.1 {
            ts.push(*t);
            vs.push(*v);
        }
    }
    if ts.len() < 10 {
        return Err(Error::Parameter(format!(
            "decay fit needs at least 10 points in the window, found {}",
            ts.len()
        )));
    }
    if vs.iter().any(|v| *v <= 0.0) {
        return Err(Error::Numerical(
            "decay fit needs positive values on the window".into(),
        ));
    }
    if ts[0] <= 0.0 {
        return Err(Error::Numerical(
            "power-law fit needs positive times on the window".into(),
        ));
    }
    let logs: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let log_ts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (exp_rate, exp_r2) = linear_fit(&ts, &logs);
    let (poly_exponent, poly_r2) = linear_fit(&log_ts, &logs);
    Ok(DecayFit {
        exp_rate,
        exp_r2,
        poly_exponent,
        poly_r2,
    })
}

/// Slope and r-squared of the least-squares line through (x, y).
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}
