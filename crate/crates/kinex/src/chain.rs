//! Exact finite-state analysis of the discrete-time reshuffling chain for
//! small agent counts: enumerate the configuration space, build the
//! transition matrix, solve for the stationary law, and compare the
//! single-agent marginal against its binomial/Poisson limits.

use std::collections::{BTreeMap, HashMap};

use crate::dist;
use crate::error::{Error, Result};
use crate::numeric::{binomial_u128, ln_factorial, ThinTable};

/// Hard cap on enumerated states.
pub const MAX_STATES: u128 = 2_000_000;
/// Hard cap on stored transition entries.
pub const MAX_ENTRIES: u128 = 20_000_000;
/// Power-iteration residual target and iteration cap.
pub const STATIONARY_TOL: f64 = 1e-13;
pub const STATIONARY_MAX_ITERS: u64 = 1_000_000;

/// All ways to split `total` units among `n_agents` pockets, in ascending
/// lexicographic order, with a reverse index.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    n_agents: usize,
    total: u32,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl ConfigSpace {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state(&self, row: usize) -> &[u32] {
        &self.states[row]
    }

    pub fn index_of(&self, state: &[u32]) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// Row-stochastic sparse matrix over a [`ConfigSpace`], compressed by rows
/// with ascending column order inside each row.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// Entry (r, c), zero if unstored.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Left product pi -> pi P with fixed ascending-index accumulation.
    pub fn multiply_left(&self, pi: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for r in 0..self.dim {
            let weight = pi[r];
            if weight == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out[*c] += weight * v;
            }
        }
    }
}

fn enumerate_states(n_agents: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(pos: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining;
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[pos] = v;
            rec(pos + 1, remaining - v, cur, out);
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; n_agents];
    rec(0, total, &mut cur, &mut out);
    out
}

/// Enumerate the configuration space and assemble the one-event kernel:
/// a uniformly random unordered pair pools its holdings and deals them back
/// with fair coins; everything else stays put.
pub fn build_chain(n_agents: usize, total: u32) -> Result<(ConfigSpace, TransitionMatrix)> {
    if n_agents < 2 {
        return Err(Error::Config("need at least two agents".into()));
    }
    let count = binomial_u128(total as u128 + n_agents as u128 - 1, n_agents as u128 - 1)
        .ok_or_else(|| Error::Numerical("state count overflows".into()))?;
    if count > MAX_STATES {
        return Err(Error::SizeLimit {
            what: "chain states",
            count,
            limit: MAX_STATES,
        });
    }

    let states = enumerate_states(n_agents, total);
    debug_assert_eq!(states.len() as u128, count);
    let index: HashMap<Vec<u32>, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let space = ConfigSpace {
        n_agents,
        total,
        states,
        index,
    };

    let table = ThinTable::new(total as usize);
    let pair_weight = 2.0 / (n_agents * (n_agents - 1)) as f64;
    let mut row_ptr = Vec::with_capacity(space.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut scratch = vec![0u32; n_agents];
    for y in space.states() {
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for i in 0..n_agents {
            for j in i + 1..n_agents {
                let s = y[i] + y[j];
                for zi in 0..=s {
                    scratch.copy_from_slice(y);
                    scratch[i] = zi;
                    scratch[j] = s - zi;
                    let col = space
                        .index_of(&scratch)
                        .expect("pair exchange stays on the simplex");
                    *row.entry(col).or_insert(0.0) +=
                        pair_weight * table.coeff(s as usize, zi as usize);
                }
            }
        }
        if (cols.len() + row.len()) as u128 > MAX_ENTRIES {
            return Err(Error::SizeLimit {
                what: "transition entries",
                count: (cols.len() + row.len()) as u128,
                limit: MAX_ENTRIES,
            });
        }
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    let dim = space.len();
    Ok((
        space,
        TransitionMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        },
    ))
}

/// Stationary row vector by power iteration, to L1 residual below
/// [`STATIONARY_TOL`].
pub fn stationary(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    let dim = matrix.dim();
    let mut pi = vec![1.0 / dim as f64; dim];
    let mut next = vec![0.0; dim];
    for iter in 0..STATIONARY_MAX_ITERS {
        matrix.multiply_left(&pi, &mut next);
        let norm: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= norm;
        }
        let residual: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < STATIONARY_TOL {
            let _ = iter;
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        what: "stationary power iteration",
        iterations: STATIONARY_MAX_ITERS,
    })
}

/// Probability that dropping `total` units independently and uniformly into
/// `state.len()` pockets produces exactly `state`; log-space evaluation.
pub fn multinomial_weight(state: &[u32], total: u32) -> Result<f64> {
    let sum: u64 = state.iter().map(|v| *v as u64).sum();
    if sum != total as u64 {
        return Err(Error::Parameter(format!(
            "state sums to {sum}, expected {total}"
        )));
    }
    let n = state.len() as f64;
    let mut ln = ln_factorial(total as usize) - total as f64 * n.ln();
    for v in state {
        ln -= ln_factorial(*v as usize);
    }
    Ok(ln.exp())
}

/// Largest detailed-balance defect |P(Y,Z) w(Y) - P(Z,Y) w(Z)| against the
/// multinomial weights, scanned over every stored entry.
pub fn detailed_balance_residual(space: &ConfigSpace, matrix: &TransitionMatrix) -> Result<f64> {
    let weights: Vec<f64> = space
        .states()
        .iter()
        .map(|s| multinomial_weight(s, space.total()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for r in 0..matrix.dim() {
        let (cols, vals) = matrix.row(r);
        for (c, v) in cols.iter().zip(vals) {
            let forward = v * weights[r];
            let backward = matrix.entry(*c, r) * weights[*c];
            worst = worst.max((forward - backward).abs());
        }
    }
    Ok(worst)
}

/// Stationary probability that the given agent holds exactly `n` units.
pub fn marginal(pi: &[f64], space: &ConfigSpace, agent: usize, n: u32) -> f64 {
    space
        .states()
        .iter()
        .zip(pi)
        .filter(|(state, _)| state[agent] == n)
        .map(|(_, p)| p)
        .sum()
}

/// |Binomial(N mu, 1/N)(n) - Poisson(mu)(n)|: the finite-N marginal against
/// its large-N limit.
pub fn poisson_limit_gap(n_agents: usize, mu: f64, n: usize) -> Result<f64> {
    if n_agents < 2 || !(mu > 0.0) {
        return Err(Error::Parameter(
            "need at least two agents and a positive mean".into(),
        ));
    }
    let total_real = n_agents as f64 * mu;
    let total = total_real.round();
    if (total_real - total).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "total wealth {total_real} is not an integer"
        )));
    }
    let binom = dist::binomial_pmf(total as usize, 1.0 / n_agents as f64)?;
    let poisson = (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp();
    Ok((binom.get(n) - poisson).abs())
}
