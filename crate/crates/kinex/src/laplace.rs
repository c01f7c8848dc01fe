//! Generating-function probes: evaluate the transform of a state, check the
//! functional PDE it satisfies along a trajectory, and integrate the closed
//! ladder a'_n = a_{n+1}^2 - a_n whose fixed profile is exp(-mu 2^{-n}).

use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::meanfield::Trajectory;

/// Default ladder depth: 2^{-24} is far below every tolerance used here.
pub const DEFAULT_DEPTH: usize = 24;

/// Ladder state a_0..a_M plus the tail parameter used for the closure.
#[derive(Debug, Clone)]
pub struct ASystemState {
    pub a: Vec<f64>,
    pub mu: f64,
}

impl ASystemState {
    pub fn new(a: Vec<f64>, mu: f64) -> Result<Self> {
        let state = ASystemState { a, mu };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::Parameter("empty ladder state".into()));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::Parameter(format!(
                "tail parameter must be positive, got {}",
                self.mu
            )));
        }
        for (n, v) in self.a.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Numerical(format!(
                    "cube invariant broken at index {n}: {v}"
                )));
            }
        }
        Ok(())
    }

    /// Truncation depth M (top stored index).
    pub fn depth(&self) -> usize {
        self.a.len() - 1
    }
}

/// phi(x) = sum_n p_n x^n by Horner's rule.
pub fn generating_function(p: &Pmf, x: f64) -> f64 {
    let mut acc = 0.0;
    for w in p.weights().iter().rev() {
        acc = acc * x + w;
    }
    acc
}

/// Ladder profile read off a distribution: a_n = phi(1 - 2^{-n}).
pub fn profile_from_pmf(p: &Pmf, depth: usize) -> Result<ASystemState> {
    let a = (0..=depth)
        .map(|n| generating_function(p, 1.0 - 2.0f64.powi(-(n as i32))))
        .collect();
    ASystemState::new(a, p.mean())
}

/// The invariant profile e^{-mu 2^{-n}} for n = 0..=depth.
pub fn limit_profile(mu: f64, depth: usize) -> Vec<f64> {
    (0..=depth)
        .map(|n| (-mu * 2.0f64.powi(-(n as i32))).exp())
        .collect()
}

/// Ladder states over time.
#[derive(Debug, Clone)]
pub struct ATrajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    mu: f64,
}

impl ATrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }

    /// |a_n(end) - e^{-mu 2^{-n}}| per rung.
    pub fn limit_gaps(&self) -> Vec<f64> {
        let limit = limit_profile(self.mu, self.states[0].len() - 1);
        self.final_state()
            .iter()
            .zip(limit)
            .map(|(a, l)| (a - l).abs())
            .collect()
    }
}

/// Classical RK4 on the truncated ladder with the tail pinned at the known
/// envelope value: a_{M+1}(t) := e^{-mu 2^{-(M+1)}}. Every step is recorded;
/// a state leaving [0,1] (beyond rounding slack) aborts with the first
/// offending index.
pub fn integrate_a_system(a0: &ASystemState, t_end: f64, dt: f64) -> Result<ATrajectory> {
    a0.validate()?;
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Config(format!(
            "time step must lie in (0, 0.1], got {dt}"
        )));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Config(format!(
            "horizon must be finite and nonnegative, got {t_end}"
        )));
    }

    let dim = a0.a.len();
    let closure = (-a0.mu * 2.0f64.powi(-(dim as i32))).exp();
    let deriv = |y: &[f64], out: &mut [f64]| {
        for n in 0..dim {
            let up = if n + 1 < dim { y[n + 1] } else { closure };
            out[n] = up * up - y[n];
        }
    };

    let n_steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(a0.a.clone());

    let mut y = a0.a.clone();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for step in 0..n_steps {
        deriv(&y, &mut k1);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        deriv(&tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        deriv(&tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = y[j] + dt * k3[j];
        }
        deriv(&tmp, &mut k4);
        for j in 0..dim {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = (step + 1) as f64 * dt;
        for (n, v) in y.iter().enumerate() {
            if !(-1e-9..=1.0 + 1e-9).contains(v) {
                return Err(Error::Numerical(format!(
                    "cube invariant broken at index {n} at t = {t}: {v}"
                )));
            }
        }
        times.push(t);
        states.push(y.clone());
    }

    Ok(ATrajectory {
        times,
        states,
        mu: a0.mu,
    })
}

/// Residual of the transform's evolution identity at snapshot time `t`:
/// |d/dt phi(x) + phi(x) - phi((1+x)/2)^2|, with the time derivative taken
/// by a centered difference over the two neighboring snapshots.
pub fn pde_residual(traj: &Trajectory, x: f64, t: f64) -> Result<f64> {
    let times = traj.times();
    let k = times
        .iter()
        .position(|s| (s - t).abs() <= 1e-9)
        .ok_or_else(|| Error::Parameter(format!("t = {t} is not a snapshot time")))?;
    if k == 0 || k + 1 == times.len() {
        return Err(Error::Parameter(
            "centered difference needs an interior snapshot".into(),
        ));
    }
    let h_lo = times[k] - times[k - 1];
    let h_hi = times[k + 1] - times[k];
    if (h_lo - h_hi).abs() > 1e-9 {
        return Err(Error::Parameter(
            "bracketing snapshots must be equally spaced".into(),
        ));
    }
    if h_hi > 0.01 + 1e-9 {
        return Err(Error::Parameter(format!(
            "bracket spacing {h_hi} too coarse for the difference quotient"
        )));
    }
    let phi_prev = generating_function(&traj.states()[k - 1], x);
    let phi_next = generating_function(&traj.states()[k + 1], x);
    let dphi = (phi_next - phi_prev) / (h_lo + h_hi);
    let phi = generating_function(&traj.states()[k], x);
    let phi_half = generating_function(&traj.states()[k], 0.5 * (1.0 + x));
    Ok((dphi + phi - phi_half * phi_half).abs())
}
