//! Deterministic side of the model: the collision operator on truncated
//! distributions, its ODE flow under classical RK4, closed-form moment
//! oracles, and the equilibrium residual.

use serde::{Deserialize, Serialize};

use crate::dist::{self, Pmf, SignedVector, MAX_TRUNCATION};
use crate::error::{Error, Result};
use crate::numeric::ThinTable;

/// Largest tolerated |1 - total mass| at a snapshot before the run is
/// declared under-truncated.
pub const MASS_DEFECT_LIMIT: f64 = 1e-6;

/// Fixed-step integrator settings.
///
/// `truncation` is the last retained index K; states live on {0, ..., K}.
/// Time is measured in units of the unit-rate collision clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeConfig {
    pub truncation: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl OdeConfig {
    /// Config with the smallest truncation window admissible for mean
    /// `lambda` (tail bound below `dist::DEFAULT_TAIL_BOUND`).
    pub fn with_default_truncation(
        lambda: f64,
        dt: f64,
        t_end: f64,
        snapshot_times: Vec<f64>,
    ) -> Result<Self> {
        let cfg = OdeConfig {
            truncation: dist::default_truncation(lambda)?,
            dt,
            t_end,
            snapshot_times,
        };
        cfg.validate(lambda)?;
        Ok(cfg)
    }

    /// Check the step, horizon, snapshot grid, and the truncation window
    /// against the run's mean `lambda`.
    pub fn validate(&self, lambda: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::Config(format!(
                "time step must lie in (0, 0.1], got {}",
                self.dt
            )));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(Error::Config(format!(
                "horizon must be finite and nonnegative, got {}",
                self.t_end
            )));
        }
        for pair in self.snapshot_times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Config(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
        }
        if let (Some(first), Some(last)) =
            (self.snapshot_times.first(), self.snapshot_times.last())
        {
            if !first.is_finite() || !last.is_finite() || *first < 0.0 || *last > self.t_end {
                return Err(Error::Config(
                    "snapshot times must lie inside [0, t_end]".into(),
                ));
            }
        }
        if self.truncation > MAX_TRUNCATION {
            return Err(Error::SizeLimit {
                what: "truncation index",
                count: self.truncation as u128,
                limit: MAX_TRUNCATION as u128,
            });
        }
        if lambda > 0.0 {
            let needed = dist::default_truncation(lambda)?;
            if self.truncation < needed {
                return Err(Error::Config(format!(
                    "truncation {} keeps too much tail for mean {}; need at least {}",
                    self.truncation, lambda, needed
                )));
            }
        }
        Ok(())
    }
}

/// Time-stamped states of one integration run.
///
/// `mass_defect[i]` is |1 - total mass| of `states[i]`; mass is never
/// renormalized, so the defect doubles as a truncation diagnostic.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Pmf>,
    mass_defect: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Pmf] {
        &self.states
    }

    pub fn mass_defect(&self) -> &[f64] {
        &self.mass_defect
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last recorded state, if any snapshot was taken.
    pub fn final_state(&self) -> Option<&Pmf> {
        self.states.last()
    }
}

/// Collision operator evaluated at one state: net rate per index, plus the
/// gain mass that landed beyond the truncation window.
#[derive(Debug, Clone)]
pub struct QEval {
    pub rate: SignedVector,
    pub leakage: f64,
}

/// Reusable evaluation engine: coin-splitting coefficients for a fixed
/// window plus a convolution scratch buffer.
struct Generator {
    k_max: usize,
    table: ThinTable,
    conv: Vec<f64>,
}

impl Generator {
    fn new(k_max: usize) -> Self {
        Generator {
            // Self-convolution reaches index 2K, so coefficient rows must too.
            table: ThinTable::new(2 * k_max),
            conv: Vec::with_capacity(2 * k_max + 1),
            k_max,
        }
    }

    /// out[n] = gain[n] - y[n] for n <= K. Each output index owns an
    /// independent ascending accumulation, so the loop is parallel-safe
    /// over n; we keep it sequential and deterministic.
    fn derivative(&mut self, y: &[f64], out: &mut [f64]) {
        dist::convolve_into(y, y, &mut self.conv);
        for (n, slot) in out.iter_mut().enumerate().take(self.k_max + 1) {
            *slot = dist::thin_sum(&self.conv, &self.table, n) - y[n];
        }
    }

    /// Gain mass beyond the window for the current scratch convolution.
    fn tail_gain(&self) -> f64 {
        let mut acc = 0.0;
        for n in self.k_max + 1..self.conv.len() {
            acc += dist::thin_sum(&self.conv, &self.table, n);
        }
        acc
    }
}

/// Net collision rate at state `p`: pairwise pooling followed by a fair-coin
/// split, minus the unit-rate loss. `p` must be normalized; mass pushed past
/// the truncation window is reported as `leakage`.
pub fn q_operator(p: &Pmf) -> Result<QEval> {
    if !p.is_normalized() {
        return Err(Error::Parameter(
            "collision operator requires a normalized state".into(),
        ));
    }
    let mut gen = Generator::new(p.truncation());
    let mut rate = vec![0.0; p.truncation() + 1];
    gen.derivative(p.weights(), &mut rate);
    let leakage = gen.tail_gain();
    Ok(QEval {
        rate: SignedVector::new(rate),
        leakage,
    })
}

/// Integrate the collision ODE from `p0` with classical fixed-step RK4 and
/// record the states at `cfg.snapshot_times` (linear interpolation between
/// grid points; grid-aligned snapshots are taken verbatim).
///
/// Mass is never renormalized. A snapshot whose mass defect exceeds
/// [`MASS_DEFECT_LIMIT`] aborts the run, naming the first offending time.
pub fn integrate(p0: &Pmf, cfg: &OdeConfig) -> Result<Trajectory> {
    if !p0.is_normalized() {
        return Err(Error::Parameter(
            "initial state must be normalized".into(),
        ));
    }
    cfg.validate(p0.mean())?;
    if p0.truncation() > cfg.truncation {
        return Err(Error::Parameter(format!(
            "initial state extends to {} but the window ends at {}",
            p0.truncation(),
            cfg.truncation
        )));
    }

    let dim = cfg.truncation + 1;
    let mut y = vec![0.0; dim];
    y[..p0.weights().len()].copy_from_slice(p0.weights());

    let mut gen = Generator::new(cfg.truncation);
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut y_next = vec![0.0; dim];

    let n_steps = ((cfg.t_end / cfg.dt) - 1e-9).ceil().max(0.0) as usize;
    let snaps = &cfg.snapshot_times;
    let mut next_snap = 0;

    let mut out = Trajectory {
        times: Vec::with_capacity(snaps.len()),
        states: Vec::with_capacity(snaps.len()),
        mass_defect: Vec::with_capacity(snaps.len()),
    };

    // Snapshots at t = 0 are the initial state itself.
    while next_snap < snaps.len() && snaps[next_snap] <= 1e-9 {
        record(&mut out, snaps[next_snap], &y)?;
        next_snap += 1;
    }

    let dt = cfg.dt;
    for step in 0..n_steps {
        let t0 = step as f64 * dt;
        let t1 = (step + 1) as f64 * dt;

        gen.derivative(&y, &mut k1);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        gen.derivative(&tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        gen.derivative(&tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = y[j] + dt * k3[j];
        }
        gen.derivative(&tmp, &mut k4);
        for j in 0..dim {
            y_next[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }

        while next_snap < snaps.len() && snaps[next_snap] <= t1 + 1e-9 {
            let ts = snaps[next_snap];
            if (ts - t1).abs() <= 1e-9 {
                record(&mut out, ts, &y_next)?;
            } else {
                let w = ((ts - t0) / dt).clamp(0.0, 1.0);
                for j in 0..dim {
                    tmp[j] = (1.0 - w) * y[j] + w * y_next[j];
                }
                record(&mut out, ts, &tmp)?;
            }
            next_snap += 1;
        }

        std::mem::swap(&mut y, &mut y_next);
    }

    // Horizon roundoff can strand a final snapshot on the last grid point.
    while next_snap < snaps.len() {
        record(&mut out, snaps[next_snap], &y)?;
        next_snap += 1;
    }

    Ok(out)
}

fn record(out: &mut Trajectory, t: f64, weights: &[f64]) -> Result<()> {
    let mass: f64 = weights.iter().sum();
    let defect = (1.0 - mass).abs();
    if defect > MASS_DEFECT_LIMIT {
        return Err(Error::Truncation { time: t, defect });
    }
    let state = Pmf::new(weights.to_vec(), (1.0 - mass).max(0.0))?;
    out.times.push(t);
    out.states.push(state);
    out.mass_defect.push(defect);
    Ok(())
}

/// Closed-form second moment at time `t` for a flow started with mean `mu`
/// and second moment `m2_0`: the gap to the limit mu^2 + mu shrinks like
/// exp(-t/2).
pub fn second_moment_forecast(mu: f64, m2_0: f64, t: f64) -> f64 {
    let limit = mu * mu + mu;
    limit + (m2_0 - limit) * (-0.5 * t).exp()
}

/// Sup-norm of the collision rate at the Poisson state with the given mean,
/// taken over indices up to K/2 — the upper half of the window only reflects
/// truncation, not the operator.
pub fn equilibrium_residual(lambda: f64, k_max: usize) -> Result<f64> {
    let p = dist::poisson_pmf(lambda, k_max)?;
    let mut gen = Generator::new(k_max);
    let mut rate = vec![0.0; k_max + 1];
    gen.derivative(p.weights(), &mut rate);
    Ok(rate[..=k_max / 2]
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::binomial_u128;
    use crate::testutil::arb_pmf;
    use proptest::prelude::*;

    #[test]
    fn point_mass_at_one_has_explicit_rate() {
        let p = Pmf::dirac(1, 6).unwrap();
        let q = q_operator(&p).unwrap();
        // Two units split by two fair coins: (1/4, 1/2, 1/4), minus the atom.
        assert_eq!(q.rate.get(0), 0.25);
        assert_eq!(q.rate.get(1), -0.5);
        assert_eq!(q.rate.get(2), 0.25);
        for n in 3..=6 {
            assert_eq!(q.rate.get(n), 0.0);
        }
        assert_eq!(q.leakage, 0.0);
    }

    #[test]
    fn empty_state_is_a_fixed_point() {
        let p = Pmf::dirac(0, 4).unwrap();
        let q = q_operator(&p).unwrap();
        for n in 0..=4 {
            assert_eq!(q.rate.get(n), 0.0);
        }
        assert_eq!(q.leakage, 0.0);
    }

    #[test]
    fn poisson_five_is_stationary() {
        let p = dist::poisson_pmf(5.0, 60).unwrap();
        let q = q_operator(&p).unwrap();
        let sup = q.rate.entries()[..=40]
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(sup < 1e-12, "sup rate {sup:e}");
    }

    #[test]
    fn equilibrium_residual_scales_with_window() {
        assert!(equilibrium_residual(5.0, 60).unwrap() < 1e-12);
        assert!(equilibrium_residual(0.5, 40).unwrap() < 1e-12);
        // Deliberate under-truncation: the tail leak shows up in the residual.
        assert!(equilibrium_residual(5.0, 10).unwrap() > 1e-6);
    }

    #[test]
    fn operator_rejects_undeclared_mass_loss() {
        let p = Pmf::new(vec![0.5, 0.1], 0.0).unwrap();
        assert!(q_operator(&p).is_err());
    }

    #[test]
    fn second_moment_forecast_matches_closed_form() {
        assert_eq!(second_moment_forecast(5.0, 25.0, 0.0), 25.0);
        // Frozen: 30 - 5 exp(-1).
        assert!((second_moment_forecast(5.0, 25.0, 2.0) - 28.16060279414279).abs() < 1e-12);
        assert!((second_moment_forecast(5.0, 25.0, 1e9) - 30.0).abs() < 1e-12);
        // Approach from above when the start is over-dispersed.
        let from_above = second_moment_forecast(2.0, 9.0, 3.0);
        assert!(from_above > 6.0 && from_above < 9.0);
    }

    #[test]
    fn flow_conserves_mean_and_relaxes_second_moment() {
        let p0 = Pmf::dirac(5, 60).unwrap();
        let cfg = OdeConfig {
            truncation: 60,
            dt: 0.01,
            t_end: 10.0,
            snapshot_times: (0..=10).map(f64::from).collect(),
        };
        let traj = integrate(&p0, &cfg).unwrap();
        assert_eq!(traj.len(), 11);
        for (i, state) in traj.states().iter().enumerate() {
            let t = traj.times()[i];
            assert!((state.mean() - 5.0).abs() <= 1e-10, "mean drift at t={t}");
            let forecast = second_moment_forecast(5.0, 25.0, t);
            assert!(
                (state.second_moment() - forecast).abs() <= 1e-8,
                "m2 off at t={t}: {} vs {}",
                state.second_moment(),
                forecast
            );
            assert!(traj.mass_defect()[i] < 1e-9);
        }
        for pair in traj.times().windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn stationary_start_stays_put() {
        let p0 = dist::poisson_pmf(5.0, 60).unwrap();
        let cfg = OdeConfig {
            truncation: 60,
            dt: 0.01,
            t_end: 2.0,
            snapshot_times: vec![0.5, 1.0, 2.0],
        };
        let traj = integrate(&p0, &cfg).unwrap();
        for state in traj.states() {
            let sup = state
                .weights()
                .iter()
                .zip(p0.weights())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(sup < 1e-10, "equilibrium drifted by {sup:e}");
        }
    }

    #[test]
    fn snapshots_between_grid_points_interpolate() {
        let p0 = Pmf::dirac(2, 40).unwrap();
        let cfg = OdeConfig {
            truncation: 40,
            dt: 0.01,
            t_end: 0.02,
            snapshot_times: vec![0.0, 0.005, 0.01],
        };
        let traj = integrate(&p0, &cfg).unwrap();
        let s0 = traj.states()[0].weights();
        let smid = traj.states()[1].weights();
        let s1 = traj.states()[2].weights();
        for n in 0..s0.len() {
            let lerp = 0.5 * (s0[n] + s1[n]);
            assert!((smid[n] - lerp).abs() < 1e-12);
        }
    }

    #[test]
    fn under_truncated_run_names_first_bad_snapshot() {
        // Mean 0.25 admits a window of 19, but parking the atom right on the
        // edge pushes half of each self-collision past it.
        let q = 0.25 / 19.0;
        let mut w = vec![0.0; 20];
        w[0] = 1.0 - q;
        w[19] = q;
        let p0 = Pmf::new(w, 0.0).unwrap();
        let cfg = OdeConfig {
            truncation: 19,
            dt: 0.05,
            t_end: 0.5,
            snapshot_times: vec![0.25, 0.5],
        };
        match integrate(&p0, &cfg) {
            Err(Error::Truncation { time, defect }) => {
                assert!((time - 0.25).abs() < 1e-12);
                assert!(defect > MASS_DEFECT_LIMIT);
            }
            other => panic!("expected truncation failure, got {other:?}"),
        }
    }

    #[test]
    fn halving_the_step_cuts_endpoint_error_sixteen_fold() {
        let k = dist::default_truncation(1.0).unwrap();
        let p0 = Pmf::dirac(1, k).unwrap();
        let run = |dt: f64| {
            let cfg = OdeConfig {
                truncation: k,
                dt,
                t_end: 0.5,
                snapshot_times: vec![0.5],
            };
            integrate(&p0, &cfg).unwrap().states()[0].clone()
        };
        let reference = run(1e-4);
        let err = |state: &Pmf| {
            state
                .weights()
                .iter()
                .zip(reference.weights())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let coarse = err(&run(0.02));
        let fine = err(&run(0.01));
        let ratio = coarse / fine;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "order-four ratio off: {coarse:e} / {fine:e} = {ratio}"
        );
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        let base = OdeConfig {
            truncation: 60,
            dt: 0.01,
            t_end: 1.0,
            snapshot_times: vec![0.5],
        };
        let mut c = base.clone();
        c.dt = 0.2;
        assert!(c.validate(5.0).is_err());
        c = base.clone();
        c.dt = 0.0;
        assert!(c.validate(5.0).is_err());
        c = base.clone();
        c.snapshot_times = vec![0.5, 0.5];
        assert!(c.validate(5.0).is_err());
        c = base.clone();
        c.snapshot_times = vec![0.5, 1.5];
        assert!(c.validate(5.0).is_err());
        c = base.clone();
        c.truncation = 30; // too short for mean 5
        assert!(c.validate(5.0).is_err());
        assert!(base.validate(5.0).is_ok());
        assert!(OdeConfig::with_default_truncation(5.0, 0.01, 1.0, vec![0.5])
            .unwrap()
            .validate(5.0)
            .is_ok());
    }

    /// Literal double sum over ordered pairs (k, l): each pair pools k + l
    /// units and deals them back with fair coins.
    fn brute_rate(p: &Pmf) -> Vec<f64> {
        let w = p.weights();
        let mut out = vec![0.0; w.len()];
        for (n, slot) in out.iter_mut().enumerate() {
            let mut gain = 0.0;
            for (k, pk) in w.iter().enumerate() {
                for (l, ql) in w.iter().enumerate() {
                    let m = k + l;
                    if n > m {
                        continue;
                    }
                    let ways = binomial_u128(m as u128, n as u128).unwrap() as f64;
                    gain += pk * ql * ways * 2.0f64.powi(-(m as i32));
                }
            }
            *slot = gain - w[n];
        }
        out
    }

    proptest! {
        #[test]
        fn operator_matches_literal_double_sum(p in arb_pmf(13)) {
            let q = q_operator(&p).unwrap();
            let brute = brute_rate(&p);
            for (n, b) in brute.iter().enumerate() {
                prop_assert!((q.rate.get(n) - b).abs() <= 1e-13);
            }
        }

        #[test]
        fn rate_and_leakage_balance(p in arb_pmf(10)) {
            let q = q_operator(&p).unwrap();
            prop_assert!((q.rate.sum() + q.leakage).abs() <= 1e-12);
        }
    }
}
