//! Cross-module consistency: independent computational routes to the same
//! quantity must agree. Each test pits a stochastic or transformed route
//! against an exact or deterministic one.

use kinex::coupling::CoupledEnsemble;
use kinex::dist::{poisson_pmf, Pmf};
use kinex::laplace::{generating_function, integrate_a_system, profile_from_pmf};
use kinex::meanfield::{integrate, OdeConfig};
use kinex::metrics::{wasserstein, Order};
use kinex::rng::replica_rng;
use kinex::{agent, chain};

/// Long-run occupation frequencies of the three-agent simulator equal the
/// exact stationary law of the finite chain. Sampling every 10th event
/// decorrelates the draws enough that plain multinomial 4-sigma bands apply.
#[test]
fn occupation_frequencies_match_the_exact_chain() {
    const EVENTS: u64 = 10_000_000;
    const STRIDE: u64 = 10;
    let (space, matrix) = chain::build_chain(3, 6).unwrap();
    let pi = chain::stationary(&matrix).unwrap();

    let mut state = agent::WealthState::integer(vec![2, 2, 2]).unwrap();
    let rule = agent::ExchangeRule::Binomial;
    let mut rng = replica_rng(30_006, 0);
    let mut counts = vec![0u64; space.len()];
    let mut samples = 0u64;
    for event in 1..=EVENTS {
        agent::step(&mut state, &rule, &mut rng).unwrap();
        if event % STRIDE == 0 {
            let cfg: Vec<u32> = state.as_reals().iter().map(|v| *v as u32).collect();
            let idx = space.index_of(&cfg).expect("total is conserved");
            counts[idx] += 1;
            samples += 1;
        }
    }
    state.verify_total().unwrap();

    for (idx, &count) in counts.iter().enumerate() {
        let freq = count as f64 / samples as f64;
        let sigma = (pi[idx] * (1.0 - pi[idx]) / samples as f64).sqrt();
        let z = (freq - pi[idx]).abs() / sigma;
        assert!(
            z <= 4.0,
            "state {:?}: frequency {freq:.6} vs stationary {:.6} is {z:.2} sigma off",
            space.state(idx),
            pi[idx]
        );
    }
}

/// The one-sided marginal of the coupled ensemble follows the deterministic
/// flow of the single-agent law, up to Monte Carlo error O(M^{-1/2}).
#[test]
fn ensemble_marginal_tracks_the_deterministic_flow() {
    const PAIRS: usize = 20_000;
    const W1_BAND: f64 = 0.08;
    let p0 = Pmf::dirac(5, 60).unwrap();
    let cfg = OdeConfig {
        truncation: 60,
        dt: 0.01,
        t_end: 2.0,
        snapshot_times: vec![1.0, 2.0],
    };
    let traj = integrate(&p0, &cfg).unwrap();

    let mut rng = replica_rng(42_000, 0);
    let mut ens = CoupledEnsemble::init_comonotone(&p0, 5.0, PAIRS, &mut rng).unwrap();
    for (target, reference) in traj.times().iter().zip(traj.states()) {
        while ens.t() < *target {
            ens.coupled_step(&mut rng);
        }
        let w1 = wasserstein(&ens.x_marginal(), reference, Order::One).unwrap();
        assert!(
            w1 < W1_BAND,
            "t = {target}: W1(ensemble marginal, deterministic state) = {w1:.4}"
        );
        // The equilibrium-side marginal never leaves its law.
        let w1_bar = wasserstein(&ens.xbar_marginal(), &poisson_pmf(5.0, 60).unwrap(), Order::One)
            .unwrap();
        assert!(w1_bar < W1_BAND, "t = {target}: equilibrium marginal drifted {w1_bar:.4}");
    }
}

/// Two routes to a_n(t): evolve the ladder ODE from the initial profile, or
/// read the profile off the evolved distribution. They must agree.
#[test]
fn ladder_routes_agree_with_the_distribution_flow() {
    const TOL: f64 = 1e-4;
    let p0 = Pmf::dirac(5, 60).unwrap();
    let check_times = [1.0f64, 2.5, 5.0];
    let cfg = OdeConfig {
        truncation: 60,
        dt: 0.01,
        t_end: 5.0,
        snapshot_times: check_times.to_vec(),
    };
    let traj = integrate(&p0, &cfg).unwrap();

    let a0 = profile_from_pmf(&p0, kinex::laplace::DEFAULT_DEPTH).unwrap();
    let ladder = integrate_a_system(&a0, 5.0, 0.01).unwrap();

    for (k, t) in check_times.iter().enumerate() {
        let p_t = &traj.states()[k];
        let step = (t / 0.01).round() as usize;
        assert!((ladder.times()[step] - t).abs() < 1e-9);
        let a_t = &ladder.states()[step];
        for n in 0..=8usize {
            let direct = generating_function(p_t, 1.0 - 2.0f64.powi(-(n as i32)));
            let gap = (a_t[n] - direct).abs();
            assert!(
                gap < TOL,
                "t = {t}, rung {n}: ladder {} vs transform {direct} (gap {gap:.2e})",
                a_t[n]
            );
        }
    }
}
