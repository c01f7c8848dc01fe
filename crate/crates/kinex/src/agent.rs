//! Stochastic N-agent simulator: pairwise exchange under four rules, with
//! either a discrete event counter or a Poisson model clock, snapshotting
//! empirical distributions along the way.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::metrics;
use crate::rng::{self, Rng};

/// Allowed relative drift between the cached and recomputed totals for
/// real-valued rules, per agent.
pub const REAL_TOTAL_DRIFT: f64 = 1e-9;

/// How one chosen pair reshuffles its pooled wealth.
///
/// `Saving`'s field is the reshuffled fraction of the pool: the pair keeps
/// `1 - s` of their own wealth and splits `s` of the pool at a uniformly
/// random ratio. `s = 1` recovers `Uniform`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExchangeRule {
    Binomial,
    Uniform,
    RepeatedAverage,
    Saving { s: f64 },
}

impl ExchangeRule {
    /// Binomial exchange acts on integer wealth; the rest act on reals.
    pub fn integer_domain(&self) -> bool {
        matches!(self, ExchangeRule::Binomial)
    }

    pub fn validate(&self) -> Result<()> {
        if let ExchangeRule::Saving { s } = self {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::Config(format!(
                    "saving fraction must lie in [0, 1], got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Named starting profile, materialized once at run start.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Dirac { value: f64 },
    UniformRange { lo: f64, hi: f64 },
    Custom { values: Vec<f64> },
}

/// How model time advances per event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeConvention {
    /// The event counter is the clock.
    Discrete,
    /// Each event advances time by Exp(mean 2/N), so every agent is touched
    /// at unit rate.
    PoissonClock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub agents: usize,
    pub rule: ExchangeRule,
    pub initial: InitialCondition,
    pub seed: u64,
    pub events: u64,
    pub snapshot_every: u64,
    pub time_convention: TimeConvention,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents < 2 {
            return Err(Error::Config(format!(
                "need at least two agents, got {}",
                self.agents
            )));
        }
        if self.events < 1 {
            return Err(Error::Config("need at least one event".into()));
        }
        if self.snapshot_every < 1 {
            return Err(Error::Config("snapshot stride must be positive".into()));
        }
        self.rule.validate()?;
        Ok(())
    }
}

/// Wealth vector with a cached total. The cache is the conservation ledger:
/// exchanges never touch it, so re-verification against the freshly summed
/// vector is a real check, not a tautology.
#[derive(Debug, Clone)]
pub enum WealthState {
    Integer { values: Vec<u64>, total: u64 },
    Real { values: Vec<f64>, total: f64 },
}

impl WealthState {
    pub fn integer(values: Vec<u64>) -> Result<Self> {
        let mut total: u64 = 0;
        for v in &values {
            total = total.checked_add(*v).ok_or_else(|| {
                Error::Config("total wealth overflows the integer ledger".into())
            })?;
        }
        Ok(WealthState::Integer { values, total })
    }

    pub fn real(values: Vec<f64>) -> Result<Self> {
        for v in &values {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Config(
                    "wealth values must be finite and nonnegative".into(),
                ));
            }
        }
        let total = values.iter().sum();
        Ok(WealthState::Real { values, total })
    }

    pub fn len(&self) -> usize {
        match self {
            WealthState::Integer { values, .. } => values.len(),
            WealthState::Real { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> f64 {
        match self {
            WealthState::Integer { total, .. } => *total as f64,
            WealthState::Real { total, .. } => *total,
        }
    }

    /// Wealth vector as reals, whatever the domain.
    pub fn as_reals(&self) -> Vec<f64> {
        match self {
            WealthState::Integer { values, .. } => {
                values.iter().map(|v| *v as f64).collect()
            }
            WealthState::Real { values, .. } => values.clone(),
        }
    }

    /// Recompute the total and compare against the ledger.
    pub fn verify_total(&self) -> Result<()> {
        match self {
            WealthState::Integer { values, total } => {
                let fresh: u64 = values.iter().sum();
                if fresh != *total {
                    return Err(Error::Numerical(format!(
                        "integer wealth ledger broke: {fresh} != {total}"
                    )));
                }
            }
            WealthState::Real { values, total } => {
                let fresh: f64 = values.iter().sum();
                let allowed = REAL_TOTAL_DRIFT * values.len() as f64;
                if (fresh - total).abs() > allowed {
                    return Err(Error::Numerical(format!(
                        "real wealth drifted by {:e} (allowed {:e})",
                        (fresh - total).abs(),
                        allowed
                    )));
                }
            }
        }
        Ok(())
    }

    /// Histogram of the wealth vector on the nonnegative integers (reals
    /// binned by floor), normalized to a pmf.
    pub fn empirical_pmf(&self) -> Result<Pmf> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Parameter("empty wealth state".into()));
        }
        let mut counts: Vec<u64> = Vec::new();
        let mut bump = |bin: usize| {
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        };
        match self {
            WealthState::Integer { values, .. } => {
                for v in values {
                    bump(*v as usize);
                }
            }
            WealthState::Real { values, .. } => {
                for v in values {
                    bump(*v as usize);
                }
            }
        }
        let weights = counts.iter().map(|c| *c as f64 / n as f64).collect();
        Pmf::new(weights, 0.0)
    }
}

/// One recorded state of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub event_index: u64,
    pub t_model: f64,
    pub pmf: Pmf,
    pub mean: f64,
    pub variance: f64,
    pub gini: f64,
}

/// Apply one exchange event: a uniformly random unordered pair pools its
/// wealth and splits it per the rule. Returns the chosen pair; every other
/// entry is untouched.
pub fn step(state: &mut WealthState, rule: &ExchangeRule, rng: &mut Rng) -> Result<(usize, usize)> {
    let n = state.len();
    if n < 2 {
        return Err(Error::Config("need at least two agents to exchange".into()));
    }
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }

    match (state, rule) {
        (WealthState::Integer { values, .. }, ExchangeRule::Binomial) => {
            let pool = values[i] + values[j];
            let share = rng::sample_binomial_half(pool, rng);
            values[i] = share;
            values[j] = pool - share;
        }
        (WealthState::Real { values, .. }, ExchangeRule::Uniform) => {
            let pool = values[i] + values[j];
            let share = rng::uniform_unit(rng) * pool;
            values[i] = share;
            values[j] = (pool - share).max(0.0);
        }
        (WealthState::Real { values, .. }, ExchangeRule::RepeatedAverage) => {
            let half = 0.5 * (values[i] + values[j]);
            values[i] = half;
            values[j] = half;
        }
        (WealthState::Real { values, .. }, ExchangeRule::Saving { s }) => {
            let pool = values[i] + values[j];
            let share = rng::uniform_unit(rng) * s * pool + (1.0 - s) * values[i];
            values[i] = share;
            values[j] = (pool - share).max(0.0);
        }
        (_, rule) => {
            return Err(Error::Parameter(format!(
                "rule {rule:?} does not match the state's value domain"
            )));
        }
    }
    Ok((i, j))
}

impl InitialCondition {
    fn materialize(&self, n: usize, integer_domain: bool, rng: &mut Rng) -> Result<WealthState> {
        let integral = |v: f64| v.is_finite() && v >= 0.0 && v.fract() == 0.0;
        match self {
            InitialCondition::Dirac { value } => {
                if integer_domain {
                    if !integral(*value) {
                        return Err(Error::Config(format!(
                            "integer rule needs an integer start, got {value}"
                        )));
                    }
                    WealthState::integer(vec![*value as u64; n])
                } else {
                    WealthState::real(vec![*value; n])
                }
            }
            InitialCondition::UniformRange { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi >= lo) {
                    return Err(Error::Config(format!(
                        "bad uniform range [{lo}, {hi}]"
                    )));
                }
                if integer_domain {
                    if !integral(*lo) || !integral(*hi) {
                        return Err(Error::Config(
                            "integer rule needs integer range endpoints".into(),
                        ));
                    }
                    let (a, b) = (*lo as u64, *hi as u64);
                    let values = (0..n).map(|_| rng.gen_range(a..=b)).collect();
                    WealthState::integer(values)
                } else {
                    let values = (0..n)
                        .map(|_| lo + rng::uniform_unit(rng) * (hi - lo))
                        .collect();
                    WealthState::real(values)
                }
            }
            InitialCondition::Custom { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!(
                        "custom start has {} entries for {} agents",
                        values.len(),
                        n
                    )));
                }
                if integer_domain {
                    if !values.iter().all(|v| integral(*v)) {
                        return Err(Error::Config(
                            "integer rule needs integer custom values".into(),
                        ));
                    }
                    WealthState::integer(values.iter().map(|v| *v as u64).collect())
                } else {
                    WealthState::real(values.clone())
                }
            }
        }
    }
}

/// Run one replica to completion, recording a snapshot at event 0, every
/// `snapshot_every` events, and at the final event. Deterministic in the
/// seed: identical configs produce bit-identical snapshot streams.
pub fn run(cfg: &SimConfig) -> Result<Vec<Snapshot>> {
    cfg.validate()?;
    let mut rng = rng::replica_rng(cfg.seed, 0);
    let mut state = cfg
        .initial
        .materialize(cfg.agents, cfg.rule.integer_domain(), &mut rng)?;
    if state.total() <= 0.0 {
        return Err(Error::Config(
            "total wealth must be positive at the start".into(),
        ));
    }

    let mut out = Vec::new();
    let mut t_model = 0.0f64;
    record_snapshot(&mut out, &state, 0, t_model)?;

    let clock_mean = 2.0 / cfg.agents as f64;
    for event in 1..=cfg.events {
        step(&mut state, &cfg.rule, &mut rng)?;
        match cfg.time_convention {
            TimeConvention::Discrete => t_model = event as f64,
            TimeConvention::PoissonClock => {
                t_model += rng::sample_exponential(clock_mean, &mut rng)
            }
        }
        if event % cfg.snapshot_every == 0 || event == cfg.events {
            record_snapshot(&mut out, &state, event, t_model)?;
        }
    }
    Ok(out)
}

fn record_snapshot(
    out: &mut Vec<Snapshot>,
    state: &WealthState,
    event_index: u64,
    t_model: f64,
) -> Result<()> {
    state.verify_total()?;
    let values = state.as_reals();
    let n = values.len() as f64;
    let mean = state.total() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let gini = metrics::gini(&values)?;
    out.push(Snapshot {
        event_index,
        t_model,
        pmf: state.empirical_pmf()?,
        mean,
        variance,
        gini,
    });
    Ok(())
}
