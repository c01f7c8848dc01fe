//! Resolved run configurations: defaults <- config file <- flags, then a
//! validation pass that reports violations as data (field, constraint,
//! offending value) before any computation starts.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use kinex::agent::{ExchangeRule, InitialCondition, SimConfig, TimeConvention};
use kinex::dist::MAX_TRUNCATION;
use kinex::numeric::binomial_u128;

/// How a run ends abnormally: validation problems exit 2, everything that
/// goes wrong after a valid configuration exits 1.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn from_kinex(err: kinex::Error) -> Self {
        Failure::Runtime(err.to_string())
    }
}

/// One precondition violation, kept as data so callers can collect them all.
pub struct Violation {
    pub field: &'static str,
    pub constraint: String,
    pub value: String,
}

impl Violation {
    fn new(field: &'static str, constraint: impl Into<String>, value: impl Display) -> Self {
        Violation {
            field,
            constraint: constraint.into(),
            value: value.to_string(),
        }
    }
}

pub fn reject(violations: Vec<Violation>) -> Result<(), Failure> {
    if violations.is_empty() {
        return Ok(());
    }
    let line = violations
        .iter()
        .map(|v| format!("{}: requires {} (got {})", v.field, v.constraint, v.value))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Failure::Validation(line))
}

/// Load a config file for `command`. The file may be either a bare config
/// object or a manifest from a previous run, in which case the embedded
/// resolved config is extracted (and the command is checked).
pub fn load_config<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T, Failure> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("config {}: unreadable ({e})", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Failure::Validation(format!("config {}: invalid JSON ({e})", path.display())))?;
    if value.get("artifacts").is_some() && value.get("command").is_some() {
        let found = value["command"].as_str().unwrap_or_default().to_string();
        if found != command {
            return Err(Failure::Validation(format!(
                "config {}: manifest records command '{found}', expected '{command}'",
                path.display()
            )));
        }
        value = value["config"].take();
    }
    serde_json::from_value(value)
        .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))
}

fn check_time_grid(violations: &mut Vec<Violation>, dt: f64, t_end: f64) {
    if !(dt > 0.0 && dt <= 0.1) {
        violations.push(Violation::new("dt", "0 < dt <= 0.1", dt));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        violations.push(Violation::new("t_end", "t_end > 0", t_end));
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateRun {
    pub agents: usize,
    pub events: u64,
    pub seed: u64,
    pub rule: ExchangeRule,
    pub initial: InitialCondition,
    pub snapshot_every: Option<u64>,
    pub time_convention: TimeConvention,
}

impl Default for SimulateRun {
    fn default() -> Self {
        SimulateRun {
            agents: 1000,
            events: 100_000,
            seed: 1,
            rule: ExchangeRule::Binomial,
            initial: InitialCondition::Dirac { value: 5.0 },
            snapshot_every: None,
            time_convention: TimeConvention::PoissonClock,
        }
    }
}

impl SimulateRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if self.agents < 2 {
            v.push(Violation::new("agents", "N >= 2", self.agents));
        }
        if self.events < 1 {
            v.push(Violation::new("events", "events >= 1", self.events));
        }
        if let ExchangeRule::Saving { s } = self.rule {
            if !(0.0..=1.0).contains(&s) {
                v.push(Violation::new("rule.s", "0 <= s <= 1", s));
            }
        }
        match &self.initial {
            InitialCondition::Dirac { value } if !(*value >= 0.0) => {
                v.push(Violation::new("initial.value", "value >= 0", value));
            }
            InitialCondition::UniformRange { lo, hi } if !(*lo >= 0.0 && hi >= lo) => {
                v.push(Violation::new("initial", "0 <= lo <= hi", format!("{lo}..{hi}")));
            }
            InitialCondition::Custom { values } if values.is_empty() => {
                v.push(Violation::new("initial.values", "nonempty", "[]"));
            }
            _ => {}
        }
        if self.snapshot_every == Some(0) {
            v.push(Violation::new("snapshot_every", "stride >= 1", 0));
        }
        reject(v)
    }

    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            agents: self.agents,
            rule: self.rule,
            initial: self.initial.clone(),
            seed: self.seed,
            events: self.events,
            snapshot_every: self.snapshot_every.unwrap_or(self.events.div_ceil(10)),
            time_convention: self.time_convention,
        }
    }
}

// ---------------------------------------------------------------- meanfield

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PmfInitial {
    Dirac { value: usize },
    Poisson { lambda: f64 },
    Custom { weights: Vec<f64> },
}

impl PmfInitial {
    pub fn mean(&self) -> f64 {
        match self {
            PmfInitial::Dirac { value } => *value as f64,
            PmfInitial::Poisson { lambda } => *lambda,
            PmfInitial::Custom { weights } => {
                let mass: f64 = weights.iter().sum();
                if mass <= 0.0 {
                    return f64::NAN;
                }
                weights
                    .iter()
                    .enumerate()
                    .map(|(n, w)| n as f64 * w)
                    .sum::<f64>()
                    / mass
            }
        }
    }

    pub fn build(&self, truncation: usize) -> kinex::Result<kinex::dist::Pmf> {
        match self {
            PmfInitial::Dirac { value } => kinex::dist::Pmf::dirac(*value, truncation),
            PmfInitial::Poisson { lambda } => kinex::dist::poisson_pmf(*lambda, truncation),
            PmfInitial::Custom { weights } => {
                Ok(kinex::dist::Pmf::new(weights.clone(), 0.0)?.with_truncation(truncation))
            }
        }
    }

    fn min_truncation(&self) -> usize {
        match self {
            PmfInitial::Dirac { value } => *value,
            PmfInitial::Poisson { .. } => 0,
            PmfInitial::Custom { weights } => weights.len().saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanfieldRun {
    pub initial: PmfInitial,
    pub truncation: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub snap_step: f64,
}

impl Default for MeanfieldRun {
    fn default() -> Self {
        MeanfieldRun {
            initial: PmfInitial::Dirac { value: 5 },
            truncation: None,
            dt: 0.01,
            t_end: 5.0,
            snap_step: 0.25,
        }
    }
}

impl MeanfieldRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        let mean = self.initial.mean();
        if !(mean > 0.0) || !mean.is_finite() {
            v.push(Violation::new("initial", "mean > 0", mean));
        }
        if let PmfInitial::Custom { weights } = &self.initial {
            if weights.iter().any(|w| !(*w >= 0.0)) {
                v.push(Violation::new("initial.weights", "all weights >= 0", "negative entry"));
            }
        }
        check_time_grid(&mut v, self.dt, self.t_end);
        if !(self.snap_step > 0.0) {
            v.push(Violation::new("snap_step", "snap_step > 0", self.snap_step));
        }
        if let Some(k) = self.truncation {
            if k > MAX_TRUNCATION {
                v.push(Violation::new(
                    "truncation",
                    format!("truncation <= {MAX_TRUNCATION}"),
                    k,
                ));
            }
        }
        reject(v)
    }

    /// Truncation window: explicit, or the smallest window holding the
    /// equilibrium tail below the library default, widened to fit the
    /// initial condition.
    pub fn resolve_truncation(&self) -> kinex::Result<usize> {
        let floor = self.initial.min_truncation();
        match self.truncation {
            Some(k) => Ok(k.max(floor)),
            None => Ok(kinex::dist::default_truncation(self.initial.mean())?.max(floor)),
        }
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        let mut k = 1usize;
        loop {
            let t = k as f64 * self.snap_step;
            if t > self.t_end + 1e-9 {
                break;
            }
            times.push(t.min(self.t_end));
            k += 1;
        }
        times
    }
}

// ---------------------------------------------------------------- couple

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleRun {
    pub dirac: usize,
    pub lambda: f64,
    pub pairs: usize,
    pub t_end: f64,
    pub grid_step: f64,
    pub replicas: u64,
    pub seed: u64,
}

impl Default for CoupleRun {
    fn default() -> Self {
        CoupleRun {
            dirac: 5,
            lambda: 5.0,
            pairs: 10_000,
            t_end: 10.0,
            grid_step: 0.5,
            replicas: 8,
            seed: 1,
        }
    }
}

impl CoupleRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            v.push(Violation::new("lambda", "lambda > 0", self.lambda));
        }
        if self.pairs < 2 {
            v.push(Violation::new("pairs", "pairs >= 2", self.pairs));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            v.push(Violation::new("t_end", "t_end > 0", self.t_end));
        }
        if !(self.grid_step > 0.0) {
            v.push(Violation::new("grid_step", "grid_step > 0", self.grid_step));
        }
        if self.replicas < 1 {
            v.push(Violation::new("replicas", "replicas >= 1", self.replicas));
        }
        reject(v)
    }
}

// ---------------------------------------------------------------- chain

pub const CHAIN_STATE_LIMIT: u128 = 2_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainRun {
    pub agents: usize,
    pub total: u32,
}

impl Default for ChainRun {
    fn default() -> Self {
        ChainRun { agents: 3, total: 6 }
    }
}

impl ChainRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if self.agents < 2 {
            v.push(Violation::new("agents", "N >= 2", self.agents));
        } else {
            let count = binomial_u128(
                self.total as u128 + self.agents as u128 - 1,
                self.agents as u128 - 1,
            );
            match count {
                Some(c) if c <= CHAIN_STATE_LIMIT => {}
                Some(c) => v.push(Violation::new(
                    "total",
                    format!("configuration count <= {CHAIN_STATE_LIMIT}"),
                    format!("{c} states"),
                )),
                None => v.push(Violation::new(
                    "total",
                    format!("configuration count <= {CHAIN_STATE_LIMIT}"),
                    "count overflows u128",
                )),
            }
        }
        reject(v)
    }
}

// ---------------------------------------------------------------- laplace

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceRun {
    pub dirac: usize,
    pub depth: usize,
    pub t_end: f64,
    pub dt: f64,
    pub snap_step: f64,
}

impl Default for LaplaceRun {
    fn default() -> Self {
        LaplaceRun {
            dirac: 5,
            depth: kinex::laplace::DEFAULT_DEPTH,
            t_end: 40.0,
            dt: 0.01,
            snap_step: 0.1,
        }
    }
}

impl LaplaceRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if self.dirac == 0 {
            v.push(Violation::new("dirac", "value >= 1", self.dirac));
        }
        if self.depth == 0 || self.depth > 64 {
            v.push(Violation::new("depth", "1 <= depth <= 64", self.depth));
        }
        check_time_grid(&mut v, self.dt, self.t_end);
        if !(self.snap_step > 0.0) {
            v.push(Violation::new("snap_step", "snap_step > 0", self.snap_step));
        }
        reject(v)
    }
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsRun {
    pub p: Option<PathBuf>,
    pub q: Option<PathBuf>,
}

impl MetricsRun {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if self.p.is_none() {
            v.push(Violation::new("p", "a pmf CSV path", "missing"));
        }
        reject(v)
    }
}

// ---------------------------------------------------------------- reproduce

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig1Run {
    pub n: usize,
    pub events: u64,
    pub seed: u64,
}

impl Default for Fig1Run {
    fn default() -> Self {
        Fig1Run {
            n: 10_000,
            events: 10_000_000,
            seed: 7,
        }
    }
}

impl Fig1Run {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if self.n < 2 {
            v.push(Violation::new("n", "N >= 2", self.n));
        }
        if self.events < 1 {
            v.push(Violation::new("events", "events >= 1", self.events));
        }
        reject(v)
    }

    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            agents: self.n,
            rule: ExchangeRule::Binomial,
            initial: InitialCondition::Dirac { value: 5.0 },
            seed: self.seed,
            events: self.events,
            snapshot_every: self.events.div_ceil(4),
            time_convention: TimeConvention::Discrete,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig4Run {
    pub lambda: f64,
    pub t_end: f64,
    pub dt: f64,
    pub truncation: Option<usize>,
}

impl Default for Fig4Run {
    fn default() -> Self {
        Fig4Run {
            lambda: 5.0,
            t_end: 1.5,
            dt: 0.01,
            truncation: None,
        }
    }
}

impl Fig4Run {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            v.push(Violation::new("lambda", "lambda > 0", self.lambda));
        }
        if (self.lambda - self.lambda.round()).abs() > 1e-9 {
            v.push(Violation::new(
                "lambda",
                "an integer starting level",
                self.lambda,
            ));
        }
        check_time_grid(&mut v, self.dt, self.t_end);
        reject(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5Run {
    pub t_end: f64,
    pub dt: f64,
    pub truncation: usize,
    pub window_start: f64,
    pub snap_step: f64,
}

impl Default for Fig5Run {
    fn default() -> Self {
        Fig5Run {
            t_end: 8.0,
            dt: 0.01,
            truncation: 64,
            window_start: 0.5,
            snap_step: 0.25,
        }
    }
}

impl Fig5Run {
    pub fn validate(&self) -> Result<(), Failure> {
        let mut v = Vec::new();
        check_time_grid(&mut v, self.dt, self.t_end);
        if !(self.window_start > 0.0 && self.window_start < self.t_end) {
            v.push(Violation::new(
                "window_start",
                "0 < window_start < t_end",
                self.window_start,
            ));
        }
        if !(self.snap_step > 0.0) {
            v.push(Violation::new("snap_step", "snap_step > 0", self.snap_step));
        }
        if self.truncation > MAX_TRUNCATION {
            v.push(Violation::new(
                "truncation",
                format!("truncation <= {MAX_TRUNCATION}"),
                self.truncation,
            ));
        }
        // The decay fit wants at least 10 points in the window.
        let points = ((self.t_end - self.window_start) / self.snap_step).floor() as usize + 1;
        if points < 10 {
            v.push(Violation::new(
                "snap_step",
                "at least 10 snapshots between window_start and t_end",
                format!("{points} snapshots"),
            ));
        }
        reject(v)
    }

    /// The shifted-uniform start: uniform on {0..10} with 0.015 mass moved
    /// from 0 to 10, giving mean 5.15.
    pub fn initial(&self) -> kinex::Result<kinex::dist::Pmf> {
        let mut w = vec![1.0 / 11.0; 11];
        w[0] -= 0.015;
        w[10] += 0.015;
        Ok(kinex::dist::Pmf::new(w, 0.0)?.with_truncation(self.truncation))
    }
}
