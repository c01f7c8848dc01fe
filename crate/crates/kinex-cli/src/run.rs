//! Command execution: call into the library, write long-format CSV and
//! pretty JSON artifacts, and finish each output directory with a
//! manifest.json recording the resolved config, seed, and checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use kinex::coupling::{contraction_envelope, run_coupling, CouplingTrace};
use kinex::dist::{binomial_pmf, default_truncation, poisson_pmf, Pmf};
use kinex::laplace::{integrate_a_system, profile_from_pmf};
use kinex::meanfield::{integrate, OdeConfig, Trajectory};
use kinex::metrics::{fit_decay, gini_pmf, total_variation, wasserstein, DecayFit, Order, TraceSeries};
use kinex::{agent, chain};

use crate::config::*;

/// Refuse to clobber existing artifacts unless --force is given.
pub fn prepare_out(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)
            .map_err(|e| Failure::Runtime(format!("out {}: {e}", dir.display())))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Failure::Validation(format!(
                "out: directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("out {}: {e}", dir.display())))?;
    Ok(())
}

/// Accumulates artifacts for one run directory and their checksums.
struct Artifacts {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            checksums: BTreeMap::new(),
        }
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let digest = Sha256::digest(bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        std::fs::write(self.dir.join(name), bytes)
            .map_err(|e| Failure::Runtime(format!("writing {name}: {e}")))?;
        self.checksums.insert(name.to_string(), hex);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<(), Failure> {
        let mut body = String::with_capacity(rows.len() * 24 + header.len() + 1);
        body.push_str(header);
        body.push('\n');
        for row in rows {
            body.push_str(row);
            body.push('\n');
        }
        self.write_bytes(name, body.as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        // Round-tripping through Value sorts every object's keys, keeping
        // artifacts diff-stable no matter how the structs are declared.
        let value = serde_json::to_value(value)
            .map_err(|e| Failure::Runtime(format!("serializing {name}: {e}")))?;
        let mut text = serde_json::to_string_pretty(&value)
            .map_err(|e| Failure::Runtime(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Write manifest.json last; it lists every other artifact.
    fn finish<C: Serialize>(
        mut self,
        command: &str,
        config: &C,
        seed: Option<u64>,
    ) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config: serde_json::Value,
            #[serde(skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
            artifacts: BTreeMap<String, String>,
        }
        let manifest = Manifest {
            command,
            config: serde_json::to_value(config)
                .map_err(|e| Failure::Runtime(format!("serializing config: {e}")))?,
            seed,
            artifacts: self.checksums.clone(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

/// Worker cap: KINEX_THREADS if set, else the machine's parallelism.
fn worker_threads() -> Result<usize, Failure> {
    match std::env::var("KINEX_THREADS") {
        Ok(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| {
                Failure::Validation(format!("KINEX_THREADS: requires a positive integer (got {raw})"))
            }),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run replicas 0..n across a bounded pool; results are collected by replica
/// index, so aggregation order never depends on thread scheduling.
fn run_replicas<T, F>(replicas: u64, f: F) -> Result<Vec<T>, Failure>
where
    T: Send,
    F: Fn(u64) -> Result<T, Failure> + Sync,
{
    let workers = worker_threads()?.min(replicas.max(1) as usize).max(1);
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut r = w as u64;
                    while r < replicas {
                        out.push((r, f(r)?));
                        r += workers as u64;
                    }
                    Ok::<_, Failure>(out)
                })
            })
            .collect();
        let mut tagged = Vec::with_capacity(replicas as usize);
        for handle in handles {
            let chunk = handle
                .join()
                .map_err(|_| Failure::Runtime("worker thread panicked".into()))??;
            tagged.extend(chunk);
        }
        tagged.sort_by_key(|(r, _)| *r);
        Ok(tagged.into_iter().map(|(_, t)| t).collect())
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- simulate

fn snapshot_rows(snaps: &[agent::Snapshot], agents: usize) -> Vec<String> {
    let mut rows = Vec::new();
    for snap in snaps {
        for (n, w) in snap.pmf.weights().iter().enumerate() {
            if *w > 0.0 {
                let count = (w * agents as f64).round() as u64;
                rows.push(format!(
                    "{},{},{n},{count}",
                    snap.event_index,
                    fmt_f64(snap.t_model)
                ));
            }
        }
    }
    rows
}

pub fn exec_simulate(run: &SimulateRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let snaps = agent::run(&run.to_sim_config()).map_err(Failure::from_kinex)?;
    let mut art = Artifacts::new(out);
    art.write_csv(
        "snapshots.csv",
        "event,t_model,n,count",
        &snapshot_rows(&snaps, run.agents),
    )?;
    let last = snaps.last().expect("at least the initial snapshot");
    #[derive(Serialize)]
    struct Summary {
        agents: usize,
        events: u64,
        final_t_model: f64,
        final_mean: f64,
        final_variance: f64,
        final_gini: f64,
    }
    art.write_json(
        "summary.json",
        &Summary {
            agents: run.agents,
            events: run.events,
            final_t_model: last.t_model,
            final_mean: last.mean,
            final_variance: last.variance,
            final_gini: last.gini,
        },
    )?;
    art.finish("simulate", run, Some(run.seed))
}

// ---------------------------------------------------------------- meanfield

fn trajectory_rows(traj: &Trajectory) -> Vec<String> {
    let mut rows = Vec::new();
    for (t, p) in traj.times().iter().zip(traj.states()) {
        for (n, w) in p.weights().iter().enumerate() {
            rows.push(format!("{},{n},{}", fmt_f64(*t), fmt_f64(*w)));
        }
    }
    rows
}

pub fn exec_meanfield(run: &MeanfieldRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let truncation = run.resolve_truncation().map_err(Failure::from_kinex)?;
    let p0 = run.initial.build(truncation).map_err(Failure::from_kinex)?;
    let cfg = OdeConfig {
        truncation,
        dt: run.dt,
        t_end: run.t_end,
        snapshot_times: run.snapshot_times(),
    };
    let traj = integrate(&p0, &cfg).map_err(Failure::from_kinex)?;
    let final_p = traj.final_state().expect("nonempty trajectory");
    let equilibrium = poisson_pmf(p0.mean(), truncation).map_err(Failure::from_kinex)?;
    let w2 = wasserstein(final_p, &equilibrium, Order::Two).map_err(Failure::from_kinex)?;

    let mut art = Artifacts::new(out);
    art.write_csv("trajectory.csv", "t,n,p_n", &trajectory_rows(&traj))?;
    #[derive(Serialize)]
    struct Summary {
        truncation: usize,
        final_t: f64,
        final_mean: f64,
        final_second_moment: f64,
        final_defect: f64,
        w2_to_equilibrium: f64,
    }
    art.write_json(
        "summary.json",
        &Summary {
            truncation,
            final_t: *traj.times().last().expect("nonempty"),
            final_mean: final_p.mean(),
            final_second_moment: final_p.second_moment(),
            final_defect: final_p.trunc_defect(),
            w2_to_equilibrium: w2,
        },
    )?;
    art.finish("meanfield", run, None)
}

// ---------------------------------------------------------------- couple

struct AggregatedCoupling {
    times: Vec<f64>,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

fn aggregate_traces(traces: &[CouplingTrace]) -> AggregatedCoupling {
    let times = traces[0].times.clone();
    let n_grid = times.len();
    let mut mean = vec![0.0; n_grid];
    let mut stderr = vec![0.0; n_grid];
    for k in 0..n_grid {
        let vals: Vec<f64> = traces.iter().map(|t| t.d_mean[k]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        mean[k] = m;
        stderr[k] = if vals.len() > 1 {
            let var =
                vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
            (var / vals.len() as f64).sqrt()
        } else {
            traces[0].d_stderr[k]
        };
    }
    AggregatedCoupling {
        times,
        mean,
        stderr,
    }
}

pub fn exec_couple(run: &CoupleRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let truncation = default_truncation(run.lambda)
        .map_err(Failure::from_kinex)?
        .max(run.dirac);
    let p0 = Pmf::dirac(run.dirac, truncation).map_err(Failure::from_kinex)?;
    let traces = run_replicas(run.replicas, |r| {
        run_coupling(
            &p0,
            run.lambda,
            run.pairs,
            run.t_end,
            run.grid_step,
            run.seed,
            r,
        )
        .map_err(Failure::from_kinex)
    })?;
    let agg = aggregate_traces(&traces);
    let rows: Vec<String> = agg
        .times
        .iter()
        .zip(agg.mean.iter().zip(&agg.stderr))
        .map(|(t, (d, s))| {
            format!(
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(*d),
                fmt_f64(*s),
                fmt_f64(contraction_envelope(*t))
            )
        })
        .collect();
    let mut art = Artifacts::new(out);
    art.write_csv("coupling.csv", "t,D_mean,D_stderr,bound_value", &rows)?;
    let crossing = agg
        .times
        .iter()
        .zip(&agg.mean)
        .find(|(_, d)| **d <= 1.0)
        .map(|(t, _)| *t);
    #[derive(Serialize)]
    struct Summary {
        replicas: u64,
        pairs: usize,
        d_initial: f64,
        d_final: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        first_t_with_d_below_one: Option<f64>,
    }
    art.write_json(
        "summary.json",
        &Summary {
            replicas: run.replicas,
            pairs: run.pairs,
            d_initial: agg.mean[0],
            d_final: *agg.mean.last().expect("nonempty grid"),
            first_t_with_d_below_one: crossing,
        },
    )?;
    art.finish("couple", run, Some(run.seed))
}

// ---------------------------------------------------------------- chain

pub fn exec_chain(run: &ChainRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let (space, matrix) = chain::build_chain(run.agents, run.total).map_err(Failure::from_kinex)?;
    let pi = chain::stationary(&matrix).map_err(Failure::from_kinex)?;

    let mut stationary_rows = Vec::with_capacity(space.len());
    let mut max_gap = 0.0f64;
    for (row, state) in space.states().iter().enumerate() {
        let exact = chain::multinomial_weight(state, run.total).map_err(Failure::from_kinex)?;
        max_gap = max_gap.max((pi[row] - exact).abs());
        let label = state
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("-");
        stationary_rows.push(format!(
            "{row},{label},{},{}",
            fmt_f64(pi[row]),
            fmt_f64(exact)
        ));
    }
    let mut transition_rows = Vec::with_capacity(matrix.nnz());
    for r in 0..matrix.dim() {
        let (cols, probs) = matrix.row(r);
        for (c, p) in cols.iter().zip(probs) {
            transition_rows.push(format!("{r},{c},{}", fmt_f64(*p)));
        }
    }
    let db = chain::detailed_balance_residual(&space, &matrix).map_err(Failure::from_kinex)?;
    let binom =
        binomial_pmf(run.total as usize, 1.0 / run.agents as f64).map_err(Failure::from_kinex)?;
    let mut max_marginal_gap = 0.0f64;
    for n in 0..=run.total {
        let m = chain::marginal(&pi, &space, 0, n);
        max_marginal_gap = max_marginal_gap.max((m - binom.get(n as usize)).abs());
    }

    let mut art = Artifacts::new(out);
    art.write_csv(
        "stationary.csv",
        "row,state,pi,product_law",
        &stationary_rows,
    )?;
    art.write_csv("transitions.csv", "row,col,prob", &transition_rows)?;
    #[derive(Serialize)]
    struct Summary {
        states: usize,
        nonzero_entries: usize,
        detailed_balance_residual: f64,
        max_stationary_gap: f64,
        max_marginal_gap: f64,
    }
    art.write_json(
        "summary.json",
        &Summary {
            states: space.len(),
            nonzero_entries: matrix.nnz(),
            detailed_balance_residual: db,
            max_stationary_gap: max_gap,
            max_marginal_gap,
        },
    )?;
    art.finish("chain", run, None)
}

// ---------------------------------------------------------------- laplace

pub fn exec_laplace(run: &LaplaceRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let p0 = Pmf::dirac(run.dirac, run.dirac).map_err(Failure::from_kinex)?;
    let a0 = profile_from_pmf(&p0, run.depth).map_err(Failure::from_kinex)?;
    let traj = integrate_a_system(&a0, run.t_end, run.dt).map_err(Failure::from_kinex)?;

    let stride = (run.snap_step / run.dt).round().max(1.0) as usize;
    let last = traj.times().len() - 1;
    let mut rows = Vec::new();
    let mut k = 0usize;
    loop {
        let t = traj.times()[k];
        for (n, a) in traj.states()[k].iter().enumerate() {
            rows.push(format!("{},{n},{}", fmt_f64(t), fmt_f64(*a)));
        }
        if k == last {
            break;
        }
        k = (k + stride).min(last);
    }

    let gaps = traj.limit_gaps();
    let mut art = Artifacts::new(out);
    art.write_csv("ladder.csv", "t,n,a_n", &rows)?;
    #[derive(Serialize)]
    struct Summary {
        mu: f64,
        depth: usize,
        final_t: f64,
        limit_gaps: Vec<f64>,
        max_limit_gap: f64,
    }
    art.write_json(
        "summary.json",
        &Summary {
            mu: traj.mu(),
            depth: run.depth,
            final_t: *traj.times().last().expect("nonempty"),
            max_limit_gap: gaps.iter().fold(0.0f64, |m, g| m.max(*g)),
            limit_gaps: gaps,
        },
    )?;
    art.finish("laplace", run, None)
}

// ---------------------------------------------------------------- metrics

/// Read a `n,p_n` CSV into a distribution; missing mass becomes declared
/// tail defect.
fn read_pmf(path: &Path) -> Result<Pmf, Failure> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("pmf {}: unreadable ({e})", path.display())))?;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let Some((n_txt, w_txt)) = line.split_once(',') else {
            return Err(Failure::Validation(format!(
                "pmf {}: line {} is not `n,p_n`",
                path.display(),
                lineno + 1
            )));
        };
        let n: usize = n_txt.trim().parse().map_err(|e| {
            Failure::Validation(format!("pmf {}: line {}: {e}", path.display(), lineno + 1))
        })?;
        let w: f64 = w_txt.trim().parse().map_err(|e| {
            Failure::Validation(format!("pmf {}: line {}: {e}", path.display(), lineno + 1))
        })?;
        entries.push((n, w));
    }
    if entries.is_empty() {
        return Err(Failure::Validation(format!(
            "pmf {}: no data rows",
            path.display()
        )));
    }
    let k_max = entries.iter().map(|(n, _)| *n).max().expect("nonempty");
    let mut weights = vec![0.0; k_max + 1];
    for (n, w) in entries {
        weights[n] += w;
    }
    let mass: f64 = weights.iter().sum();
    Pmf::new(weights, (1.0 - mass).max(0.0))
        .map_err(|e| Failure::Validation(format!("pmf {}: {e}", path.display())))
}

pub fn exec_metrics(run: &MetricsRun, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let p_path = run.p.as_ref().expect("validated");
    let p = read_pmf(p_path)?;
    #[derive(Serialize)]
    struct Summary {
        mean_p: f64,
        gini_p: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        mean_q: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        gini_q: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        w1: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        w2: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        total_variation: Option<f64>,
    }
    let mut summary = Summary {
        mean_p: p.mean(),
        gini_p: gini_pmf(&p).map_err(Failure::from_kinex)?,
        mean_q: None,
        gini_q: None,
        w1: None,
        w2: None,
        total_variation: None,
    };
    if let Some(q_path) = &run.q {
        let q = read_pmf(q_path)?;
        summary.mean_q = Some(q.mean());
        summary.gini_q = Some(gini_pmf(&q).map_err(Failure::from_kinex)?);
        summary.w1 = Some(wasserstein(&p, &q, Order::One).map_err(Failure::from_kinex)?);
        summary.w2 = Some(wasserstein(&p, &q, Order::Two).map_err(Failure::from_kinex)?);
        summary.total_variation = Some(total_variation(&p, &q));
    }
    let mut art = Artifacts::new(out);
    art.write_json("summary.json", &summary)?;
    art.finish("metrics", run, None)
}

// ---------------------------------------------------------------- reproduce

pub fn exec_fig1(run: &Fig1Run, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let snaps = agent::run(&run.to_sim_config()).map_err(Failure::from_kinex)?;
    let last = snaps.last().expect("at least the initial snapshot");
    let truncation = default_truncation(5.0).map_err(Failure::from_kinex)?;
    let reference = poisson_pmf(5.0, truncation).map_err(Failure::from_kinex)?;
    #[derive(Serialize)]
    struct Comparison {
        events: u64,
        agents: usize,
        final_mean: f64,
        final_gini: f64,
        w1_to_poisson: f64,
        w2_to_poisson: f64,
        tv_to_poisson: f64,
    }
    let comparison = Comparison {
        events: run.events,
        agents: run.n,
        final_mean: last.mean,
        final_gini: last.gini,
        w1_to_poisson: wasserstein(&last.pmf, &reference, Order::One)
            .map_err(Failure::from_kinex)?,
        w2_to_poisson: wasserstein(&last.pmf, &reference, Order::Two)
            .map_err(Failure::from_kinex)?,
        tv_to_poisson: total_variation(&last.pmf, &reference),
    };
    let mut art = Artifacts::new(out);
    art.write_csv(
        "snapshots.csv",
        "event,t_model,n,count",
        &snapshot_rows(&snaps, run.n),
    )?;
    art.write_json("poisson_comparison.json", &comparison)?;
    art.finish("reproduce-fig1", run, Some(run.seed))
}

pub fn exec_fig4(run: &Fig4Run, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let value = run.lambda.round() as usize;
    let truncation = match run.truncation {
        Some(k) => k.max(value),
        None => default_truncation(run.lambda)
            .map_err(Failure::from_kinex)?
            .max(value),
    };
    let p0 = Pmf::dirac(value, truncation).map_err(Failure::from_kinex)?;
    let mut snapshot_times: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * 0.25;
        if t >= run.t_end - 1e-9 {
            break;
        }
        snapshot_times.push(t);
        k += 1;
    }
    snapshot_times.push(run.t_end);
    let cfg = OdeConfig {
        truncation,
        dt: run.dt,
        t_end: run.t_end,
        snapshot_times,
    };
    let traj = integrate(&p0, &cfg).map_err(Failure::from_kinex)?;
    let final_p = traj.final_state().expect("nonempty trajectory");
    let equilibrium = poisson_pmf(run.lambda, truncation).map_err(Failure::from_kinex)?;
    let w2 = wasserstein(final_p, &equilibrium, Order::Two).map_err(Failure::from_kinex)?;

    let mut art = Artifacts::new(out);
    art.write_csv("trajectory.csv", "t,n,p_n", &trajectory_rows(&traj))?;
    #[derive(Serialize)]
    struct Summary {
        lambda: f64,
        t_end: f64,
        truncation: usize,
        w2_to_equilibrium: f64,
        final_defect: f64,
    }
    art.write_json(
        "summary.json",
        &Summary {
            lambda: run.lambda,
            t_end: run.t_end,
            truncation,
            w2_to_equilibrium: w2,
            final_defect: final_p.trunc_defect(),
        },
    )?;
    art.finish("reproduce-fig4", run, None)
}

pub fn exec_fig5(run: &Fig5Run, out: &Path, force: bool) -> Result<(), Failure> {
    prepare_out(out, force)?;
    let p0 = run.initial().map_err(Failure::from_kinex)?;
    let mu = p0.mean();
    let mut snapshot_times = Vec::new();
    let mut k = 0usize;
    loop {
        let t = run.window_start + k as f64 * run.snap_step;
        if t > run.t_end + 1e-9 {
            break;
        }
        snapshot_times.push(t.min(run.t_end));
        k += 1;
    }
    let cfg = OdeConfig {
        truncation: run.truncation,
        dt: run.dt,
        t_end: run.t_end,
        snapshot_times: snapshot_times.clone(),
    };
    let traj = integrate(&p0, &cfg).map_err(Failure::from_kinex)?;
    let equilibrium = poisson_pmf(mu, run.truncation).map_err(Failure::from_kinex)?;
    let mut w1s = Vec::new();
    let mut w2s = Vec::new();
    for p in traj.states() {
        w1s.push(wasserstein(p, &equilibrium, Order::One).map_err(Failure::from_kinex)?);
        w2s.push(wasserstein(p, &equilibrium, Order::Two).map_err(Failure::from_kinex)?);
    }
    let trace_rows = |vals: &[f64]| -> Vec<String> {
        snapshot_times
            .iter()
            .zip(vals)
            .map(|(t, v)| format!("{},{}", fmt_f64(*t), fmt_f64(*v)))
            .collect()
    };
    let w1_series =
        TraceSeries::new(snapshot_times.clone(), w1s.clone(), "w1").map_err(Failure::from_kinex)?;
    let w2_series =
        TraceSeries::new(snapshot_times.clone(), w2s.clone(), "w2").map_err(Failure::from_kinex)?;
    let window = (run.window_start, run.t_end);
    let w1_fit = fit_decay(&w1_series, window).map_err(Failure::from_kinex)?;
    let w2_fit = fit_decay(&w2_series, window).map_err(Failure::from_kinex)?;

    let mut art = Artifacts::new(out);
    art.write_csv("w1_trace.csv", "t,value", &trace_rows(&w1s))?;
    art.write_csv("w2_trace.csv", "t,value", &trace_rows(&w2s))?;
    #[derive(Serialize)]
    struct FitReport {
        initial_mean: f64,
        window_start: f64,
        window_end: f64,
        w1_fit: DecayFit,
        w2_fit: DecayFit,
    }
    art.write_json(
        "decay_fit.json",
        &FitReport {
            initial_mean: mu,
            window_start: run.window_start,
            window_end: run.t_end,
            w1_fit,
            w2_fit,
        },
    )?;
    art.finish("reproduce-fig5", run, None)
}
