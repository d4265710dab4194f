//! Configuration, training, evaluation, sweeps and the V2X diagnostics run.
//!
//! Outputs are deterministic functions of the configuration: rerunning a
//! config reproduces every CSV and checkpoint byte for byte.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

pub use config::{
    default_rho, AdamSection, DiagnosticsSection, EvaluateSection, PgSection, SimConfig, SweepSection, TrainSection,
};

use crate::diagnostics::{self, DiagnosticsReport};
use crate::env::{Scenario, V2xEnv};
use crate::federate::{build_trainer, Algo, PolicyOracle, PolicyState, RoundMetrics};
use crate::nn::{Checkpoint, Mlp};
use crate::pg::sample_trajectory;
use crate::rng::{stream, stream_with_index, Stream};
use crate::{Error, Result};

/// Version tag written into every metrics row.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Drop indices at or above this are reserved for evaluation.
pub const EVAL_DROP_OFFSET: u64 = 1 << 20;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

/// One row of the per-round metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub round: usize,
    pub algo: Algo,
    pub scenario: u8,
    pub reward: f64,
    pub moving_avg: f64,
    pub grad_sum_norm: Option<f64>,
    pub v_inf_norm: Option<f64>,
    /// Only in diagnostics mode; the potential is the sampled return.
    pub lagrangian_estimate: Option<f64>,
    /// Delivery rate (scenario 1) or weighted rate in Mbit/s (scenario 2).
    pub metric: Option<f64>,
    pub config_hash: String,
    pub version: &'static str,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config_hash: String,
    pub rows: Vec<MetricsRow>,
    pub policy: PolicyState,
    pub layout: Vec<usize>,
    /// Paths of every checkpoint written, final one last.
    pub checkpoints: Vec<PathBuf>,
}

impl TrainReport {
    pub fn final_moving_average(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.moving_avg)
    }
}

/// The policy network for `cfg`'s observation and action spaces.
pub fn build_policy(cfg: &SimConfig) -> Result<Mlp> {
    Mlp::new(cfg.env.observation_len(), &cfg.pg.hidden, cfg.env.num_actions())
}

/// Initial parameters shared by every agent and the server.
pub fn initial_params(cfg: &SimConfig, policy: &Mlp) -> crate::ParamVector {
    policy.init_params(&mut stream(cfg.seed, Stream::PolicyInit))
}

fn moving_average(window: &mut std::collections::VecDeque<f64>, cap: usize, x: f64) -> f64 {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(x);
    window.iter().sum::<f64>() / window.len() as f64
}

/// Train `cfg.algo` for `cfg.train.episodes` rounds. With `out` set, writes
/// `metrics.csv` and checkpoints there.
pub fn train(cfg: &SimConfig, out: Option<&Path>) -> Result<TrainReport> {
    train_with_progress(cfg, out, |_| {})
}

pub fn train_with_progress(
    cfg: &SimConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<TrainReport> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let mut writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))?;
            Some(csv::Writer::from_path(dir.join(METRICS_FILE))?)
        }
        None => None,
    };

    let policy = build_policy(cfg)?;
    let layout = policy.sizes().to_vec();
    let theta0 = initial_params(cfg, &policy);
    let env = V2xEnv::new(cfg.scenario, &cfg.env, &cfg.channel, cfg.seed, 0)?;
    let agents = cfg.env.n_v2v;
    let mut oracle = PolicyOracle::new(env, policy, stream(cfg.seed, Stream::Actions), cfg.pg_options(), cfg.pg.batch)
        .with_metric(|e: &V2xEnv| Some(e.episode_metric()));
    let mut trainer = build_trainer(cfg.algo, agents, theta0, cfg.rho(), &cfg.pasm, cfg.adam_config());

    let diag = cfg.algo == Algo::Pasm && cfg.pasm.check_second_moment;
    let mut window = std::collections::VecDeque::with_capacity(cfg.train.moving_average_window);
    let mut rows = Vec::with_capacity(cfg.train.episodes);
    let mut checkpoints = Vec::new();
    for j in 0..cfg.train.episodes {
        let m: RoundMetrics = trainer.round(&mut oracle)?;
        let row = MetricsRow {
            round: m.round,
            algo: cfg.algo,
            scenario: cfg.scenario.number(),
            reward: m.reward,
            moving_avg: moving_average(&mut window, cfg.train.moving_average_window, m.reward),
            grad_sum_norm: m.grad_sum_norm,
            v_inf_norm: m.v_inf_norm,
            lagrangian_estimate: if diag { m.lagrangian_estimate } else { None },
            metric: m.metric,
            config_hash: hash.clone(),
            version: VERSION,
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
        }
        progress(&row);
        rows.push(row);
        let every = cfg.train.checkpoint_every;
        if let (Some(dir), true) = (out, every > 0 && (j + 1) % every == 0 && j + 1 < cfg.train.episodes) {
            if let Some(c) = trainer.checkpoint(&layout) {
                let path = dir.join(format!("checkpoint_{:06}.ckpt", j + 1));
                c.save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    if let Some(dir) = out {
        if let Some(c) = trainer.checkpoint(&layout) {
            let path = dir.join(CHECKPOINT_FILE);
            c.save(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(TrainReport { config_hash: hash, rows, policy: trainer.policy(), layout, checkpoints })
}

/// Load the evaluation policy of `cfg.algo` from `path`, checking that the
/// network layout matches the config.
pub fn load_policy(cfg: &SimConfig, path: &Path) -> Result<PolicyState> {
    if cfg.algo == Algo::Random {
        return Ok(PolicyState::Uniform);
    }
    let ckpt = Checkpoint::load(path)?;
    let policy = build_policy(cfg)?;
    if ckpt.layout != policy.sizes() {
        return Err(Error::Checkpoint(format!(
            "checkpoint layout {:?} does not match the configured network {:?}",
            ckpt.layout,
            policy.sizes()
        )));
    }
    let state = PolicyState::from_checkpoint(cfg.algo, &ckpt, cfg.env.n_v2v)?;
    let params = match &state {
        PolicyState::Shared(p) => std::slice::from_ref(p),
        PolicyState::PerAgent(ps) => ps.as_slice(),
        PolicyState::Uniform => &[],
    };
    if params.iter().any(|p| p.len() != policy.param_len()) {
        return Err(Error::Checkpoint("parameter vector length does not match the network".into()));
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub scenario: u8,
    pub algo: Algo,
    pub metric: &'static str,
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
    pub drops: usize,
    pub config_hash: String,
}

pub fn metric_name(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::One => "delivery_rate",
        Scenario::Two => "weighted_rate_mbps",
    }
}

/// Mean and standard error of the mean.
pub fn mean_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run the stochastic policy on freshly dropped vehicles, splitting
/// `cfg.evaluate.episodes` across `cfg.evaluate.drops` independent drops.
pub fn evaluate(cfg: &SimConfig, policy: &PolicyState) -> Result<EvalSummary> {
    cfg.validate()?;
    let net = build_policy(cfg)?;
    let (drops, total) = (cfg.evaluate.drops, cfg.evaluate.episodes);
    let mut per_episode = Vec::with_capacity(total);
    for d in 0..drops {
        let count = total / drops + usize::from(d < total % drops);
        let mut env = V2xEnv::new(cfg.scenario, &cfg.env, &cfg.channel, cfg.seed, EVAL_DROP_OFFSET + d as u64)?;
        let mut rng = stream_with_index(cfg.seed, Stream::Evaluation, d as u64);
        for _ in 0..count {
            sample_trajectory(&mut env, &net, policy.behaviour(), &mut rng)?;
            per_episode.push(env.episode_metric());
        }
    }
    let (mean, std_err) = mean_std_err(&per_episode);
    Ok(EvalSummary {
        scenario: cfg.scenario.number(),
        algo: cfg.algo,
        metric: metric_name(cfg.scenario),
        mean,
        std_err,
        episodes: total,
        drops,
        config_hash: cfg.hash()?,
    })
}

/// Apply `f` to every item on up to `available_parallelism` threads,
/// returning results in input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("result slot poisoned")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("result slot poisoned").into_iter().map(|r| r.expect("every item mapped")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scenario: u8,
    pub algo: Algo,
    pub n_v2i: usize,
    pub n_v2v: usize,
    pub payload_bytes: f64,
    pub seeds: usize,
    pub train_moving_avg_mean: Option<f64>,
    pub metric: &'static str,
    pub eval_mean: f64,
    /// Across seeds when there are several, within the run otherwise.
    pub eval_std_err: f64,
    pub config_hash: String,
}

/// Expand the sweep axes of `cfg` into one config per combination.
pub fn sweep_configs(cfg: &SimConfig) -> Vec<SimConfig> {
    let payloads =
        if cfg.sweep.payload_bytes.is_empty() { vec![cfg.env.payload_bytes] } else { cfg.sweep.payload_bytes.clone() };
    let links = if cfg.sweep.links.is_empty() { vec![[cfg.env.n_v2i, cfg.env.n_v2v]] } else { cfg.sweep.links.clone() };
    let algos = if cfg.sweep.algos.is_empty() { vec![cfg.algo] } else { cfg.sweep.algos.clone() };
    let mut out = Vec::new();
    for &algo in &algos {
        for &[n, k] in &links {
            for &p in &payloads {
                let mut c = cfg.clone();
                c.algo = algo;
                c.env.n_v2i = n;
                c.env.n_v2v = k;
                c.env.payload_bytes = p;
                c.sweep = SweepSection::default();
                out.push(c);
            }
        }
    }
    out
}

fn run_dir(out: &Path, cfg: &SimConfig) -> PathBuf {
    out.join(format!(
        "{}_s{}_n{}k{}_p{}_seed{}",
        cfg.algo, cfg.scenario, cfg.env.n_v2i, cfg.env.n_v2v, cfg.env.payload_bytes, cfg.seed
    ))
}

/// Train (unless random) and evaluate one configuration.
pub fn train_and_evaluate(cfg: &SimConfig, out: Option<&Path>) -> Result<(Option<TrainReport>, EvalSummary)> {
    if cfg.algo == Algo::Random {
        return Ok((None, evaluate(cfg, &PolicyState::Uniform)?));
    }
    let report = train(cfg, out)?;
    let eval = evaluate(cfg, &report.policy)?;
    Ok((Some(report), eval))
}

/// Run every sweep combination for every seed and summarize one row per
/// combination. Writes `summary.csv` (and per-run outputs) under `out`.
pub fn sweep(cfg: &SimConfig, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let combos = sweep_configs(cfg);
    let seeds = cfg.sweep.seeds;
    let runs: Vec<SimConfig> = combos
        .iter()
        .flat_map(|c| (0..seeds as u64).map(move |s| SimConfig { seed: c.seed + s, ..c.clone() }))
        .collect();
    let results = parallel_map(&runs, |c| train_and_evaluate(c, out.map(|o| run_dir(o, c)).as_deref()));
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(combos.len());
    for (c, chunk) in combos.iter().zip(results.chunks(seeds)) {
        let means: Vec<f64> = chunk.iter().map(|(_, e)| e.mean).collect();
        let (eval_mean, across) = mean_std_err(&means);
        let train_ma: Vec<f64> =
            chunk.iter().filter_map(|(t, _)| t.as_ref().map(TrainReport::final_moving_average)).collect();
        rows.push(SweepRow {
            scenario: c.scenario.number(),
            algo: c.algo,
            n_v2i: c.env.n_v2i,
            n_v2v: c.env.n_v2v,
            payload_bytes: c.env.payload_bytes,
            seeds,
            train_moving_avg_mean: (!train_ma.is_empty()).then(|| mean_std_err(&train_ma).0),
            metric: metric_name(c.scenario),
            eval_mean,
            eval_std_err: if seeds > 1 { across } else { chunk[0].1.std_err },
            config_hash: c.hash()?,
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Second-moment check on a clipped V2X PASM run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct V2xSecondMoment {
    pub episodes: usize,
    pub epsilon: f64,
    pub clip: f64,
    pub bound: f64,
    pub max_v_inf_norm: f64,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Monte Carlo estimate from sampled returns; not asserted.
    pub final_lagrangian_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseReport {
    pub synthetic: DiagnosticsReport,
    pub v2x: V2xSecondMoment,
    pub pass: bool,
    pub config_hash: String,
    pub version: &'static str,
}

/// The synthetic suite plus a short clipped V2X PASM run with the
/// second-moment bound checked every round.
pub fn diagnose(cfg: &SimConfig, out: Option<&Path>) -> Result<DiagnoseReport> {
    cfg.validate()?;
    let synthetic = diagnostics::run_all(&cfg.diagnostics.synthetic)?;

    let mut v2x_cfg = cfg.clone();
    v2x_cfg.algo = Algo::Pasm;
    v2x_cfg.pasm.check_second_moment = true;
    v2x_cfg.train.episodes = cfg.diagnostics.v2x_episodes.max(1);
    let bound = v2x_cfg.pasm.second_moment_bound();
    let mut v2x = V2xSecondMoment {
        episodes: v2x_cfg.train.episodes,
        epsilon: v2x_cfg.pasm.epsilon,
        clip: v2x_cfg.pg_options().clip.unwrap_or(f64::INFINITY),
        bound,
        max_v_inf_norm: 0.0,
        violations: 0,
        first_violation: None,
        final_lagrangian_estimate: None,
    };
    match train(&v2x_cfg, None) {
        Ok(r) => {
            v2x.max_v_inf_norm = r.rows.iter().filter_map(|row| row.v_inf_norm).fold(0.0, f64::max);
            v2x.final_lagrangian_estimate = r.rows.last().and_then(|row| row.lagrangian_estimate);
        }
        Err(Error::SecondMomentBound { round, value, .. }) => {
            v2x.violations = 1;
            v2x.first_violation = Some(round);
            v2x.max_v_inf_norm = value;
        }
        Err(e) => return Err(e),
    }
    let report = DiagnoseReport {
        pass: synthetic.pass && v2x.violations == 0,
        synthetic,
        v2x,
        config_hash: cfg.hash()?,
        version: VERSION,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("diagnostics.json"))?;
        f.write_all(serde_json::to_string_pretty(&report)?.as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algo: Algo, episodes: usize) -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.algo = algo;
        cfg.seed = 3;
        cfg.pg.hidden = vec![16, 8];
        cfg.train.episodes = episodes;
        cfg.train.moving_average_window = 4;
        cfg.evaluate = EvaluateSection { drops: 2, episodes: 6 };
        cfg
    }

    #[test]
    fn moving_average_window() {
        let mut w = std::collections::VecDeque::new();
        let xs: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| moving_average(&mut w, 2, x)).collect();
        assert_eq!(xs, [1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_std_err(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std_err(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let xs: Vec<u64> = (0..37).collect();
        assert_eq!(parallel_map(&xs, |x| x * x), xs.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(parallel_map(&[] as &[u8], |_| 0).is_empty());
    }

    #[test]
    fn train_rows_and_policy() {
        let r = train(&small(Algo::Pasm, 5), None).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert!(r.rows.iter().all(|row| row.v_inf_norm.is_some() && row.lagrangian_estimate.is_none()));
        assert!(matches!(r.policy, PolicyState::Shared(_)));
        let ipg = train(&small(Algo::Ipg, 2), None).unwrap();
        assert!(matches!(ipg.policy, PolicyState::PerAgent(ref ps) if ps.len() == 4));
    }

    #[test]
    fn silent_policy_starves() {
        let mut cfg = small(Algo::Random, 1);
        cfg.env.power_levels_dbm = vec![-100.0];
        let e = evaluate(&cfg, &PolicyState::Uniform).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn sweep_cardinality() {
        let mut cfg = small(Algo::Random, 1);
        cfg.sweep.payload_bytes = vec![2120.0, 3180.0, 4240.0];
        assert_eq!(sweep_configs(&cfg).len(), 3);
        cfg.sweep.links = vec![[4, 4], [6, 12]];
        cfg.sweep.algos = vec![Algo::Random, Algo::Pasm];
        assert_eq!(sweep_configs(&cfg).len(), 12);
    }
}
