//! Trajectory sampling and the REINFORCE estimator.
//!
//! Sign convention: [`reinforce_gradient`] returns `g = -grad phi`, the
//! gradient of the loss, which is what the federated optimizers consume.

mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use tabular::{enumerate_exact_pg, enumerate_own_return_pg, ExactPg, RewardModel, TabularMdp, TabularSoftmax};

use crate::env::MultiAgentEnv;
use crate::nn::{log_softmax_in_place, Mlp, ParamVector};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Default cap on enumerated trajectories.
pub const ENUMERATION_BUDGET: u128 = 10_000;

/// A parametric policy over discrete actions.
pub trait Policy {
    fn num_actions(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn param_len(&self) -> usize;
    /// Log-probabilities for `batch` observations stored row-major in `obs`.
    fn log_probs_batch(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<Vec<f64>>;
    /// `sum_i weights[i] * grad log pi(actions[i] | obs_i)`.
    fn score_sum(&self, params: &ParamVector, obs: &[f64], actions: &[usize], weights: &[f64]) -> Result<ParamVector>;
}

impl Policy for Mlp {
    fn num_actions(&self) -> usize {
        self.output_len()
    }

    fn observation_len(&self) -> usize {
        self.input_len()
    }

    fn param_len(&self) -> usize {
        Mlp::param_len(self)
    }

    fn log_probs_batch(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Mlp::log_probs_batch(self, params, obs, batch)
    }

    fn score_sum(&self, params: &ParamVector, obs: &[f64], actions: &[usize], weights: &[f64]) -> Result<ParamVector> {
        Mlp::score_sum(self, params, obs, actions, weights)
    }
}

/// Which parameters drive each agent during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Behaviour<'a> {
    /// Every agent acts with the same parameters (all `theta_k = theta_c`).
    Shared(&'a ParamVector),
    /// Agent `k` acts with `params[k]`.
    PerAgent(&'a [ParamVector]),
    /// Uniform random actions, no parameters.
    Uniform,
}

/// One episode seen by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observation_len: usize,
    /// Per agent, observations flattened `slot x observation_len`.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub log_probs: Vec<Vec<f64>>,
    /// Common reward per slot.
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted return, the sum of recorded rewards.
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Inverse-CDF draw from log-probabilities.
pub fn sample_from_log_probs(log_probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return a;
        }
    }
    // rounding left a sliver above the cumulative sum: take the last likely action
    log_probs.iter().rposition(|lp| lp.exp() > 0.0).unwrap_or(log_probs.len() - 1)
}

/// Reset `env` and roll out one episode; every agent samples from its own
/// policy each slot.
pub fn sample_trajectory<E, P>(env: &mut E, policy: &P, behaviour: Behaviour, rng: &mut RngStream) -> Result<Trajectory>
where
    E: MultiAgentEnv + ?Sized,
    P: Policy + ?Sized,
{
    let k = env.num_agents();
    let obs_len = env.observation_len();
    let num_actions = env.num_actions();
    if !matches!(behaviour, Behaviour::Uniform)
        && (policy.observation_len() != obs_len || policy.num_actions() != num_actions)
    {
        return Err(Error::dim(format!(
            "policy expects {}-long observations and {} actions, env provides {obs_len} and {num_actions}",
            policy.observation_len(),
            policy.num_actions()
        )));
    }
    if let Behaviour::PerAgent(ps) = behaviour {
        if ps.len() != k {
            return Err(Error::dim(format!("{} parameter vectors for {k} agents", ps.len())));
        }
    }
    env.reset()?;
    let horizon = env.horizon();
    let mut traj = Trajectory {
        observation_len: obs_len,
        observations: vec![Vec::with_capacity(horizon * obs_len); k],
        actions: vec![Vec::with_capacity(horizon); k],
        log_probs: vec![Vec::with_capacity(horizon); k],
        rewards: Vec::with_capacity(horizon),
    };
    let mut joint_obs = Vec::with_capacity(k * obs_len);
    let mut buf = Vec::with_capacity(obs_len);
    let uniform_lp = -(num_actions as f64).ln();
    let mut joint = vec![0; k];
    loop {
        joint_obs.clear();
        for agent in 0..k {
            env.observe(agent, &mut buf);
            joint_obs.extend_from_slice(&buf);
            traj.observations[agent].extend_from_slice(&buf);
        }
        let lps: Vec<f64> = match behaviour {
            Behaviour::Shared(p) => policy.log_probs_batch(p, &joint_obs, k)?,
            Behaviour::PerAgent(ps) => {
                let mut all = Vec::with_capacity(k * num_actions);
                for (agent, p) in ps.iter().enumerate() {
                    all.extend(policy.log_probs_batch(p, &joint_obs[agent * obs_len..(agent + 1) * obs_len], 1)?);
                }
                all
            }
            Behaviour::Uniform => vec![uniform_lp; k * num_actions],
        };
        for agent in 0..k {
            let row = &lps[agent * num_actions..(agent + 1) * num_actions];
            let a = match behaviour {
                Behaviour::Uniform => rng.gen_range(0..num_actions),
                _ => sample_from_log_probs(row, rng),
            };
            joint[agent] = a;
            traj.actions[agent].push(a);
            traj.log_probs[agent].push(row[a]);
        }
        let (reward, done) = env.step(&joint)?;
        traj.rewards.push(reward);
        if done {
            return Ok(traj);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Baseline {
    /// Plain REINFORCE.
    #[default]
    None,
    /// Subtract the mean return of the batch.
    BatchMean,
    /// Subtract a fixed value.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PgOptions {
    pub baseline: Baseline,
    /// Rescale `g` so that `||g||_inf <= c`.
    pub clip: Option<f64>,
}

/// `g <- g * min(1, c / ||g||_inf)`
pub fn clip_inf(g: &mut ParamVector, c: f64) {
    let n = g.norm_inf();
    if n > c {
        g.scale(c / n);
    }
}

/// REINFORCE estimate for agent `k`:
/// `g_k = -(1/B) sum_b (R(tau_b) - baseline) sum_t grad log pi_k(a_t | z_t)`.
pub fn reinforce_gradient<P: Policy + ?Sized>(
    policy: &P,
    batch: &[Trajectory],
    params: &ParamVector,
    k: usize,
    options: &PgOptions,
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::invalid("REINFORCE needs at least one trajectory"));
    }
    let returns: Vec<f64> = batch.iter().map(Trajectory::ret).collect();
    let b = match options.baseline {
        Baseline::None => 0.0,
        Baseline::BatchMean => returns.iter().sum::<f64>() / returns.len() as f64,
        Baseline::Constant(c) => c,
    };
    let mut obs = Vec::new();
    let mut actions = Vec::new();
    let mut weights = Vec::new();
    for (traj, r) in batch.iter().zip(&returns) {
        if k >= traj.num_agents() {
            return Err(Error::invalid(format!("agent {k} not present in trajectory")));
        }
        obs.extend_from_slice(&traj.observations[k]);
        actions.extend_from_slice(&traj.actions[k]);
        weights.extend(std::iter::repeat_n(r - b, traj.actions[k].len()));
    }
    let mut g = policy.score_sum(params, &obs, &actions, &weights)?;
    g.scale(-1.0 / batch.len() as f64);
    if let Some(c) = options.clip {
        clip_inf(&mut g, c);
    }
    Ok(g)
}

/// Log-softmax of one row of tabular preferences.
pub(crate) fn row_log_softmax(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    log_softmax_in_place(&mut v);
    v
}
