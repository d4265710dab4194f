//! Gradient sources for the federated optimizers.

use crate::env::MultiAgentEnv;
use crate::nn::ParamVector;
use crate::pg::{clip_inf, reinforce_gradient, sample_trajectory, Behaviour, PgOptions, Policy, Trajectory};
use crate::rng::RngStream;
use crate::{Error, Result};

/// One round's worth of local gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSample {
    /// `g_k = -grad phi` per agent; empty under [`Behaviour::Uniform`].
    pub grads: Vec<ParamVector>,
    /// Episode return (mean over the batch), or the potential for exact oracles.
    pub ret: f64,
    /// Task metric of the sampled episodes (delivery rate, average rate), if any.
    pub metric: Option<f64>,
}

/// Produces each agent's local gradient at the parameters it acts with.
pub trait GradientOracle {
    fn num_agents(&self) -> usize;
    fn param_len(&self) -> usize;
    fn sample(&mut self, behaviour: Behaviour) -> Result<RoundSample>;
}

/// Exact gradients of the quadratic potential
/// `phi(Theta) = -sum_k 1/2 ||theta_k - c_k||^2`, so `g_k = theta_k - c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOracle {
    pub targets: Vec<ParamVector>,
    /// Clip `||g_k||_inf` at this value when set.
    pub clip: Option<f64>,
}

impl SyntheticOracle {
    pub fn new(targets: Vec<ParamVector>) -> Self {
        SyntheticOracle { targets, clip: None }
    }

    pub fn potential(&self, thetas: &[ParamVector]) -> f64 {
        -0.5 * thetas.iter().zip(&self.targets).map(|(t, c)| t.sub(c).norm2().powi(2)).sum::<f64>()
    }
}

impl GradientOracle for SyntheticOracle {
    fn num_agents(&self) -> usize {
        self.targets.len()
    }

    fn param_len(&self) -> usize {
        self.targets.first().map_or(0, |t| t.len())
    }

    fn sample(&mut self, behaviour: Behaviour) -> Result<RoundSample> {
        let k = self.targets.len();
        let thetas: Vec<ParamVector> = match behaviour {
            Behaviour::Shared(p) => vec![p.clone(); k],
            Behaviour::PerAgent(ps) if ps.len() == k => ps.to_vec(),
            Behaviour::PerAgent(ps) => {
                return Err(Error::dim(format!("{} parameter vectors for {k} agents", ps.len())))
            }
            Behaviour::Uniform => return Ok(RoundSample { grads: Vec::new(), ret: 0.0, metric: None }),
        };
        let mut grads = Vec::with_capacity(k);
        for (t, c) in thetas.iter().zip(&self.targets) {
            if t.len() != c.len() {
                return Err(Error::dim("parameter and target lengths differ"));
            }
            let mut g = t.sub(c);
            if let Some(clip) = self.clip {
                clip_inf(&mut g, clip);
            }
            grads.push(g);
        }
        Ok(RoundSample { grads, ret: self.potential(&thetas), metric: None })
    }
}

/// REINFORCE gradients from episodes sampled in a live environment; all
/// agents share each sampled joint trajectory.
pub struct PolicyOracle<E, P> {
    pub env: E,
    pub policy: P,
    pub rng: RngStream,
    pub options: PgOptions,
    /// Trajectories per round.
    pub batch: usize,
    metric: fn(&E) -> Option<f64>,
}

impl<E: MultiAgentEnv, P: Policy> PolicyOracle<E, P> {
    pub fn new(env: E, policy: P, rng: RngStream, options: PgOptions, batch: usize) -> Self {
        PolicyOracle { env, policy, rng, options, batch: batch.max(1), metric: |_| None }
    }

    /// Evaluate `metric` on the environment after each sampled episode.
    pub fn with_metric(mut self, metric: fn(&E) -> Option<f64>) -> Self {
        self.metric = metric;
        self
    }

    /// Roll out `self.batch` episodes under `behaviour`.
    pub fn rollouts(&mut self, behaviour: Behaviour) -> Result<(Vec<Trajectory>, Option<f64>)> {
        let mut batch = Vec::with_capacity(self.batch);
        let mut metric_sum = 0.0;
        let mut metric_seen = false;
        for _ in 0..self.batch {
            batch.push(sample_trajectory(&mut self.env, &self.policy, behaviour, &mut self.rng)?);
            if let Some(m) = (self.metric)(&self.env) {
                metric_sum += m;
                metric_seen = true;
            }
        }
        let metric = metric_seen.then(|| metric_sum / self.batch as f64);
        Ok((batch, metric))
    }
}

impl<E: MultiAgentEnv, P: Policy> GradientOracle for PolicyOracle<E, P> {
    fn num_agents(&self) -> usize {
        self.env.num_agents()
    }

    fn param_len(&self) -> usize {
        self.policy.param_len()
    }

    fn sample(&mut self, behaviour: Behaviour) -> Result<RoundSample> {
        let (batch, metric) = self.rollouts(behaviour)?;
        let ret = batch.iter().map(Trajectory::ret).sum::<f64>() / batch.len() as f64;
        let k = self.env.num_agents();
        let grads = match behaviour {
            Behaviour::Uniform => Vec::new(),
            Behaviour::Shared(p) => {
                (0..k).map(|a| reinforce_gradient(&self.policy, &batch, p, a, &self.options)).collect::<Result<_>>()?
            }
            Behaviour::PerAgent(ps) => (0..k)
                .map(|a| reinforce_gradient(&self.policy, &batch, &ps[a], a, &self.options))
                .collect::<Result<_>>()?,
        };
        Ok(RoundSample { grads, ret, metric })
    }
}
