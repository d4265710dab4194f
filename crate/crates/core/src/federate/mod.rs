//! Federated optimizers: PASM, FedAvg (FRLPG), independent PG and the
//! random baseline, all driven one round (= one episode) at a time.

mod ops;
mod oracle;
mod protocol;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ops::{aggregate, pasm_dual_update, pasm_local_update, pasm_second_moment, pasm_upload};
pub use oracle::{GradientOracle, PolicyOracle, RoundSample, SyntheticOracle};
pub use protocol::{AgentUpload, Broadcast, PasmAgent, PasmConfig, PasmServer};

use crate::nn::{AdamConfig, AdamState, Checkpoint, ParamVector};
use crate::pg::Behaviour;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Pasm,
    Frlpg,
    Ipg,
    Random,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Pasm, Algo::Frlpg, Algo::Ipg, Algo::Random];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Pasm => "pasm",
            Algo::Frlpg => "frlpg",
            Algo::Ipg => "ipg",
            Algo::Random => "random",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm {s:?}; expected pasm, frlpg, ipg or random")))
    }
}

/// Per-round bookkeeping reported by every trainer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundMetrics {
    pub round: usize,
    /// Return of the episode sampled this round.
    pub reward: f64,
    /// `||sum_k g_k||_2`; absent for the random policy.
    pub grad_sum_norm: Option<f64>,
    pub v_inf_norm: Option<f64>,
    /// Augmented Lagrangian with the sampled return standing in for the potential.
    pub lagrangian_estimate: Option<f64>,
    /// Task metric of the sampled episode (e.g. delivery rate).
    pub metric: Option<f64>,
}

/// Parameters that drive the agents at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    Shared(ParamVector),
    PerAgent(Vec<ParamVector>),
    Uniform,
}

impl PolicyState {
    pub fn behaviour(&self) -> Behaviour<'_> {
        match self {
            PolicyState::Shared(p) => Behaviour::Shared(p),
            PolicyState::PerAgent(ps) => Behaviour::PerAgent(ps),
            PolicyState::Uniform => Behaviour::Uniform,
        }
    }

    /// Rebuild the evaluation policy of `algo` from a checkpoint.
    pub fn from_checkpoint(algo: Algo, ckpt: &Checkpoint, agents: usize) -> Result<Self> {
        let get = |name: &str| {
            ckpt.get(name).cloned().ok_or_else(|| Error::Checkpoint(format!("checkpoint has no tensor {name:?}")))
        };
        match algo {
            Algo::Pasm | Algo::Frlpg => Ok(PolicyState::Shared(get("theta_c")?)),
            Algo::Ipg => {
                Ok(PolicyState::PerAgent((0..agents).map(|k| get(&format!("theta_{k}"))).collect::<Result<_>>()?))
            }
            Algo::Random => Ok(PolicyState::Uniform),
        }
    }
}

pub trait Trainer {
    fn algo(&self) -> Algo;
    /// Run one federated round against `oracle`.
    fn round(&mut self, oracle: &mut dyn GradientOracle) -> Result<RoundMetrics>;
    fn policy(&self) -> PolicyState;
    /// Snapshot of the optimizer state; `None` when there is nothing to save.
    fn checkpoint(&self, layout: &[usize]) -> Option<Checkpoint>;
}

fn grad_sum_norm(grads: &[ParamVector]) -> Option<f64> {
    let first = grads.first()?;
    let mut sum = ParamVector::zeros(first.len());
    for g in grads {
        sum.axpy(1.0, g);
    }
    Some(sum.norm2())
}

fn check_agents(sample: &RoundSample, agents: usize) -> Result<()> {
    if sample.grads.len() != agents {
        return Err(Error::dim(format!("oracle returned {} gradients for {agents} agents", sample.grads.len())));
    }
    Ok(())
}

/// Policy-gradient inexact ADMM with a second-moment adaptive upload.
#[derive(Debug, Clone)]
pub struct PasmTrainer {
    pub server: PasmServer,
    pub agents: Vec<PasmAgent>,
}

impl PasmTrainer {
    pub fn new(agents: usize, theta0: ParamVector, rho: f64, config: PasmConfig) -> Self {
        let len = theta0.len();
        PasmTrainer {
            agents: (0..agents).map(|i| PasmAgent::new(i, len, config.r_k)).collect(),
            server: PasmServer::new(theta0, rho, config),
        }
    }

    /// Augmented Lagrangian at the agents' current state against `theta_c`:
    /// `-phi + sum_k [lambda_k . (theta_k - theta_c) + rho/2 ||theta_k - theta_c||^2]`.
    pub fn lagrangian(&self, phi: f64, theta_c: &ParamVector) -> f64 {
        let rho = self.server.rho;
        -phi + self
            .agents
            .iter()
            .map(|a| {
                let d = a.theta.sub(theta_c);
                a.lambda.dot(&d) + 0.5 * rho * d.dot(&d)
            })
            .sum::<f64>()
    }
}

impl Trainer for PasmTrainer {
    fn algo(&self) -> Algo {
        Algo::Pasm
    }

    fn round(&mut self, oracle: &mut dyn GradientOracle) -> Result<RoundMetrics> {
        let round = self.server.round;
        let msg = self.server.broadcast();
        for a in &mut self.agents {
            a.receive(&msg);
        }
        let sample = oracle.sample(Behaviour::Shared(&msg.theta_c))?;
        check_agents(&sample, self.agents.len())?;
        let rho = self.server.rho;
        let uploads = self
            .agents
            .iter_mut()
            .zip(&sample.grads)
            .map(|(a, g)| a.local_step(&msg, g, rho))
            .collect::<Result<Vec<_>>>()?;
        let lagrangian = self.lagrangian(sample.ret, &msg.theta_c);
        self.server.aggregate(&uploads)?;
        Ok(RoundMetrics {
            round,
            reward: sample.ret,
            grad_sum_norm: grad_sum_norm(&sample.grads),
            v_inf_norm: Some(self.server.v.norm_inf()),
            lagrangian_estimate: Some(lagrangian),
            metric: sample.metric,
        })
    }

    fn policy(&self) -> PolicyState {
        PolicyState::Shared(self.server.theta_c.clone())
    }

    fn checkpoint(&self, layout: &[usize]) -> Option<Checkpoint> {
        let mut c = Checkpoint::new(layout);
        c.push("theta_c", self.server.theta_c.clone());
        c.push("v_c", self.server.v.clone());
        for a in &self.agents {
            c.push(format!("lambda_{}", a.id), a.lambda.clone());
        }
        Some(c)
    }
}

/// FedAvg with a local Adam step per agent (FRLPG).
#[derive(Debug, Clone)]
pub struct FedAvgTrainer {
    pub theta_c: ParamVector,
    pub adam: Vec<AdamState>,
    pub round: usize,
}

impl FedAvgTrainer {
    pub fn new(agents: usize, theta0: ParamVector, adam: AdamConfig) -> Self {
        FedAvgTrainer { adam: vec![AdamState::new(theta0.len(), adam); agents], theta_c: theta0, round: 0 }
    }
}

impl Trainer for FedAvgTrainer {
    fn algo(&self) -> Algo {
        Algo::Frlpg
    }

    fn round(&mut self, oracle: &mut dyn GradientOracle) -> Result<RoundMetrics> {
        let sample = oracle.sample(Behaviour::Shared(&self.theta_c))?;
        check_agents(&sample, self.adam.len())?;
        let thetas: Vec<ParamVector> = self
            .adam
            .iter_mut()
            .zip(&sample.grads)
            .map(|(adam, g)| {
                let mut t = self.theta_c.clone();
                t.axpy(1.0, &adam.step(g));
                t
            })
            .collect();
        self.theta_c = aggregate(&thetas)?;
        let round = self.round;
        self.round += 1;
        Ok(RoundMetrics {
            round,
            reward: sample.ret,
            grad_sum_norm: grad_sum_norm(&sample.grads),
            metric: sample.metric,
            ..RoundMetrics::default()
        })
    }

    fn policy(&self) -> PolicyState {
        PolicyState::Shared(self.theta_c.clone())
    }

    fn checkpoint(&self, layout: &[usize]) -> Option<Checkpoint> {
        let mut c = Checkpoint::new(layout);
        c.push("theta_c", self.theta_c.clone());
        Some(c)
    }
}

/// Every agent learns alone with Adam; nothing is exchanged.
#[derive(Debug, Clone)]
pub struct IndependentTrainer {
    pub thetas: Vec<ParamVector>,
    pub adam: Vec<AdamState>,
    pub round: usize,
}

impl IndependentTrainer {
    pub fn new(agents: usize, theta0: ParamVector, adam: AdamConfig) -> Self {
        IndependentTrainer {
            adam: vec![AdamState::new(theta0.len(), adam); agents],
            thetas: vec![theta0; agents],
            round: 0,
        }
    }
}

impl Trainer for IndependentTrainer {
    fn algo(&self) -> Algo {
        Algo::Ipg
    }

    fn round(&mut self, oracle: &mut dyn GradientOracle) -> Result<RoundMetrics> {
        let sample = oracle.sample(Behaviour::PerAgent(&self.thetas))?;
        check_agents(&sample, self.thetas.len())?;
        for ((t, adam), g) in self.thetas.iter_mut().zip(&mut self.adam).zip(&sample.grads) {
            t.axpy(1.0, &adam.step(g));
        }
        let round = self.round;
        self.round += 1;
        Ok(RoundMetrics {
            round,
            reward: sample.ret,
            grad_sum_norm: grad_sum_norm(&sample.grads),
            metric: sample.metric,
            ..RoundMetrics::default()
        })
    }

    fn policy(&self) -> PolicyState {
        PolicyState::PerAgent(self.thetas.clone())
    }

    fn checkpoint(&self, layout: &[usize]) -> Option<Checkpoint> {
        let mut c = Checkpoint::new(layout);
        for (k, t) in self.thetas.iter().enumerate() {
            c.push(format!("theta_{k}"), t.clone());
        }
        Some(c)
    }
}

/// Uniformly random sub-channel and power every slot; never learns.
#[derive(Debug, Clone, Default)]
pub struct RandomTrainer {
    pub round: usize,
}

impl Trainer for RandomTrainer {
    fn algo(&self) -> Algo {
        Algo::Random
    }

    fn round(&mut self, oracle: &mut dyn GradientOracle) -> Result<RoundMetrics> {
        let sample = oracle.sample(Behaviour::Uniform)?;
        let round = self.round;
        self.round += 1;
        Ok(RoundMetrics { round, reward: sample.ret, metric: sample.metric, ..RoundMetrics::default() })
    }

    fn policy(&self) -> PolicyState {
        PolicyState::Uniform
    }

    fn checkpoint(&self, _layout: &[usize]) -> Option<Checkpoint> {
        None
    }
}

/// Construct the trainer for `algo`.
pub fn build_trainer(
    algo: Algo,
    agents: usize,
    theta0: ParamVector,
    rho: f64,
    pasm: &PasmConfig,
    adam: AdamConfig,
) -> Box<dyn Trainer> {
    match algo {
        Algo::Pasm => Box::new(PasmTrainer::new(agents, theta0, rho, *pasm)),
        Algo::Frlpg => Box::new(FedAvgTrainer::new(agents, theta0, adam)),
        Algo::Ipg => Box::new(IndependentTrainer::new(agents, theta0, adam)),
        Algo::Random => Box::new(RandomTrainer::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> SyntheticOracle {
        SyntheticOracle::new(vec![ParamVector::from(vec![0.1, -0.2, 0.05]), ParamVector::from(vec![-0.15, 0.2, 0.0])])
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("admm".parse::<Algo>().is_err());
    }

    #[test]
    fn zero_gradients_leave_everyone_still() {
        let theta = ParamVector::from(vec![0.3, 0.3, 0.3]);
        let mut o = SyntheticOracle::new(vec![theta.clone(), theta.clone()]);
        for algo in [Algo::Pasm, Algo::Frlpg, Algo::Ipg] {
            let mut t = build_trainer(algo, 2, theta.clone(), 10.0, &PasmConfig::default(), AdamConfig::default());
            for _ in 0..5 {
                t.round(&mut o).unwrap();
            }
            match t.policy() {
                PolicyState::Shared(p) => assert!(p.sub(&theta).norm_inf() < 1e-15),
                PolicyState::PerAgent(ps) => assert!(ps.iter().all(|p| *p == theta)),
                PolicyState::Uniform => unreachable!(),
            }
        }
    }

    #[test]
    fn fedavg_with_identical_agents_is_one_adam_learner() {
        let target = ParamVector::from(vec![0.4, -0.1]);
        let mut o = SyntheticOracle::new(vec![target.clone(); 3]);
        let theta0 = ParamVector::zeros(2);
        let mut fed = FedAvgTrainer::new(3, theta0.clone(), AdamConfig::with_lr(1e-2));
        let mut single = AdamState::new(2, AdamConfig::with_lr(1e-2));
        let mut theta = theta0;
        for _ in 0..20 {
            fed.round(&mut o).unwrap();
            let g = theta.sub(&target);
            theta.axpy(1.0, &single.step(&g));
            for i in 0..2 {
                assert!((fed.theta_c[i] - theta[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn independent_agents_drift_apart() {
        let mut o = oracle();
        let mut t = IndependentTrainer::new(2, ParamVector::zeros(3), AdamConfig::with_lr(1e-2));
        for _ in 0..10 {
            t.round(&mut o).unwrap();
        }
        assert_ne!(t.thetas[0], t.thetas[1]);
    }

    #[test]
    fn pasm_metrics_and_checkpoint() {
        let mut o = oracle();
        let mut t = PasmTrainer::new(2, ParamVector::zeros(3), 10.0, PasmConfig::default());
        let m = t.round(&mut o).unwrap();
        assert_eq!(m.round, 0);
        assert!(m.v_inf_norm.unwrap() > 0.0);
        let c = t.checkpoint(&[3]).unwrap();
        let names: Vec<&str> = c.tensors.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["theta_c", "v_c", "lambda_0", "lambda_1"]);
        let p = PolicyState::from_checkpoint(Algo::Pasm, &c, 2).unwrap();
        assert_eq!(p, t.policy());
        assert!(PolicyState::from_checkpoint(Algo::Ipg, &c, 2).is_err());
        assert!(RandomTrainer::default().checkpoint(&[3]).is_none());
    }
}
