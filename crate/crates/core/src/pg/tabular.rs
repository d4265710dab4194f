//! Small tabular games with exact policy-gradient enumeration, used as
//! oracles for the REINFORCE estimator.

use rand::Rng;

use super::{row_log_softmax, Policy};
use crate::env::MultiAgentEnv;
use crate::nn::ParamVector;
use crate::rng::{stream, RngStream, Stream};
use crate::{Error, Result};

/// Softmax over a table of preferences `theta[s * A + a]`. The observation is
/// the one-hot encoding of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabularSoftmax {
    pub states: usize,
    pub actions: usize,
}

impl TabularSoftmax {
    pub fn new(states: usize, actions: usize) -> Self {
        TabularSoftmax { states, actions }
    }

    fn state_of(&self, obs: &[f64]) -> Result<usize> {
        obs.iter().position(|&v| v == 1.0).ok_or_else(|| Error::invalid("tabular observation is not one-hot"))
    }

    /// Action probabilities in state `s`.
    pub fn probs(&self, params: &ParamVector, s: usize) -> Vec<f64> {
        row_log_softmax(&params[s * self.actions..(s + 1) * self.actions]).into_iter().map(f64::exp).collect()
    }
}

impl Policy for TabularSoftmax {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn observation_len(&self) -> usize {
        self.states
    }

    fn param_len(&self) -> usize {
        self.states * self.actions
    }

    fn log_probs_batch(&self, params: &ParamVector, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        if obs.len() != batch * self.states || params.len() != self.param_len() {
            return Err(Error::dim("tabular policy input has the wrong shape"));
        }
        let mut out = Vec::with_capacity(batch * self.actions);
        for row in obs.chunks(self.states) {
            let s = self.state_of(row)?;
            out.extend(row_log_softmax(&params[s * self.actions..(s + 1) * self.actions]));
        }
        Ok(out)
    }

    fn score_sum(&self, params: &ParamVector, obs: &[f64], actions: &[usize], weights: &[f64]) -> Result<ParamVector> {
        if obs.len() != actions.len() * self.states || weights.len() != actions.len() {
            return Err(Error::dim("tabular score input has the wrong shape"));
        }
        let mut g = ParamVector::zeros(self.param_len());
        for ((row, &a), &w) in obs.chunks(self.states).zip(actions).zip(weights) {
            let s = self.state_of(row)?;
            let p = self.probs(params, s);
            for (j, pj) in p.iter().enumerate() {
                g[s * self.actions + j] += w * (if j == a { 1.0 } else { 0.0 } - pj);
            }
        }
        Ok(g)
    }
}

/// Reward tables indexed `s * J + j` with `J = A^M` joint actions.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    /// Identical interest: one reward shared by every agent.
    Common(Vec<f64>),
    /// Agent-specific rewards plus a potential used as the common signal.
    PerAgent { agents: Vec<Vec<f64>>, potential: Vec<f64> },
}

/// Finite-horizon multi-agent MDP with a small discrete state space.
/// Joint action index `j = sum_k a_k * A^k`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    pub agents: usize,
    pub horizon: usize,
    pub initial: Vec<f64>,
    /// `P(s' | s, j)` at `(s * J + j) * S + s'`.
    pub transition: Vec<f64>,
    pub rewards: RewardModel,
    state: usize,
    t: usize,
    rng: RngStream,
}

impl TabularMdp {
    pub fn new(
        states: usize,
        actions: usize,
        agents: usize,
        horizon: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
        rewards: RewardModel,
        seed: u64,
    ) -> Result<Self> {
        let joint = actions.pow(agents as u32);
        let ok_prob = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() < 1e-12 && v.iter().all(|&p| p >= 0.0);
        if states == 0 || actions == 0 || agents == 0 || horizon == 0 {
            return Err(Error::invalid("tabular MDP dimensions must be positive"));
        }
        if initial.len() != states || !ok_prob(&initial) {
            return Err(Error::invalid("initial distribution must be a probability vector over states"));
        }
        if transition.len() != states * joint * states || !transition.chunks(states).all(ok_prob) {
            return Err(Error::invalid("transition rows must be probability vectors"));
        }
        let table_ok = |t: &Vec<f64>| t.len() == states * joint;
        let rewards_ok = match &rewards {
            RewardModel::Common(t) => table_ok(t),
            RewardModel::PerAgent { agents: a, potential } => {
                a.len() == agents && a.iter().all(table_ok) && table_ok(potential)
            }
        };
        if !rewards_ok {
            return Err(Error::invalid("reward tables must have one entry per (state, joint action)"));
        }
        Ok(TabularMdp {
            states,
            actions,
            agents,
            horizon,
            initial,
            transition,
            rewards,
            state: 0,
            t: horizon,
            rng: stream(seed, Stream::Synthetic),
        })
    }

    /// Single-state, single-agent, one-step bandit.
    pub fn bandit(rewards: &[f64], seed: u64) -> Self {
        TabularMdp::new(
            1,
            rewards.len(),
            1,
            1,
            vec![1.0],
            vec![1.0; rewards.len()],
            RewardModel::Common(rewards.to_vec()),
            seed,
        )
        .expect("valid bandit")
    }

    /// Two agents, two actions each, common payoff over the joint action.
    pub fn identical_interest_bandit(seed: u64) -> Self {
        TabularMdp::new(1, 2, 2, 1, vec![1.0], vec![1.0; 4], RewardModel::Common(vec![1.0, 0.0, 0.3, 2.0]), seed)
            .expect("valid bandit")
    }

    /// Two states, two actions, horizon two, one agent.
    pub fn two_state_example(seed: u64) -> Self {
        // P(s' = 1 | s, a)
        let up = [0.2, 0.7, 0.5, 0.9];
        let transition = up.iter().flat_map(|&p| [1.0 - p, p]).collect();
        TabularMdp::new(2, 2, 1, 2, vec![0.6, 0.4], transition, RewardModel::Common(vec![1.0, 0.0, 0.5, 2.0]), seed)
            .expect("valid MDP")
    }

    /// Two states, two agents with two actions each, horizon two, common reward.
    pub fn two_agent_two_state(seed: u64) -> Self {
        let up = [0.2, 0.6, 0.4, 0.9, 0.5, 0.1, 0.8, 0.3];
        let transition = up.iter().flat_map(|&p| [1.0 - p, p]).collect();
        let reward = vec![1.0, 0.0, 0.2, 1.5, 0.4, 2.0, -0.5, 0.7];
        TabularMdp::new(2, 2, 2, 2, vec![0.5, 0.5], transition, RewardModel::Common(reward), seed).expect("valid MDP")
    }

    /// Same dynamics with agent-specific rewards; `potential` is the common signal.
    pub fn with_agent_rewards(mut self, agents: Vec<Vec<f64>>, potential: Vec<f64>) -> Result<Self> {
        let rewards = RewardModel::PerAgent { agents, potential };
        let fresh = TabularMdp::new(
            self.states,
            self.actions,
            self.agents,
            self.horizon,
            self.initial.clone(),
            self.transition.clone(),
            rewards,
            0,
        )?;
        self.rewards = fresh.rewards;
        Ok(self)
    }

    pub fn joint_actions(&self) -> usize {
        self.actions.pow(self.agents as u32)
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions.iter().rev().fold(0, |j, &a| j * self.actions + a)
    }

    fn common_table(&self) -> &[f64] {
        match &self.rewards {
            RewardModel::Common(t) => t,
            RewardModel::PerAgent { potential, .. } => potential,
        }
    }

    fn draw(rng: &mut RngStream, probs: &[f64]) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

impl MultiAgentEnv for TabularMdp {
    fn num_agents(&self) -> usize {
        self.agents
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn observation_len(&self) -> usize {
        self.states
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self) -> Result<()> {
        self.state = TabularMdp::draw(&mut self.rng, &self.initial);
        self.t = 0;
        Ok(())
    }

    fn observe(&self, _agent: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.states).map(|s| if s == self.state { 1.0 } else { 0.0 }));
    }

    fn step(&mut self, actions: &[usize]) -> Result<(f64, bool)> {
        if self.t >= self.horizon {
            return Err(Error::EpisodeFinished { slot: self.t, slots: self.horizon });
        }
        if actions.len() != self.agents || actions.iter().any(|&a| a >= self.actions) {
            return Err(Error::invalid("joint action does not fit the MDP"));
        }
        let j = self.joint_index(actions);
        let reward = self.common_table()[self.state * self.joint_actions() + j];
        let row = (self.state * self.joint_actions() + j) * self.states;
        self.state = TabularMdp::draw(&mut self.rng, &self.transition[row..row + self.states]);
        self.t += 1;
        Ok((reward, self.t == self.horizon))
    }
}

/// Exact expected return(s) and their gradients with respect to each
/// agent's parameters (ascent direction, `+grad E[R]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPg {
    pub expected_return: Vec<f64>,
    /// `grads[k]` is the gradient for agent `k`'s parameters.
    pub grads: Vec<ParamVector>,
}

struct Walk<'a> {
    mdp: &'a TabularMdp,
    probs: Vec<Vec<Vec<f64>>>, // [agent][state] -> action probs
    tables: Vec<&'a [f64]>,
    /// `(table, agent)` pairs whose gradient is accumulated.
    targets: Vec<(usize, usize)>,
    value: Vec<f64>,
    grads: Vec<ParamVector>,
}

impl Walk<'_> {
    fn visit(&mut self, t: usize, s: usize, prob: f64, ret: &mut Vec<f64>, score: &mut Vec<ParamVector>) {
        let mdp = self.mdp;
        let (na, nj, ns) = (mdp.actions, mdp.joint_actions(), mdp.states);
        for j in 0..nj {
            let mut pj = prob;
            let mut acts = Vec::with_capacity(mdp.agents);
            let mut jj = j;
            for k in 0..mdp.agents {
                let a = jj % na;
                jj /= na;
                pj *= self.probs[k][s][a];
                acts.push(a);
            }
            if pj == 0.0 {
                continue;
            }
            for (k, &a) in acts.iter().enumerate() {
                for (b, pb) in self.probs[k][s].iter().enumerate() {
                    score[k][s * na + b] += if a == b { 1.0 } else { 0.0 } - pb;
                }
            }
            for (r, table) in self.tables.iter().enumerate() {
                ret[r] += table[s * nj + j];
            }
            if t + 1 == mdp.horizon {
                for (r, v) in self.value.iter_mut().enumerate() {
                    *v += pj * ret[r];
                }
                for (i, &(r, k)) in self.targets.iter().enumerate() {
                    self.grads[i].axpy(pj * ret[r], &score[k]);
                }
            } else {
                let row = (s * nj + j) * ns;
                for s2 in 0..ns {
                    let p2 = mdp.transition[row + s2];
                    if p2 > 0.0 {
                        self.visit(t + 1, s2, pj * p2, ret, score);
                    }
                }
            }
            for (r, table) in self.tables.iter().enumerate() {
                ret[r] -= table[s * nj + j];
            }
            for (k, &a) in acts.iter().enumerate() {
                for (b, pb) in self.probs[k][s].iter().enumerate() {
                    score[k][s * na + b] -= if a == b { 1.0 } else { 0.0 } - pb;
                }
            }
        }
    }
}

fn enumerate(
    mdp: &TabularMdp,
    params: &[ParamVector],
    budget: u128,
    tables: Vec<&[f64]>,
    targets: Vec<(usize, usize)>,
) -> Result<(Vec<f64>, Vec<ParamVector>)> {
    let policy = TabularSoftmax::new(mdp.states, mdp.actions);
    if params.len() != mdp.agents || params.iter().any(|p| p.len() != policy.param_len()) {
        return Err(Error::dim(format!(
            "need {} tabular parameter vectors of length {}",
            mdp.agents,
            policy.param_len()
        )));
    }
    let per_step = (mdp.states as u128).saturating_mul((mdp.joint_actions()) as u128);
    let needed = (0..mdp.horizon).fold(1u128, |acc, _| acc.saturating_mul(per_step));
    if needed > budget {
        return Err(Error::EnumerationBudget { needed, budget });
    }
    let probs = params.iter().map(|p| (0..mdp.states).map(|s| policy.probs(p, s)).collect()).collect();
    let mut walk = Walk {
        mdp,
        probs,
        value: vec![0.0; tables.len()],
        grads: vec![ParamVector::zeros(policy.param_len()); targets.len()],
        tables,
        targets,
    };
    let mut ret = vec![0.0; walk.tables.len()];
    let mut score = vec![ParamVector::zeros(policy.param_len()); mdp.agents];
    for s0 in 0..mdp.states {
        if mdp.initial[s0] > 0.0 {
            walk.visit(0, s0, mdp.initial[s0], &mut ret, &mut score);
        }
    }
    Ok((walk.value, walk.grads))
}

/// `sum_tau Pr(tau) R(tau) sum_t grad log pi(a_t | s_t)` for every agent,
/// with `R` the common reward (the potential for agent-specific games).
pub fn enumerate_exact_pg(mdp: &TabularMdp, params: &[ParamVector], budget: u128) -> Result<ExactPg> {
    let targets = (0..mdp.agents).map(|k| (0, k)).collect();
    let (value, grads) = enumerate(mdp, params, budget, vec![mdp.common_table()], targets)?;
    Ok(ExactPg { expected_return: value, grads })
}

/// Gradient of each agent's own expected return with respect to its own
/// parameters. Equals [`enumerate_exact_pg`] under a common reward.
pub fn enumerate_own_return_pg(mdp: &TabularMdp, params: &[ParamVector], budget: u128) -> Result<ExactPg> {
    let tables: Vec<&[f64]> = match &mdp.rewards {
        RewardModel::Common(t) => vec![t.as_slice(); mdp.agents],
        RewardModel::PerAgent { agents, .. } => agents.iter().map(Vec::as_slice).collect(),
    };
    let targets = (0..mdp.agents).map(|k| (k, k)).collect();
    let (value, grads) = enumerate(mdp, params, budget, tables, targets)?;
    Ok(ExactPg { expected_return: value, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pg::ENUMERATION_BUDGET;

    #[test]
    fn bandit_closed_form() {
        let mdp = TabularMdp::bandit(&[1.0, 0.0], 0);
        let exact = enumerate_exact_pg(&mdp, &[ParamVector::zeros(2)], ENUMERATION_BUDGET).unwrap();
        assert!((exact.grads[0][0] - 0.25).abs() < 1e-15);
        assert!((exact.grads[0][1] + 0.25).abs() < 1e-15);
        assert!((exact.expected_return[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_reward_zero_gradient() {
        let mut mdp = TabularMdp::two_state_example(0);
        mdp.rewards = RewardModel::Common(vec![3.0; 4]);
        let p = ParamVector::from(vec![0.4, -0.3, 1.2, 0.1]);
        let exact = enumerate_exact_pg(&mdp, &[p], ENUMERATION_BUDGET).unwrap();
        assert!(exact.grads[0].norm_inf() < 1e-14);
        assert!((exact.expected_return[0] - 6.0).abs() < 1e-12);
    }

    /// Closed-form expectation of the return, differentiated numerically.
    fn expected_return(mdp: &TabularMdp, p: &[ParamVector]) -> f64 {
        enumerate_exact_pg(mdp, p, ENUMERATION_BUDGET).unwrap().expected_return[0]
    }

    #[test]
    fn enumeration_matches_finite_differences() {
        let mdp = TabularMdp::two_agent_two_state(0);
        let p = vec![ParamVector::from(vec![0.3, -0.1, 0.2, 0.5]), ParamVector::from(vec![-0.4, 0.1, 0.0, 0.7])];
        let exact = enumerate_exact_pg(&mdp, &p, ENUMERATION_BUDGET).unwrap();
        for k in 0..2 {
            for i in 0..4 {
                let h = 1e-6;
                let mut plus = p.clone();
                plus[k][i] += h;
                let mut minus = p.clone();
                minus[k][i] -= h;
                let fd = (expected_return(&mdp, &plus) - expected_return(&mdp, &minus)) / (2.0 * h);
                assert!((fd - exact.grads[k][i]).abs() < 1e-8, "agent {k} coord {i}: {fd} vs {}", exact.grads[k][i]);
            }
        }
    }

    #[test]
    fn budget_enforced() {
        let mut mdp = TabularMdp::two_state_example(0);
        mdp.horizon = 20;
        let err = enumerate_exact_pg(&mdp, &[ParamVector::zeros(4)], ENUMERATION_BUDGET).unwrap_err();
        assert!(matches!(err, Error::EnumerationBudget { .. }));
    }

    #[test]
    fn identical_interest_gradients_agree() {
        let mdp = TabularMdp::identical_interest_bandit(0);
        let p = vec![ParamVector::from(vec![0.2, -0.3]), ParamVector::from(vec![0.5, 0.0])];
        let common = enumerate_exact_pg(&mdp, &p, ENUMERATION_BUDGET).unwrap();
        let own = enumerate_own_return_pg(&mdp, &p, ENUMERATION_BUDGET).unwrap();
        for k in 0..2 {
            assert!(common.grads[k].sub(&own.grads[k]).norm_inf() < 1e-15);
        }
    }

    #[test]
    fn mdp_validation() {
        assert!(TabularMdp::new(1, 2, 1, 1, vec![0.5], vec![1.0, 1.0], RewardModel::Common(vec![0.0; 2]), 0).is_err());
        assert!(TabularMdp::new(1, 2, 1, 1, vec![1.0], vec![1.0], RewardModel::Common(vec![0.0; 2]), 0).is_err());
        assert!(TabularMdp::new(1, 2, 1, 1, vec![1.0], vec![1.0, 1.0], RewardModel::Common(vec![0.0]), 0).is_err());
    }
}
