//! Executable convergence checks: augmented Lagrangian descent, the
//! second-moment bound and equality of own-return and potential gradients.
//!
//! The synthetic problem is a quadratic potential game with exact gradients,
//! so these checks exercise the optimizer rather than the estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::federate::{PasmConfig, PasmTrainer, SyntheticOracle, Trainer};
use crate::nn::ParamVector;
use crate::pg::{enumerate_exact_pg, enumerate_own_return_pg, TabularMdp, ENUMERATION_BUDGET};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

/// Default per-step tolerance for the descent check.
pub const DESCENT_TOLERANCE: f64 = 1e-10;

/// `phi(Theta) = -sum_k 1/2 ||theta_k - c_k||^2`; gradient Lipschitz with `l = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPotential {
    pub targets: Vec<ParamVector>,
}

impl SyntheticPotential {
    pub const LIPSCHITZ: f64 = 1.0;

    pub fn new(targets: Vec<ParamVector>) -> Result<Self> {
        let first = targets.first().ok_or_else(|| Error::invalid("synthetic potential needs at least one agent"))?;
        if targets.iter().any(|t| t.len() != first.len()) {
            return Err(Error::dim("targets differ in length"));
        }
        Ok(SyntheticPotential { targets })
    }

    /// Targets drawn uniformly from `[-scale, scale]^dim`.
    pub fn random(agents: usize, dim: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Stream::Synthetic);
        let targets = (0..agents)
            .map(|_| ParamVector::from((0..dim).map(|_| rng.gen_range(-scale..=scale)).collect::<Vec<_>>()))
            .collect();
        Self::new(targets)
    }

    pub fn phi(&self, thetas: &[ParamVector]) -> f64 {
        -0.5 * thetas.iter().zip(&self.targets).map(|(t, c)| t.sub(c).dot(&t.sub(c))).sum::<f64>()
    }

    /// `-grad_{theta_k} phi = theta_k - c_k`.
    pub fn neg_grad(&self, k: usize, theta: &ParamVector) -> ParamVector {
        theta.sub(&self.targets[k])
    }

    /// Consensus stationary point, the mean of the targets.
    pub fn stationary_point(&self) -> ParamVector {
        let mut m = ParamVector::zeros(self.targets[0].len());
        for c in &self.targets {
            m.axpy(1.0 / self.targets.len() as f64, c);
        }
        m
    }

    pub fn oracle(&self) -> SyntheticOracle {
        SyntheticOracle::new(self.targets.clone())
    }
}

/// `-phi + sum_k [lambda_k . (theta_k - theta_c) + rho/2 ||theta_k - theta_c||^2]`.
pub fn augmented_lagrangian(
    thetas: &[ParamVector],
    lambdas: &[ParamVector],
    theta_c: &ParamVector,
    rho: f64,
    phi: f64,
) -> Result<f64> {
    if thetas.len() != lambdas.len() {
        return Err(Error::dim(format!("{} primal and {} dual vectors", thetas.len(), lambdas.len())));
    }
    let mut l = -phi;
    for (t, lam) in thetas.iter().zip(lambdas) {
        if t.len() != theta_c.len() || lam.len() != theta_c.len() {
            return Err(Error::dim("lagrangian operands differ in length"));
        }
        let d = t.sub(theta_c);
        l += lam.dot(&d) + 0.5 * rho * d.dot(&d);
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub agents: usize,
    pub dim: usize,
    pub rho: f64,
    pub r_k: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub rounds: usize,
    /// Targets are drawn from `[-target_scale, target_scale]`.
    pub target_scale: f64,
    pub grad_tolerance: f64,
    /// Clip `||g_k||_inf` at `1 - epsilon`.
    pub clip: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            agents: 3,
            dim: 5,
            rho: 10.0,
            r_k: 1.0,
            epsilon: 0.6,
            beta: 0.999,
            rounds: 10_000,
            target_scale: 0.2,
            grad_tolerance: 1e-6,
            clip: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Same problem with the scenario 1 optimizer settings.
    pub fn paper_hyperparameters() -> Self {
        SyntheticConfig { rho: 1000.0, epsilon: 0.01, ..SyntheticConfig::default() }
    }

    /// `rho >= 10 l` and `epsilon` in `(0.5, 1)`.
    pub fn conditions_met(&self) -> bool {
        self.rho >= 10.0 * SyntheticPotential::LIPSCHITZ && self.epsilon > 0.5 && self.epsilon < 1.0
    }

    pub fn pasm(&self) -> PasmConfig {
        PasmConfig {
            rho: Some(self.rho),
            epsilon: self.epsilon,
            beta: self.beta,
            r_k: self.r_k,
            check_second_moment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.dim == 0 || self.rounds == 0 {
            return Err(Error::config("diagnostics agents, dim and rounds must be positive"));
        }
        if !(self.target_scale >= 0.0 && self.grad_tolerance > 0.0) {
            return Err(Error::config("diagnostics target_scale must be >= 0 and grad_tolerance > 0"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::config("diagnostics rho must be positive"));
        }
        self.pasm().validate()
    }
}

/// Per-round trace of a synthetic run. Index 0 of `lagrangian` is the initial
/// state; entry `j + 1` is the state after round `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianReport {
    pub config: SyntheticConfig,
    pub lagrangian: Vec<f64>,
    /// `||sum_k g_k||_2` at the gradients used in each round.
    pub grad_sum_norm: Vec<f64>,
    pub v_inf_norm: Vec<f64>,
    /// `max_k ||theta_k^{j+1} - theta_k^j||_2`.
    pub delta_theta_k: Vec<f64>,
    pub delta_theta_c: Vec<f64>,
    /// Rounds where `||v_c||_inf >= (1 - epsilon)^2`.
    pub second_moment_violations: Vec<usize>,
    pub theta_c: ParamVector,
    pub stationary_point: ParamVector,
}

impl LagrangianReport {
    pub fn is_finite(&self) -> bool {
        [&self.lagrangian, &self.grad_sum_norm, &self.v_inf_norm, &self.delta_theta_k, &self.delta_theta_c]
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// First round whose gradient sum fell below the configured tolerance.
    pub fn first_round_below_grad_tolerance(&self) -> Option<usize> {
        self.grad_sum_norm.iter().position(|&g| g < self.config.grad_tolerance)
    }

    pub fn distance_to_stationary(&self) -> f64 {
        self.theta_c.sub(&self.stationary_point).norm_inf()
    }

    pub fn summary(&self) -> SyntheticSummary {
        let descent = check_descent(&self.lagrangian, DESCENT_TOLERANCE);
        SyntheticSummary {
            config: self.config,
            conditions_met: self.config.conditions_met(),
            rounds: self.grad_sum_norm.len(),
            finite: self.is_finite(),
            descent,
            first_round_below_grad_tolerance: self.first_round_below_grad_tolerance(),
            final_grad_sum_norm: self.grad_sum_norm.last().copied().unwrap_or(0.0),
            final_delta_theta_k: self.delta_theta_k.last().copied().unwrap_or(0.0),
            final_delta_theta_c: self.delta_theta_c.last().copied().unwrap_or(0.0),
            max_v_inf_norm: self.v_inf_norm.iter().copied().fold(0.0, f64::max),
            second_moment_bound: self.config.pasm().second_moment_bound(),
            second_moment_violations: self.second_moment_violations.len(),
            first_second_moment_violation: self.second_moment_violations.first().copied(),
            distance_to_stationary: self.distance_to_stationary(),
            initial_lagrangian: self.lagrangian.first().copied().unwrap_or(0.0),
            final_lagrangian: self.lagrangian.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSummary {
    pub config: SyntheticConfig,
    pub conditions_met: bool,
    pub rounds: usize,
    pub finite: bool,
    pub descent: DescentCheck,
    pub first_round_below_grad_tolerance: Option<usize>,
    pub final_grad_sum_norm: f64,
    pub final_delta_theta_k: f64,
    pub final_delta_theta_c: f64,
    pub max_v_inf_norm: f64,
    pub second_moment_bound: f64,
    pub second_moment_violations: usize,
    pub first_second_moment_violation: Option<usize>,
    pub distance_to_stationary: f64,
    pub initial_lagrangian: f64,
    pub final_lagrangian: f64,
}

/// Run PASM with exact gradients on a random synthetic potential.
pub fn run_synthetic_pasm(cfg: &SyntheticConfig) -> Result<LagrangianReport> {
    cfg.validate()?;
    let potential = SyntheticPotential::random(cfg.agents, cfg.dim, cfg.target_scale, cfg.seed)?;
    run_synthetic_pasm_on(cfg, &potential)
}

pub fn run_synthetic_pasm_on(cfg: &SyntheticConfig, potential: &SyntheticPotential) -> Result<LagrangianReport> {
    cfg.validate()?;
    if potential.targets.len() != cfg.agents || potential.targets[0].len() != cfg.dim {
        return Err(Error::dim("potential shape does not match the diagnostics config"));
    }
    let mut oracle = potential.oracle();
    if cfg.clip {
        oracle.clip = Some(1.0 - cfg.epsilon);
    }
    let theta0 = ParamVector::zeros(cfg.dim);
    let mut trainer = PasmTrainer::new(cfg.agents, theta0.clone(), cfg.rho, cfg.pasm());
    for a in &mut trainer.agents {
        a.theta = theta0.clone();
    }
    let bound = cfg.pasm().second_moment_bound();
    let lagrangian_now = |t: &PasmTrainer| {
        let thetas: Vec<ParamVector> = t.agents.iter().map(|a| a.theta.clone()).collect();
        let lambdas: Vec<ParamVector> = t.agents.iter().map(|a| a.lambda.clone()).collect();
        augmented_lagrangian(&thetas, &lambdas, &t.server.theta_c, cfg.rho, potential.phi(&thetas))
    };

    let mut report = LagrangianReport {
        config: *cfg,
        lagrangian: vec![lagrangian_now(&trainer)?],
        grad_sum_norm: Vec::with_capacity(cfg.rounds),
        v_inf_norm: Vec::with_capacity(cfg.rounds),
        delta_theta_k: Vec::with_capacity(cfg.rounds),
        delta_theta_c: Vec::with_capacity(cfg.rounds),
        second_moment_violations: Vec::new(),
        theta_c: theta0.clone(),
        stationary_point: potential.stationary_point(),
    };
    for j in 0..cfg.rounds {
        let before: Vec<ParamVector> = trainer.agents.iter().map(|a| a.theta.clone()).collect();
        let theta_c_before = trainer.server.theta_c.clone();
        let m = trainer.round(&mut oracle)?;
        let v_inf = m.v_inf_norm.unwrap_or(0.0);
        if cfg.clip && !(v_inf < bound) {
            report.second_moment_violations.push(j);
        }
        report.grad_sum_norm.push(m.grad_sum_norm.unwrap_or(0.0));
        report.v_inf_norm.push(v_inf);
        report
            .delta_theta_k
            .push(trainer.agents.iter().zip(&before).map(|(a, b)| a.theta.sub(b).norm2()).fold(0.0, f64::max));
        report.delta_theta_c.push(trainer.server.theta_c.sub(&theta_c_before).norm2());
        report.lagrangian.push(lagrangian_now(&trainer)?);
    }
    report.theta_c = trainer.server.theta_c.clone();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentCheck {
    pub pass: bool,
    /// Index `j` of the first step with `values[j + 1] > values[j] + tol`.
    pub first_violation: Option<usize>,
    pub max_increase: f64,
}

/// Pass iff the sequence never rises by more than `tol` in one step.
pub fn check_descent(values: &[f64], tol: f64) -> DescentCheck {
    let mut out = DescentCheck { pass: true, first_violation: None, max_increase: f64::NEG_INFINITY };
    for (j, w) in values.windows(2).enumerate() {
        let inc = w[1] - w[0];
        out.max_increase = out.max_increase.max(inc);
        if !(inc <= tol) && out.first_violation.is_none() {
            out.first_violation = Some(j);
            out.pass = false;
        }
    }
    if values.len() < 2 {
        out.max_increase = 0.0;
    }
    out
}

/// Largest elementwise gap between each agent's own-return gradient and the
/// potential gradient, both by exact enumeration.
pub fn check_pg_equality(mdp: &TabularMdp, params: &[ParamVector]) -> Result<f64> {
    let common = enumerate_exact_pg(mdp, params, ENUMERATION_BUDGET)?;
    let own = enumerate_own_return_pg(mdp, params, ENUMERATION_BUDGET)?;
    let mut dev: f64 = 0.0;
    for (a, b) in common.grads.iter().zip(&own.grads) {
        for (x, y) in a.iter().zip(b.iter()) {
            dev = dev.max((x - y).abs());
        }
    }
    Ok(dev)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PgEqualityCase {
    pub name: String,
    pub deviation: f64,
    /// Negative controls are expected to fail.
    pub expect_equal: bool,
    pub pass: bool,
}

/// The three equality cases: common-reward bandit, two-state MDP, and a
/// negative control with per-agent rewards.
pub fn pg_equality_suite(tolerance: f64) -> Result<Vec<PgEqualityCase>> {
    let params2 = |a: &[f64], b: &[f64]| vec![ParamVector::from(a.to_vec()), ParamVector::from(b.to_vec())];
    let bandit = TabularMdp::identical_interest_bandit(0);
    let two_state = TabularMdp::two_agent_two_state(0);
    let control = TabularMdp::identical_interest_bandit(0)
        .with_agent_rewards(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]], vec![0.5, 0.0, 0.0, 0.5])?;
    let cases = [
        ("common_reward_bandit", bandit, params2(&[0.3, -0.2], &[-0.1, 0.4]), true),
        ("two_state_horizon_2", two_state, params2(&[0.2, -0.1, 0.5, 0.0], &[-0.3, 0.1, 0.0, 0.4]), true),
        ("per_agent_rewards_control", control, params2(&[0.3, -0.2], &[-0.1, 0.4]), false),
    ];
    cases
        .into_iter()
        .map(|(name, mdp, params, expect_equal)| {
            let deviation = check_pg_equality(&mdp, &params)?;
            let equal = deviation < tolerance;
            Ok(PgEqualityCase { name: name.to_string(), deviation, expect_equal, pass: equal == expect_equal })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub theorem: SyntheticSummary,
    /// Run with the scenario 1 optimizer settings; reported, not asserted.
    pub paper_hyperparameters: SyntheticSummary,
    pub pg_equality: Vec<PgEqualityCase>,
    pub pass: bool,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run every synthetic check under `cfg` and the paper settings.
pub fn run_all(cfg: &SyntheticConfig) -> Result<DiagnosticsReport> {
    let theorem = run_synthetic_pasm(cfg)?.summary();
    let paper = run_synthetic_pasm(&SyntheticConfig {
        seed: cfg.seed,
        rounds: cfg.rounds,
        ..SyntheticConfig::paper_hyperparameters()
    })?
    .summary();
    let pg_equality = pg_equality_suite(1e-10)?;
    let theorem_ok = !theorem.conditions_met
        || (theorem.descent.pass
            && theorem.first_round_below_grad_tolerance.is_some()
            && theorem.second_moment_violations == 0
            && theorem.finite);
    let pass = theorem_ok && pg_equality.iter().all(|c| c.pass) && paper.second_moment_violations == 0;
    Ok(DiagnosticsReport { theorem, paper_hyperparameters: paper, pg_equality, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrangian_examples() {
        let one = |x: f64| vec![ParamVector::from(vec![x])];
        let zero = ParamVector::from(vec![0.0]);
        assert_eq!(augmented_lagrangian(&one(1.0), &one(2.0), &zero, 10.0, 0.0).unwrap(), 7.0);
        let c = ParamVector::from(vec![0.4, -0.3]);
        let l = augmented_lagrangian(
            &[c.clone(), c.clone()],
            &[ParamVector::zeros(2), ParamVector::zeros(2)],
            &c,
            5.0,
            -1.25,
        )
        .unwrap();
        assert_eq!(l, 1.25);
        assert_eq!(augmented_lagrangian(&one(1.0), &one(0.0), &zero, 10.0, 0.0).unwrap(), 5.0);
        assert!(augmented_lagrangian(&one(1.0), &[], &zero, 10.0, 0.0).is_err());
    }

    #[test]
    fn theorem_conditions() {
        assert!(SyntheticConfig::default().conditions_met());
        assert!(!SyntheticConfig::paper_hyperparameters().conditions_met());
    }

    #[test]
    fn zero_targets_stay_put() {
        let cfg = SyntheticConfig { rounds: 50, ..SyntheticConfig::default() };
        let p = SyntheticPotential::new(vec![ParamVector::zeros(5); 3]).unwrap();
        let r = run_synthetic_pasm_on(&cfg, &p).unwrap();
        assert!(r.lagrangian.iter().all(|&l| l == 0.0));
        assert_eq!(r.theta_c, ParamVector::zeros(5));
    }

    #[test]
    fn theorem_run_short() {
        let cfg = SyntheticConfig { rounds: 2000, ..SyntheticConfig::default() };
        let r = run_synthetic_pasm(&cfg).unwrap();
        let s = r.summary();
        assert!(s.descent.pass, "{:?}", s.descent);
        assert!(s.first_round_below_grad_tolerance.is_some());
        assert!(s.distance_to_stationary < 1e-4);
        assert_eq!(s.second_moment_violations, 0);
        assert_eq!(r.lagrangian.len(), 2001);
    }

    #[test]
    fn descent_check_cases() {
        assert!(check_descent(&[3.0, 2.0, 2.0, 1.0], 1e-10).pass);
        let bumped = check_descent(&[3.0, 2.0, 2.5, 1.0], 1e-10);
        assert!(!bumped.pass);
        assert_eq!(bumped.first_violation, Some(1));
        assert!((bumped.max_increase - 0.5).abs() < 1e-15);
        assert!(check_descent(&[1.0], 1e-10).pass);
        assert!(check_descent(&[], 1e-10).pass);
        assert!(!check_descent(&[1.0, f64::NAN], 1e-10).pass);
    }

    #[test]
    fn pg_equality_cases() {
        let cases = pg_equality_suite(1e-10).unwrap();
        assert_eq!(cases.len(), 3);
        assert!(cases.iter().all(|c| c.pass), "{cases:?}");
        assert!(cases[0].deviation < 1e-12);
        assert!(cases[2].deviation > 1e-3);
    }
}
