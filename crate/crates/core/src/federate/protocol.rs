//! PASM agent/server message passing. Agents never see each other's state;
//! the server only sees uploads, so a network transport could replace the
//! in-process calls without touching the update equations.

use serde::{Deserialize, Serialize};

use super::ops::{aggregate, pasm_dual_update, pasm_local_update, pasm_second_moment, pasm_upload};
use crate::nn::ParamVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PasmConfig {
    /// Penalty; the scenario default (1000 for scenario 1, 500 for 2) when absent.
    pub rho: Option<f64>,
    pub epsilon: f64,
    pub beta: f64,
    pub r_k: f64,
    /// Check `||v_c||_inf < (1 - epsilon)^2` every round and fail on violation.
    pub check_second_moment: bool,
}

impl Default for PasmConfig {
    fn default() -> Self {
        PasmConfig { rho: None, epsilon: 1e-2, beta: 0.999, r_k: 1.0, check_second_moment: false }
    }
}

impl PasmConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::config("pasm.rho must be positive"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("pasm.epsilon must lie in (0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config("pasm.beta must lie in (0, 1)"));
        }
        if !(self.r_k > 0.0 && self.r_k.is_finite()) {
            return Err(Error::config("pasm.r_k must be positive"));
        }
        Ok(())
    }

    /// Bound on `||v_c||_inf` when every `||lambda_k||_inf <= 1 - epsilon`.
    pub fn second_moment_bound(&self) -> f64 {
        (1.0 - self.epsilon).powi(2)
    }
}

/// Server to agents: the current consensus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub round: usize,
    pub theta_c: ParamVector,
}

/// Agent to server: updated primal and dual variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentUpload {
    pub agent: usize,
    pub theta: ParamVector,
    pub lambda: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PasmAgent {
    pub id: usize,
    pub theta: ParamVector,
    pub lambda: ParamVector,
    pub r_k: f64,
}

impl PasmAgent {
    pub fn new(id: usize, len: usize, r_k: f64) -> Self {
        PasmAgent { id, theta: ParamVector::zeros(len), lambda: ParamVector::zeros(len), r_k }
    }

    /// Adopt the broadcast consensus parameters before sampling.
    pub fn receive(&mut self, msg: &Broadcast) {
        self.theta = msg.theta_c.clone();
    }

    /// Inexact primal step followed by the dual update, given the local gradient.
    pub fn local_step(&mut self, msg: &Broadcast, g: &ParamVector, rho: f64) -> Result<AgentUpload> {
        self.theta = pasm_local_update(&msg.theta_c, &self.lambda, g, rho, self.r_k)?;
        self.lambda = pasm_dual_update(&self.lambda, &self.theta, &msg.theta_c, rho)?;
        Ok(AgentUpload { agent: self.id, theta: self.theta.clone(), lambda: self.lambda.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PasmServer {
    pub theta_c: ParamVector,
    pub v: ParamVector,
    pub rho: f64,
    pub config: PasmConfig,
    pub round: usize,
}

impl PasmServer {
    pub fn new(theta_c: ParamVector, rho: f64, config: PasmConfig) -> Self {
        let v = ParamVector::zeros(theta_c.len());
        PasmServer { theta_c, v, rho, config, round: 0 }
    }

    pub fn broadcast(&self) -> Broadcast {
        Broadcast { round: self.round, theta_c: self.theta_c.clone() }
    }

    /// Second-moment update, per-agent upload transform and aggregation.
    /// Returns the previous consensus parameters.
    pub fn aggregate(&mut self, uploads: &[AgentUpload]) -> Result<ParamVector> {
        if uploads.is_empty() {
            return Err(Error::invalid("no uploads to aggregate"));
        }
        let lambdas: Vec<ParamVector> = uploads.iter().map(|u| u.lambda.clone()).collect();
        let v = pasm_second_moment(&self.v, &lambdas, self.config.beta)?;
        if self.config.check_second_moment {
            let (value, bound) = (v.norm_inf(), self.config.second_moment_bound());
            if !(value < bound) {
                return Err(Error::SecondMomentBound { round: self.round, value, bound });
            }
        }
        let us = uploads
            .iter()
            .map(|u| pasm_upload(&u.theta, &u.lambda, &v, self.rho, self.config.epsilon))
            .collect::<Result<Vec<_>>>()?;
        self.v = v;
        let previous = std::mem::replace(&mut self.theta_c, aggregate(&us)?);
        self.round += 1;
        Ok(previous)
    }
}
