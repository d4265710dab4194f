use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::diagnostics::SyntheticConfig;
use crate::env::{EnvConfig, Scenario};
use crate::federate::{Algo, PasmConfig};
use crate::nn::{AdamConfig, POLICY_HIDDEN};
use crate::pg::{Baseline, PgOptions};
use crate::{Error, Result};

/// Default penalty per scenario.
pub fn default_rho(scenario: Scenario) -> f64 {
    match scenario {
        Scenario::One => 1000.0,
        Scenario::Two => 500.0,
    }
}

/// Adam settings shared by the two baselines; only the learning rate differs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub frlpg_lr: f64,
    pub ipg_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        AdamSection { frlpg_lr: 1e-3, ipg_lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamSection {
    pub fn for_algo(&self, algo: Algo) -> AdamConfig {
        let lr = if algo == Algo::Ipg { self.ipg_lr } else { self.frlpg_lr };
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgSection {
    pub baseline: Baseline,
    /// Rescale each local gradient to this infinity norm when set.
    pub clip: Option<f64>,
    /// Episodes sampled per round.
    pub batch: usize,
    pub hidden: Vec<usize>,
}

impl Default for PgSection {
    fn default() -> Self {
        PgSection { baseline: Baseline::None, clip: None, batch: 1, hidden: POLICY_HIDDEN.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub episodes: usize,
    pub moving_average_window: usize,
    /// Write a checkpoint every this many rounds; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { episodes: 12_000, moving_average_window: 200, checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Independent vehicle drops; episodes are split evenly between them.
    pub drops: usize,
    pub episodes: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { drops: 20, episodes: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Length of the clipped V2X PASM run whose second moment is checked.
    pub v2x_episodes: usize,
    pub synthetic: SyntheticConfig,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { v2x_episodes: 20, synthetic: SyntheticConfig::default() }
    }
}

/// Axes of a sweep; the runs are the cross product of the non-empty ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub payload_bytes: Vec<f64>,
    /// `[N, K]` pairs.
    pub links: Vec<[usize; 2]>,
    pub algos: Vec<Algo>,
    /// Seeds `seed, seed + 1, ...` per combination.
    pub seeds: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { payload_bytes: Vec::new(), links: Vec::new(), algos: Vec::new(), seeds: 1 }
    }
}

/// The complete experiment description. Every key has a default; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub algo: Algo,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub channel: ChannelConfig,
    pub pasm: PasmConfig,
    pub adam: AdamSection,
    pub pg: PgSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub diagnostics: DiagnosticsSection,
    pub sweep: SweepSection,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: Scenario::One,
            algo: Algo::Pasm,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            env: EnvConfig::default(),
            channel: ChannelConfig::default(),
            pasm: PasmConfig::default(),
            adam: AdamSection::default(),
            pg: PgSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            diagnostics: DiagnosticsSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl SimConfig {
    /// Parse and validate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn rho(&self) -> f64 {
        self.pasm.rho.unwrap_or_else(|| default_rho(self.scenario))
    }

    pub fn omega(&self) -> f64 {
        self.env.omega(self.scenario)
    }

    pub fn adam_config(&self) -> AdamConfig {
        self.adam.for_algo(self.algo)
    }

    /// Gradient options for training. With the second-moment check on, PASM
    /// gradients are clipped at `1 - epsilon` so the bound is guaranteed.
    pub fn pg_options(&self) -> PgOptions {
        let mut clip = self.pg.clip;
        if self.algo == Algo::Pasm && self.pasm.check_second_moment {
            let c = 1.0 - self.pasm.epsilon;
            clip = Some(clip.map_or(c, |x| x.min(c)));
        }
        PgOptions { baseline: self.pg.baseline, clip }
    }

    /// Short hex digest of the canonical serialization, ignoring `out_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.channel.validate()?;
        self.pasm.validate()?;
        let a = &self.adam;
        if !(a.frlpg_lr > 0.0 && a.ipg_lr > 0.0 && a.eps > 0.0) {
            return Err(Error::config("adam learning rates and eps must be positive"));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if self.pg.batch == 0 {
            return Err(Error::config("pg.batch must be at least 1"));
        }
        if self.pg.hidden.is_empty() || self.pg.hidden.contains(&0) {
            return Err(Error::config("pg.hidden must list positive layer widths"));
        }
        if let Some(c) = self.pg.clip {
            if !(c > 0.0) {
                return Err(Error::config("pg.clip must be positive"));
            }
        }
        if self.train.episodes == 0 || self.train.moving_average_window == 0 {
            return Err(Error::config("train.episodes and train.moving_average_window must be at least 1"));
        }
        if self.evaluate.drops == 0 || self.evaluate.episodes < self.evaluate.drops {
            return Err(Error::config("evaluate needs at least one drop and one episode per drop"));
        }
        self.diagnostics.synthetic.validate()?;
        if self.sweep.seeds == 0 {
            return Err(Error::config("sweep.seeds must be at least 1"));
        }
        for &p in &self.sweep.payload_bytes {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("sweep.payload_bytes must be positive"));
            }
        }
        for &[n, k] in &self.sweep.links {
            EnvConfig { n_v2i: n, n_v2v: k, ..self.env.clone() }.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(SimConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(SimConfig::from_toml("").unwrap(), SimConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml("sede = 3").is_err());
        assert!(SimConfig::from_toml("[pasm]\nrho = 10\nalpha = 1").is_err());
        assert!(SimConfig::from_toml("[env]\npayload = 10").is_err());
    }

    #[test]
    fn out_of_domain_rejected() {
        for bad in [
            "[env]\npower_levels_dbm = [23, 12]",
            "[env]\nv2i_power_dbm = 30",
            "scenario = 3",
            "[pasm]\nepsilon = 1.5",
            "[train]\nepisodes = 0",
            "[channel]\nspeed_max_mps = 20",
            "[env]\nn_v2i = 4\nn_v2v = 6",
            "[evaluate]\ndrops = 30\nepisodes = 10",
        ] {
            assert!(SimConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn scenario_defaults() {
        let mut cfg = SimConfig::default();
        assert_eq!((cfg.rho(), cfg.omega()), (1000.0, 0.01));
        cfg.scenario = Scenario::Two;
        assert_eq!((cfg.rho(), cfg.omega()), (500.0, 0.1));
        assert_eq!(cfg.adam.for_algo(Algo::Ipg).lr, 1e-4);
        assert_eq!(cfg.adam.for_algo(Algo::Frlpg).lr, 1e-3);
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = SimConfig::default();
        let b = SimConfig { out_dir: PathBuf::from("elsewhere"), ..a.clone() };
        let c = SimConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 16);
    }

    #[test]
    fn diagnostics_mode_clips_pasm() {
        let mut cfg = SimConfig::default();
        assert_eq!(cfg.pg_options().clip, None);
        cfg.pasm.check_second_moment = true;
        assert_eq!(cfg.pg_options().clip, Some(0.99));
        cfg.algo = Algo::Frlpg;
        assert_eq!(cfg.pg_options().clip, None);
    }
}
