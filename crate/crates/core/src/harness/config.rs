use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::reflect_inverse::{OptimizerKind, RewardMode};

/// Version written into `config.snapshot`.
pub const RUN_CONFIG_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// Behavioral cloning only.
    Sft,
    /// Step-wise preference optimization on practiced pairs.
    Implicit,
    /// Discriminator reward with clipped policy-gradient updates.
    Inverse,
    /// Preference optimization over whole trajectories.
    TrajDpo,
    /// Clipped policy gradient on the environment's final reward only.
    PpoFinal,
}

impl Algo {
    pub const ALL: [Algo; 5] = [
        Algo::Sft,
        Algo::Implicit,
        Algo::Inverse,
        Algo::TrajDpo,
        Algo::PpoFinal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Sft => "sft",
            Algo::Implicit => "implicit",
            Algo::Inverse => "inverse",
            Algo::TrajDpo => "traj_dpo",
            Algo::PpoFinal => "ppo_final",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algo `{s}` (expected sft, implicit, inverse, traj_dpo or ppo_final)"
                ))
            })
    }
}

/// Everything a training run depends on. Stored as flat TOML; CLI flags override
/// individual keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub env: EnvId,
    pub algo: Algo,
    /// Expert trajectory file (JSONL).
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    pub practice_m: usize,
    /// `None` picks the algorithm's natural mode: `final` for ppo_final, `step` otherwise.
    pub reward_mode: Option<RewardMode>,
    pub beta: f64,
    pub clip_eps: f64,
    pub entropy_coeff: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub hidden: Vec<usize>,
    pub bc_epochs: usize,
    pub bc_lr: f64,
    pub bc_batch: usize,
    /// Adam learning rate of the preference-optimization updates (implicit, traj_dpo).
    pub pref_lr: f64,
    /// Learning rate of the clipped policy-gradient step (inverse, ppo_final).
    pub ppo_lr: f64,
    pub ppo_optimizer: OptimizerKind,
    pub pref_batch: usize,
    pub ppo_epochs: usize,
    pub ppo_batch: usize,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
    pub disc_batch: usize,
    pub disc_epochs: usize,
    pub value_lr: f64,
    pub value_epochs: usize,
    pub rollout_episodes: usize,
    /// Step mode only: score on-policy rollouts instead of practiced samples.
    pub step_rollouts: bool,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: RUN_CONFIG_SCHEMA,
            env: EnvId::Grid,
            algo: Algo::Implicit,
            dataset: None,
            output_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2],
            iterations: 3,
            practice_m: crate::inspection::DEFAULT_PRACTICE,
            reward_mode: None,
            beta: crate::reflect_implicit::DEFAULT_BETA,
            clip_eps: crate::reflect_inverse::DEFAULT_CLIP,
            entropy_coeff: crate::reflect_inverse::DEFAULT_ENTROPY,
            gamma: 0.99,
            gae_lambda: crate::reflect_inverse::DEFAULT_GAE_LAMBDA,
            hidden: crate::policy::DEFAULT_POLICY_HIDDEN.to_vec(),
            bc_epochs: 30,
            bc_lr: 1e-2,
            bc_batch: 32,
            pref_lr: 1e-2,
            ppo_lr: 1.0,
            ppo_optimizer: OptimizerKind::Sgd,
            pref_batch: crate::reflect_implicit::DEFAULT_BATCH,
            ppo_epochs: crate::reflect_inverse::DEFAULT_POLICY_EPOCHS,
            ppo_batch: 64,
            disc_hidden: crate::reflect_inverse::DEFAULT_DISC_HIDDEN.to_vec(),
            disc_lr: 1e-2,
            disc_batch: 64,
            disc_epochs: 100,
            value_lr: 3e-3,
            value_epochs: 4,
            rollout_episodes: 64,
            step_rollouts: false,
            eval_episodes: 500,
            eval_seed: 0xE7A1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != RUN_CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {RUN_CONFIG_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// The reward mode actually used by the run.
    pub fn effective_reward_mode(&self) -> RewardMode {
        match (self.reward_mode, self.algo) {
            (Some(m), _) => m,
            (None, Algo::PpoFinal) => RewardMode::Final,
            (None, _) => RewardMode::Step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.practice_m == 0 {
            return bad("practice_m must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let mode = self.effective_reward_mode();
        match (self.algo, mode) {
            (Algo::Inverse, _) | (Algo::PpoFinal, RewardMode::Final) => {}
            (Algo::PpoFinal, m) => {
                return bad(format!(
                    "algo ppo_final uses the final reward only, got reward_mode {m}"
                ))
            }
            (_, RewardMode::Step) => {}
            (a, m) => {
                return bad(format!(
                    "reward_mode {m} is only valid for inverse or ppo_final, not {a}"
                ))
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!(
                "gae_lambda must lie in [0, 1], got {}",
                self.gae_lambda
            ));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("clip_eps", self.clip_eps),
            ("bc_lr", self.bc_lr),
            ("pref_lr", self.pref_lr),
            ("ppo_lr", self.ppo_lr),
            ("disc_lr", self.disc_lr),
            ("value_lr", self.value_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.entropy_coeff.is_finite() && self.entropy_coeff >= 0.0) {
            return bad(format!(
                "entropy_coeff must be non-negative, got {}",
                self.entropy_coeff
            ));
        }
        for (name, v) in [
            ("bc_batch", self.bc_batch),
            ("pref_batch", self.pref_batch),
            ("ppo_batch", self.ppo_batch),
            ("ppo_epochs", self.ppo_epochs),
            ("disc_batch", self.disc_batch),
            ("disc_epochs", self.disc_epochs),
            ("rollout_episodes", self.rollout_episodes),
            ("eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}
