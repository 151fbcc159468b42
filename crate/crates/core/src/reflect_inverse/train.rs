use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{AgentAction, Env};
use crate::error::{Error, Result};
use crate::inspection::{practice, StepSample};
use crate::numcore::{Adam, Optimizer};
use crate::policy::{HistoryState, PolicyModel};
use crate::rng::{derive_seed, rng_from};

use super::discriminator::{gail_reward, train_discriminator_with, Discriminator};
use super::ppo::{
    compute_advantages, ppo_update_with, PpoConfig, PpoSample, RewardedEpisode, ValueModel,
    DEFAULT_GAE_LAMBDA,
};

pub const DEFAULT_INVERSE_ITERATIONS: usize = 7;

/// Which reward drives the policy step.
///
/// * `Step`: discriminator reward on the practiced expert-prefix samples.
/// * `Final`: only the environment's final reward, on on-policy rollouts.
/// * `Both`: the practiced-sample step rewards plus on-policy rollouts that carry
///   the discriminator reward at every step and the final reward at the end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Step,
    Final,
    Both,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::Step => "step",
            RewardMode::Final => "final",
            RewardMode::Both => "both",
        }
    }

    fn uses_discriminator(self) -> bool {
        self != RewardMode::Final
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(RewardMode::Step),
            "final" => Ok(RewardMode::Final),
            "both" => Ok(RewardMode::Both),
            other => Err(Error::Config(format!(
                "unknown reward mode `{other}` (expected step, final or both)"
            ))),
        }
    }
}

/// Optimizer for the policy step. Plain SGD moves in proportion to the
/// advantage signal; Adam normalizes it away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseConfig {
    pub policy_optimizer: OptimizerKind,
    pub practice_m: usize,
    pub reward_mode: RewardMode,
    /// In `Step` mode, score on-policy rollouts with the discriminator and use
    /// GAE instead of single-step advantages on practiced samples.
    pub use_rollouts: bool,
    pub rollout_episodes: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub ppo: PpoConfig,
    pub disc_lr: f64,
    pub disc_batch: usize,
    pub disc_epochs: usize,
    pub value_lr: f64,
    pub value_epochs: usize,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            policy_optimizer: OptimizerKind::Sgd,
            practice_m: crate::inspection::DEFAULT_PRACTICE,
            reward_mode: RewardMode::Step,
            use_rollouts: false,
            rollout_episodes: 64,
            gamma: 0.99,
            gae_lambda: DEFAULT_GAE_LAMBDA,
            ppo: PpoConfig::default(),
            disc_lr: 1e-3,
            disc_batch: 64,
            disc_epochs: 1,
            value_lr: 1e-3,
            value_epochs: 4,
        }
    }
}

/// Learned components and optimizer state that persist across iterations.
#[derive(Clone, Debug)]
pub struct InverseState {
    pub disc: Discriminator,
    pub value: ValueModel,
    disc_opt: Adam,
    policy_opt: Option<Optimizer>,
}

impl InverseState {
    pub fn new(env: &Env, disc_hidden: &[usize], seed: u64) -> Result<Self> {
        let disc = Discriminator::new(env, disc_hidden, derive_seed(seed, &[0xD1]))?;
        Ok(InverseState {
            disc_opt: Adam::new(disc.params().len()),
            disc,
            value: ValueModel::new(env, &[32], derive_seed(seed, &[0x7A]))?,
            policy_opt: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseMetrics {
    /// Mean discriminator minibatch loss (NaN when the mode needs no discriminator).
    pub disc_loss: f64,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub policy_samples: usize,
    /// Fraction of practiced actions that equal the expert's.
    pub practice_agreement: f64,
}

/// Samples `episodes` on-policy episodes; episode `i` resets with
/// `derive_seed(seed, [i])`. Rewards are left at zero; the caller assigns them.
pub fn collect_rollouts(
    env: &Env,
    policy: &PolicyModel,
    episodes: usize,
    seed: u64,
) -> Result<Vec<(RewardedEpisode, f64)>> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(seed, &[i, 0xB0]);
            let (mut state, obs) = env.reset(derive_seed(seed, &[i]));
            let mut h = HistoryState::initial(obs);
            let mut ep = RewardedEpisode {
                prefixes: Vec::new(),
                actions: Vec::new(),
                rewards: Vec::new(),
                behavior_log_probs: Vec::new(),
            };
            loop {
                let s = policy.score(&h)?;
                let a = s.sample(&mut rng);
                ep.prefixes.push(h.clone());
                ep.actions.push(a);
                ep.rewards.push(0.0);
                ep.behavior_log_probs.push(s.log_probs[a.0]);
                let (next, res) = env.step(&state, a)?;
                if let Some(r) = res.final_reward {
                    return Ok((ep, r));
                }
                h.push(a, res.observation);
                state = next;
            }
        })
        .collect()
}

/// Single-step samples on practiced actions with advantage `r(s,a) - sum_a' pi(a'|s) r(s,a')`.
fn practiced_policy_samples(
    policy: &PolicyModel,
    disc: &Discriminator,
    practiced: &[StepSample],
) -> Result<(Vec<PpoSample>, Vec<f64>)> {
    let per_sample = practiced
        .par_iter()
        .map(|s| {
            let scored = policy.score(&s.prefix)?;
            let mut reward = vec![0.0; scored.log_probs.len()];
            for &a in &scored.legal {
                reward[a] = gail_reward(disc, &s.prefix, AgentAction(a))?;
            }
            let baseline: f64 = scored
                .legal
                .iter()
                .map(|&a| scored.prob(a) * reward[a])
                .sum();
            let out: Vec<(PpoSample, f64)> = s
                .agent_actions
                .iter()
                .map(|&a| {
                    (
                        PpoSample {
                            prefix: s.prefix.clone(),
                            action: a,
                            advantage: reward[a.0] - baseline,
                            behavior_log_prob: scored.log_probs[a.0],
                        },
                        reward[a.0],
                    )
                })
                .collect();
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().unzip())
}

/// One reflection iteration: practice from the expert prefixes, update the
/// discriminator on (practiced, expert) pairs, then take clipped policy-gradient
/// steps with rewards chosen by `config.reward_mode`.
pub fn train_inverse_iteration(
    env: &Env,
    policy: &mut PolicyModel,
    state: &mut InverseState,
    expert_samples: &[StepSample],
    config: &InverseConfig,
    iteration: usize,
    seed: u64,
) -> Result<InverseMetrics> {
    if expert_samples.is_empty() {
        return Err(Error::Empty("expert step samples"));
    }
    let it_seed = derive_seed(seed, &[0x1A, iteration as u64]);
    let practiced = practice(policy, expert_samples, config.practice_m, it_seed)?;
    let draws: usize = practiced.iter().map(|s| s.agent_actions.len()).sum();
    let agree: usize = practiced
        .iter()
        .map(|s| {
            s.agent_actions
                .iter()
                .filter(|&&a| a == s.expert_action)
                .count()
        })
        .sum();

    let mode = config.reward_mode;
    let mut disc_loss = f64::NAN;
    if mode.uses_discriminator() {
        let agent: Vec<(HistoryState, AgentAction)> = practiced
            .iter()
            .flat_map(|s| s.agent_actions.iter().map(move |&a| (s.prefix.clone(), a)))
            .collect();
        let expert: Vec<(HistoryState, AgentAction)> = practiced
            .iter()
            .map(|s| (s.prefix.clone(), s.expert_action))
            .collect();
        let mut total = 0.0;
        for e in 0..config.disc_epochs.max(1) {
            total += train_discriminator_with(
                &mut state.disc,
                &agent,
                &expert,
                config.disc_batch,
                config.disc_lr,
                derive_seed(it_seed, &[0xD, e as u64]),
                &mut state.disc_opt,
            )?;
        }
        disc_loss = total / config.disc_epochs.max(1) as f64;
    }

    let mut batch = Vec::new();
    let mut rewards = Vec::new();
    let practiced_step = match mode {
        RewardMode::Step => !config.use_rollouts,
        RewardMode::Both => true,
        RewardMode::Final => false,
    };
    if practiced_step {
        let (b, r) = practiced_policy_samples(policy, &state.disc, &practiced)?;
        batch.extend(b);
        rewards.extend(r);
    }
    let on_policy = mode != RewardMode::Step || config.use_rollouts;
    if on_policy {
        let rollouts = collect_rollouts(
            env,
            policy,
            config.rollout_episodes,
            derive_seed(it_seed, &[0xB]),
        )?;
        let mut episodes = Vec::with_capacity(rollouts.len());
        for (mut ep, final_reward) in rollouts {
            if mode.uses_discriminator() {
                for (i, h) in ep.prefixes.iter().enumerate() {
                    ep.rewards[i] = gail_reward(&state.disc, h, ep.actions[i])?;
                }
            }
            if mode != RewardMode::Step {
                *ep.rewards.last_mut().expect("episodes have steps") += final_reward;
            }
            rewards.extend(ep.rewards.iter().copied());
            episodes.push(ep);
        }
        let (samples, targets) =
            compute_advantages(&episodes, &state.value, config.gamma, config.gae_lambda)?;
        let inputs: Vec<HistoryState> = samples.iter().map(|s| s.prefix.clone()).collect();
        state.value.fit(
            &inputs,
            &targets,
            config.value_epochs,
            config.value_lr,
            derive_seed(it_seed, &[0x7]),
        )?;
        batch.extend(samples);
    }

    let ppo = PpoConfig {
        seed: derive_seed(it_seed, &[0x9]),
        ..config.ppo.clone()
    };
    let opt = state
        .policy_opt
        .get_or_insert_with(|| match config.policy_optimizer {
            OptimizerKind::Adam => Optimizer::adam(policy.params().len()),
            OptimizerKind::Sgd => Optimizer::Sgd,
        });
    let policy_loss = ppo_update_with(policy, &batch, &ppo, opt)?;
    Ok(InverseMetrics {
        disc_loss,
        mean_reward: if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().sum::<f64>() / rewards.len() as f64
        },
        policy_loss,
        policy_samples: batch.len(),
        practice_agreement: agree as f64 / draws.max(1) as f64,
    })
}
