//! Inverse-RL reflection: a discriminator learns to tell agent state-action pairs
//! from expert ones, and its score becomes a step-level reward for a clipped
//! policy-gradient update.

mod discriminator;
mod ppo;
mod train;

pub use discriminator::{
    clamp_score, disc_loss, discriminator_objective, gail_reward, optimal_discriminator_tabular,
    reward_from_score, train_discriminator, train_discriminator_with, weighted_disc_loss,
    Discriminator, CLAMP, DEFAULT_DISC_HIDDEN,
};
pub use ppo::{
    clipped_objective, compute_advantages, gae, ppo_surrogate, ppo_update, ppo_update_with,
    PpoConfig, PpoSample, RewardedEpisode, ValueModel, DEFAULT_CLIP, DEFAULT_ENTROPY,
    DEFAULT_GAE_LAMBDA, DEFAULT_POLICY_EPOCHS,
};
pub use train::{
    collect_rollouts, train_inverse_iteration, InverseConfig, InverseMetrics, InverseState,
    OptimizerKind, RewardMode, DEFAULT_INVERSE_ITERATIONS,
};
