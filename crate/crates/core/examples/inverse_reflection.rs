//! Adversarial reflection: a discriminator separates agent and expert actions
//! and its score drives clipped policy-gradient updates. Prints the occupancy
//! divergence to the expert after each iteration.
//!
//! `cargo run --release --example inverse_reflection -- [step|final|both]`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::sample_expert_trajectories;
use stepwise_rl::harness::OccupancyReference;
use stepwise_rl::inspection::segment_all;
use stepwise_rl::metrics::{evaluate, EvalMode};
use stepwise_rl::policy::{train_bc, BcConfig, PolicyModel};
use stepwise_rl::reflect_inverse::{
    train_inverse_iteration, InverseConfig, InverseState, PpoConfig, RewardMode,
    DEFAULT_DISC_HIDDEN,
};

fn main() -> stepwise_rl::Result<()> {
    let mode: RewardMode = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("step")
        .parse()?;
    let env = Env::builtin(EnvId::ChainKey);
    let data = sample_expert_trajectories(&env, 50, 4)?;
    let mut policy = PolicyModel::new(&env, &[64], 1)?;
    let bc = BcConfig {
        epochs: 2,
        lr: 1e-2,
        batch_size: 32,
        seed: 1,
    };
    train_bc(&mut policy, &data, &bc)?;

    let reference = OccupancyReference::new(&env, 0.99)?;
    let expert = segment_all(&data);
    let mut state = InverseState::new(&env, &DEFAULT_DISC_HIDDEN, 2)?;
    let cfg = InverseConfig {
        reward_mode: mode,
        disc_epochs: 100,
        disc_lr: 1e-2,
        ppo: PpoConfig {
            lr: 1.0,
            ..PpoConfig::default()
        },
        ..InverseConfig::default()
    };
    for k in 0..=7 {
        if k > 0 {
            let m = train_inverse_iteration(&env, &mut policy, &mut state, &expert, &cfg, k, 3)?;
            print!(
                "iter {k}: disc loss {:.4}, mean reward {:.4}, ",
                m.disc_loss, m.mean_reward
            );
        } else {
            print!("iter 0 (BC): ");
        }
        let (js, kl) = reference.divergences(&env, &policy)?;
        let eval = evaluate(&env, &policy, 300, 9, EvalMode::Greedy)?;
        println!("JS {js:.4}, KL {kl:.4}, success {:.3}", eval.success_rate);
    }
    Ok(())
}
