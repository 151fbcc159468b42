//! Fits a history-conditioned policy to expert demonstrations and tracks the
//! loss and greedy success per epoch.
//!
//! `cargo run --release --example behavior_cloning`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::sample_expert_trajectories;
use stepwise_rl::metrics::{evaluate, EvalMode};
use stepwise_rl::policy::{train_bc, BcConfig, PolicyModel, DEFAULT_POLICY_HIDDEN};

fn main() -> stepwise_rl::Result<()> {
    let env = Env::builtin(EnvId::Grid);
    let data = sample_expert_trajectories(&env, 60, 1)?;
    let mut model = PolicyModel::new(&env, &DEFAULT_POLICY_HIDDEN, 1)?;
    let untrained = evaluate(&env, &model, 300, 2, EvalMode::Greedy)?;
    println!("epoch 0: success {:.3}", untrained.success_rate);
    for round in 1..=5 {
        let cfg = BcConfig {
            epochs: 4,
            lr: 1e-2,
            batch_size: 32,
            seed: round,
        };
        let report = train_bc(&mut model, &data, &cfg)?;
        let eval = evaluate(&env, &model, 300, 2, EvalMode::Greedy)?;
        println!(
            "epoch {}: nll {:.4}, success {:.3}",
            round * 4,
            report.epoch_losses.last().unwrap(),
            eval.success_rate
        );
    }
    Ok(())
}
