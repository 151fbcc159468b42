//! Behavioral cloning followed by rounds of step-wise preference optimization.
//!
//! `cargo run --release --example implicit_reflection`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::sample_expert_trajectories;
use stepwise_rl::inspection::{build_pair_dataset, practice, segment_all};
use stepwise_rl::metrics::{evaluate, EvalMode};
use stepwise_rl::policy::{train_bc, BcConfig, PolicyModel};
use stepwise_rl::reflect_implicit::{train_implicit_iteration, ImplicitConfig};

fn main() -> stepwise_rl::Result<()> {
    let env = Env::builtin(EnvId::Grid);
    let data = sample_expert_trajectories(&env, 30, 5)?;
    let mut policy = PolicyModel::new(&env, &[64], 5)?;
    let bc = BcConfig {
        epochs: 4,
        lr: 1e-2,
        batch_size: 32,
        seed: 5,
    };
    train_bc(&mut policy, &data, &bc)?;
    let steps = segment_all(&data);
    println!(
        "iter 0: success {:.3}",
        evaluate(&env, &policy, 300, 1, EvalMode::Greedy)?.success_rate
    );
    for k in 1..=5u64 {
        let pairs = build_pair_dataset(&practice(&policy, &steps, 3, k)?);
        let cfg = ImplicitConfig {
            beta: 0.1,
            lr: 1e-2,
            batch_size: 32,
            seed: k,
        };
        let m = train_implicit_iteration(&mut policy, &pairs, &cfg, None)?;
        let eval = evaluate(&env, &policy, 300, 1, EvalMode::Greedy)?;
        println!(
            "iter {k}: {} pairs, loss {:.4}, margin {:.3} -> {:.3}, success {:.3}",
            m.pairs, m.mean_loss, m.margin_before, m.margin_after, eval.success_rate
        );
    }
    Ok(())
}
