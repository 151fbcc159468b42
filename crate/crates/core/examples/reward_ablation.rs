//! Inverse reflection on the shopping task under step-wise, final-only and
//! combined rewards. Writes runs and `ablation.csv` under a temporary directory.
//!
//! `cargo run --release --example reward_ablation`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::{sample_expert_trajectories, save_trajectories};
use stepwise_rl::harness::{cmd_ablation_rewardtype, Algo, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Env::builtin(EnvId::MiniShop);
    let dir = std::env::temp_dir().join("stepwise-reward-ablation");
    std::fs::create_dir_all(&dir)?;
    let dataset = dir.join("minishop.jsonl");
    save_trajectories(&dataset, &sample_expert_trajectories(&env, 100, 6)?)?;
    let cfg = RunConfig {
        env: EnvId::MiniShop,
        algo: Algo::Inverse,
        dataset: Some(dataset),
        output_dir: dir.join("runs"),
        iterations: 7,
        bc_epochs: 4,
        ..RunConfig::default()
    };
    let table = cmd_ablation_rewardtype(&cfg, &[0, 1, 2])?;
    for c in &table.cells {
        println!(
            "{:>5}: final reward {:.3} +- {:.3}, success {:.3}",
            c.reward_mode, c.mean_final_reward, c.stderr, c.success_rate
        );
    }
    println!("{}", table.note());
    println!("outputs in {}", dir.display());
    Ok(())
}
