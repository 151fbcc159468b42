//! Plans an expert for each built-in environment and prints one demonstration.
//!
//! `cargo run --example expert_demos`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::{sample_expert_trajectories, value_iteration};

fn main() -> stepwise_rl::Result<()> {
    for id in EnvId::ALL {
        let env = Env::builtin(id);
        let mdp = env.underlying_mdp();
        let values = value_iteration(&mdp, 0.99, 1e-10)?;
        let start = (0..mdp.num_states)
            .find(|&s| mdp.initial[s] > 0.0)
            .unwrap_or(0);
        println!(
            "{id}: {} hidden states, {} actions, V(start) = {:.4}",
            mdp.num_states, mdp.num_actions, values.values[start]
        );

        let demos = sample_expert_trajectories(&env, 100, 7)?;
        let mean_len = demos.iter().map(|t| t.len()).sum::<usize>() as f64 / demos.len() as f64;
        println!("  100 demonstrations, mean length {mean_len:.2}");
        let t = &demos[0];
        let actions: Vec<String> = t.actions().map(|a| a.0.to_string()).collect();
        println!(
            "  episode {}: actions [{}] -> reward {}",
            t.episode_id,
            actions.join(" "),
            t.final_reward
        );
    }
    Ok(())
}
