//! Cuts expert trajectories into per-step samples, lets a weak policy practice
//! at every prefix and turns the disagreements into preference pairs.
//!
//! `cargo run --example inspection_practice`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::sample_expert_trajectories;
use stepwise_rl::inspection::{build_pair_dataset, practice, segment_all};
use stepwise_rl::policy::{train_bc, BcConfig, PolicyModel};

fn main() -> stepwise_rl::Result<()> {
    let env = Env::builtin(EnvId::ChainKey);
    let data = sample_expert_trajectories(&env, 20, 3)?;
    let mut model = PolicyModel::new(&env, &[32], 3)?;
    let cfg = BcConfig {
        epochs: 2,
        lr: 1e-2,
        batch_size: 16,
        seed: 3,
    };
    train_bc(&mut model, &data, &cfg)?;

    let steps = segment_all(&data);
    println!(
        "{} trajectories -> {} decision points",
        data.len(),
        steps.len()
    );
    for m in [1, 3, 8] {
        let practiced = practice(&model, &steps, m, 4)?;
        let agree = practiced
            .iter()
            .flat_map(|s| s.agent_actions.iter().map(move |a| *a == s.expert_action))
            .filter(|&x| x)
            .count();
        let pairs = build_pair_dataset(&practiced);
        println!(
            "practice {m}: agreement {:.3}, {} preference pairs",
            agree as f64 / (steps.len() * m) as f64,
            pairs.len()
        );
    }
    let s = &practice(&model, &steps[..1], 5, 4)?[0];
    let tried: Vec<usize> = s.agent_actions.iter().map(|a| a.0).collect();
    println!(
        "first prefix: expert {} vs practiced {tried:?}",
        s.expert_action.0
    );
    Ok(())
}
