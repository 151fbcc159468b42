//! Compares analytic gradients of every training loss with central finite
//! differences.
//!
//! `cargo run --example gradient_check`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::sample_expert_trajectories;
use stepwise_rl::inspection::{build_pair_dataset, practice, segment_all};
use stepwise_rl::numcore::{grad_check, ParamVector};
use stepwise_rl::policy::{bc_loss, PolicyModel};
use stepwise_rl::reflect_implicit::{dpo_loss, ReferencePolicy};
use stepwise_rl::reflect_inverse::{disc_loss, ppo_surrogate, Discriminator, PpoSample};

fn main() -> stepwise_rl::Result<()> {
    let env = Env::builtin(EnvId::ChainKey);
    let data = sample_expert_trajectories(&env, 3, 1)?;
    let policy = PolicyModel::new(&env, &[6], 1)?;
    let with = |p: &ParamVector| PolicyModel::with_params(&env, policy.spec().clone(), p.clone());

    let err = grad_check(|p| bc_loss(&with(p)?, &data), policy.params())?;
    println!("bc_loss:       max relative error {err:.2e}");

    let reference = ReferencePolicy::snapshot(&PolicyModel::new(&env, &[6], 2)?);
    let steps = practice(&policy, &segment_all(&data), 2, 3)?;
    let pairs = build_pair_dataset(&steps);
    let err = grad_check(
        |p| dpo_loss(&with(p)?, &reference, &pairs, 0.5),
        policy.params(),
    )?;
    println!(
        "dpo_loss:      max relative error {err:.2e} over {} pairs",
        pairs.len()
    );

    let base = Discriminator::new(&env, &[4], 4)?;
    let disc = base.with_params(base.spec().init_params(5))?;
    let agent: Vec<_> = steps
        .iter()
        .map(|s| (s.prefix.clone(), s.agent_actions[0]))
        .collect();
    let expert: Vec<_> = steps
        .iter()
        .map(|s| (s.prefix.clone(), s.expert_action))
        .collect();
    let err = grad_check(
        |p| disc_loss(&disc.with_params(p.clone())?, &agent, &expert),
        disc.params(),
    )?;
    println!("disc_loss:     max relative error {err:.2e}");

    let behavior = PolicyModel::new(&env, &[6], 6)?;
    let batch = steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(PpoSample {
                behavior_log_prob: behavior.log_prob(&s.prefix, s.agent_actions[1])?,
                prefix: s.prefix.clone(),
                action: s.agent_actions[1],
                advantage: if i % 2 == 0 { 1.0 } else { -0.5 },
            })
        })
        .collect::<stepwise_rl::Result<Vec<_>>>()?;
    let err = grad_check(
        |p| ppo_surrogate(&with(p)?, &batch, 0.2, 0.01),
        policy.params(),
    )?;
    println!("ppo_surrogate: max relative error {err:.2e}");
    Ok(())
}
