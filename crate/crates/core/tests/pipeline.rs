//! End-to-end library flows: demonstrations through reflection, plus the run
//! artifacts the harness produces.

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::{load_trajectories, sample_expert_trajectories, save_trajectories};
use stepwise_rl::harness::{cmd_sweep, cmd_train, Algo, RunConfig, SweepAxis};
use stepwise_rl::inspection::{
    build_pair_dataset, load_step_samples, practice, save_step_samples, segment_all,
};
use stepwise_rl::metrics::{evaluate, EvalMode};
use stepwise_rl::numcore::Checkpoint;
use stepwise_rl::policy::{train_bc, BcConfig, PolicyModel};
use stepwise_rl::reflect_implicit::{train_implicit_iteration, ImplicitConfig};
use stepwise_rl::reflect_inverse::{
    train_inverse_iteration, InverseConfig, InverseState, RewardMode, DEFAULT_DISC_HIDDEN,
};

fn bc(env: &Env, data: &[stepwise_rl::expert::Trajectory], epochs: usize) -> PolicyModel {
    let mut model = PolicyModel::new(env, &[32], 1).unwrap();
    let cfg = BcConfig {
        epochs,
        lr: 1e-2,
        batch_size: 16,
        seed: 1,
    };
    train_bc(&mut model, data, &cfg).unwrap();
    model
}

#[test]
fn implicit_reflection_raises_the_margin_and_keeps_success() {
    let env = Env::builtin(EnvId::ChainKey);
    let data = sample_expert_trajectories(&env, 30, 11).unwrap();
    let mut policy = bc(&env, &data, 2);
    let before = evaluate(&env, &policy, 200, 5, EvalMode::Greedy).unwrap();

    let samples = practice(&policy, &segment_all(&data), 3, 2).unwrap();
    let pairs = build_pair_dataset(&samples);
    assert!(!pairs.is_empty());
    let cfg = ImplicitConfig {
        lr: 1e-2,
        ..ImplicitConfig::default()
    };
    let metrics = train_implicit_iteration(&mut policy, &pairs, &cfg, None).unwrap();
    assert!(metrics.margin_before.abs() < 1e-12);
    assert!(metrics.margin_after > 0.0);

    let after = evaluate(&env, &policy, 200, 5, EvalMode::Greedy).unwrap();
    assert!(
        after.success_rate + 0.05 >= before.success_rate,
        "{before:?} -> {after:?}"
    );
}

#[test]
fn inverse_iterations_separate_expert_from_agent() {
    let env = Env::builtin(EnvId::Grid);
    let data = sample_expert_trajectories(&env, 20, 12).unwrap();
    let mut policy = bc(&env, &data, 2);
    let mut state = InverseState::new(&env, &DEFAULT_DISC_HIDDEN, 3).unwrap();
    let expert = segment_all(&data);
    let cfg = InverseConfig {
        reward_mode: RewardMode::Step,
        disc_epochs: 20,
        disc_lr: 1e-2,
        ..InverseConfig::default()
    };
    for k in 0..2 {
        let m =
            train_inverse_iteration(&env, &mut policy, &mut state, &expert, &cfg, k, 4).unwrap();
        assert!(m.disc_loss.is_finite());
        assert!(m.policy_samples > 0);
    }
    // The trained discriminator scores expert pairs as less agent-like than chance.
    let mean_expert_score = expert
        .iter()
        .map(|s| state.disc.score(&s.prefix, s.expert_action).unwrap())
        .sum::<f64>()
        / expert.len() as f64;
    assert!(mean_expert_score < 0.5, "{mean_expert_score}");
}

#[test]
fn datasets_and_checkpoints_round_trip_through_disk() {
    let env = Env::builtin(EnvId::MiniShop);
    let dir = tempfile::tempdir().unwrap();
    let data = sample_expert_trajectories(&env, 5, 13).unwrap();
    let path = dir.path().join("shop.jsonl");
    save_trajectories(&path, &data).unwrap();
    assert_eq!(load_trajectories(&path).unwrap(), data);

    let policy = bc(&env, &data, 1);
    let samples = practice(&policy, &segment_all(&data), 2, 9).unwrap();
    let spath = dir.path().join("steps.jsonl");
    save_step_samples(&spath, &samples).unwrap();
    assert_eq!(load_step_samples(&spath).unwrap(), samples);

    let cpath = dir.path().join("policy.json");
    policy.to_checkpoint().save(&cpath).unwrap();
    let back = PolicyModel::from_checkpoint(&Checkpoint::load(&cpath).unwrap(), &env).unwrap();
    for s in &samples {
        assert_eq!(
            back.action_log_probs(&s.prefix).unwrap(),
            policy.action_log_probs(&s.prefix).unwrap()
        );
    }
}

#[test]
fn sweep_writes_one_run_per_value() {
    let env = Env::builtin(EnvId::ChainKey);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.jsonl");
    save_trajectories(&path, &sample_expert_trajectories(&env, 10, 14).unwrap()).unwrap();
    let cfg = RunConfig {
        env: EnvId::ChainKey,
        algo: Algo::Implicit,
        dataset: Some(path),
        output_dir: dir.path().join("sweep"),
        seeds: vec![0],
        bc_epochs: 2,
        eval_episodes: 50,
        ..RunConfig::default()
    };
    let rows = cmd_sweep(&cfg, SweepAxis::Practice, &[1, 4]).unwrap();
    assert_eq!(rows.len(), 2 * 4);
    for v in [1, 4] {
        assert!(dir
            .path()
            .join(format!("sweep/practice_m_{v}/metrics.csv"))
            .is_file());
    }
    // Header plus iterations 0..=3 for each value.
    let csv = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    assert!(csv.starts_with("axis,value,run_id,iteration,"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

#[test]
fn trained_run_reloads_into_the_reported_policy() {
    let env = Env::builtin(EnvId::Grid);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.jsonl");
    save_trajectories(&path, &sample_expert_trajectories(&env, 10, 15).unwrap()).unwrap();
    let cfg = RunConfig {
        algo: Algo::TrajDpo,
        dataset: Some(path),
        output_dir: dir.path().join("run"),
        iterations: 2,
        seeds: vec![3],
        bc_epochs: 2,
        eval_episodes: 50,
        ..RunConfig::default()
    };
    let record = cmd_train(&cfg).unwrap();
    let ckpt =
        Checkpoint::load(dir.path().join("run/checkpoints/iter_2/policy_seed3.json")).unwrap();
    assert_eq!(ckpt.tag("algo"), Some("traj_dpo"));
    let policy = PolicyModel::from_checkpoint(&ckpt, &env).unwrap();
    let report = evaluate(
        &env,
        &policy,
        cfg.eval_episodes,
        cfg.eval_seed,
        EvalMode::Greedy,
    )
    .unwrap();
    assert_eq!(record.final_reports, vec![(3, report)]);
}
