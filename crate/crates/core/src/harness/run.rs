use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::expert::{load_trajectories, ExpertPolicy, Trajectory};
use crate::inspection::{build_pair_dataset, practice, segment_all, StepSample};
use crate::metrics::{
    evaluate, js_divergence, kl_divergence, occupancy_analytic, project_policy, run_episode,
    EvalMode, EvalReport, MetricsRow, OccupancyTable, TabularPolicy,
};
use crate::numcore::Checkpoint;
use crate::policy::{train_bc, BcConfig, PolicyModel};
use crate::reflect_implicit::{
    train_implicit_iteration, train_traj_dpo_iteration, trajectory_pairs, ImplicitConfig,
};
use crate::reflect_inverse::{train_inverse_iteration, InverseConfig, InverseState, PpoConfig};
use crate::rng::derive_seed;

use super::config::{Algo, RunConfig};

pub const TRAIN_METRICS_HEADER: [&str; 9] = [
    "run_id",
    "iteration",
    "items",
    "loss",
    "disc_loss",
    "mean_reward",
    "practice_agreement",
    "margin_before",
    "margin_after",
];

/// Per-iteration optimizer statistics (`train_metrics.csv`). Cells that do not
/// apply to the algorithm are left empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRow {
    pub run_id: String,
    pub iteration: usize,
    /// Pairs, trajectory pairs, policy samples or expert trajectories, depending on the stage.
    pub items: usize,
    pub loss: f64,
    pub disc_loss: Option<f64>,
    pub mean_reward: Option<f64>,
    pub practice_agreement: Option<f64>,
    pub margin_before: Option<f64>,
    pub margin_after: Option<f64>,
}

/// Everything produced for one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    /// Iteration 0 is the behavior-cloned policy.
    pub rows: Vec<MetricsRow>,
    pub train_rows: Vec<TrainRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub policy: PolicyModel,
    pub log: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Metric rows of all seeds, seed-major, iterations increasing.
    pub rows: Vec<MetricsRow>,
    pub train_rows: Vec<TrainRow>,
    pub final_reports: Vec<(u64, EvalReport)>,
    pub policies: Vec<(u64, PolicyModel)>,
    pub wall_clock_secs: f64,
}

pub fn run_id(config: &RunConfig, seed: u64) -> String {
    format!(
        "{}-{}-{}-seed{}",
        config.env,
        config.algo,
        config.effective_reward_mode(),
        seed
    )
}

/// Exact occupancy of the expert, used to score every checkpoint.
#[derive(Clone, Debug)]
pub struct OccupancyReference {
    pub expert: OccupancyTable,
    pub gamma: f64,
}

impl OccupancyReference {
    pub fn new(env: &Env, gamma: f64) -> Result<Self> {
        let mdp = env.underlying_mdp();
        let expert = TabularPolicy::from_expert(&mdp, &ExpertPolicy::plan(&mdp)?);
        Ok(OccupancyReference {
            expert: occupancy_analytic(&mdp, &expert, gamma)?,
            gamma,
        })
    }

    /// `(JS(rho_agent, rho_expert), KL(rho_expert || rho_agent))` in nats.
    pub fn divergences(&self, env: &Env, policy: &PolicyModel) -> Result<(f64, f64)> {
        let agent = occupancy_analytic(
            &env.underlying_mdp(),
            &project_policy(env, policy)?,
            self.gamma,
        )?;
        Ok((
            js_divergence(&agent, &self.expert),
            kl_divergence(&self.expert, &agent),
        ))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

struct SeedContext<'a> {
    config: &'a RunConfig,
    env: &'a Env,
    dataset: &'a [Trajectory],
    samples: Vec<StepSample>,
    reference: &'a OccupancyReference,
    run_id: String,
}

impl SeedContext<'_> {
    fn metrics_row(&self, iteration: usize, policy: &PolicyModel) -> Result<MetricsRow> {
        let report = evaluate(
            self.env,
            policy,
            self.config.eval_episodes,
            self.config.eval_seed,
            EvalMode::Greedy,
        )?;
        let (js, kl) = self.reference.divergences(self.env, policy)?;
        Ok(MetricsRow::new(
            &self.run_id,
            iteration,
            self.env.id().as_str(),
            self.config.algo.as_str(),
            &report,
            js,
            kl,
        ))
    }

    fn implicit_step(
        &self,
        policy: &mut PolicyModel,
        iteration: usize,
        it_seed: u64,
    ) -> Result<TrainRow> {
        let cfg = self.config;
        let practiced = practice(policy, &self.samples, cfg.practice_m, it_seed)?;
        let pairs = build_pair_dataset(&practiced);
        let m = train_implicit_iteration(
            policy,
            &pairs,
            &ImplicitConfig {
                beta: cfg.beta,
                lr: cfg.pref_lr,
                batch_size: cfg.pref_batch,
                seed: derive_seed(it_seed, &[0x1]),
            },
            None,
        )?;
        Ok(TrainRow {
            run_id: self.run_id.clone(),
            iteration,
            items: m.pairs,
            loss: m.mean_loss,
            disc_loss: None,
            mean_reward: None,
            practice_agreement: Some(agreement(&practiced)),
            margin_before: Some(m.margin_before),
            margin_after: Some(m.margin_after),
        })
    }

    fn traj_dpo_step(
        &self,
        policy: &mut PolicyModel,
        iteration: usize,
        it_seed: u64,
    ) -> Result<TrainRow> {
        let cfg = self.config;
        let snapshot = policy.clone();
        let rollouts = self
            .dataset
            .par_iter()
            .flat_map_iter(|t| (0..cfg.practice_m as u64).map(move |j| (t.episode_id, j)))
            .map(|(reset, j)| {
                run_episode(
                    self.env,
                    &snapshot,
                    reset,
                    EvalMode::Sample,
                    derive_seed(it_seed, &[j]),
                )
                .map(|r| r.trajectory)
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = trajectory_pairs(self.dataset, &rollouts);
        let m = train_traj_dpo_iteration(
            policy,
            &pairs,
            &ImplicitConfig {
                beta: cfg.beta,
                lr: cfg.pref_lr,
                batch_size: cfg.pref_batch,
                seed: derive_seed(it_seed, &[0x1]),
            },
        )?;
        Ok(TrainRow {
            run_id: self.run_id.clone(),
            iteration,
            items: m.pairs,
            loss: m.mean_loss,
            disc_loss: None,
            mean_reward: Some(
                rollouts.iter().map(|t| t.final_reward).sum::<f64>() / rollouts.len() as f64,
            ),
            practice_agreement: None,
            margin_before: Some(m.margin_before),
            margin_after: Some(m.margin_after),
        })
    }

    fn inverse_step(
        &self,
        policy: &mut PolicyModel,
        state: &mut InverseState,
        iteration: usize,
        seed: u64,
    ) -> Result<TrainRow> {
        let cfg = self.config;
        let inv = InverseConfig {
            policy_optimizer: cfg.ppo_optimizer,
            practice_m: cfg.practice_m,
            reward_mode: cfg.effective_reward_mode(),
            use_rollouts: cfg.step_rollouts,
            rollout_episodes: cfg.rollout_episodes,
            gamma: cfg.gamma,
            gae_lambda: cfg.gae_lambda,
            ppo: PpoConfig {
                clip_eps: cfg.clip_eps,
                entropy_coeff: cfg.entropy_coeff,
                epochs: cfg.ppo_epochs,
                lr: cfg.ppo_lr,
                batch_size: cfg.ppo_batch,
                seed: 0,
            },
            disc_lr: cfg.disc_lr,
            disc_batch: cfg.disc_batch,
            disc_epochs: cfg.disc_epochs,
            value_lr: cfg.value_lr,
            value_epochs: cfg.value_epochs,
        };
        let m = train_inverse_iteration(
            self.env,
            policy,
            state,
            &self.samples,
            &inv,
            iteration,
            seed,
        )?;
        Ok(TrainRow {
            run_id: self.run_id.clone(),
            iteration,
            items: m.policy_samples,
            loss: m.policy_loss,
            disc_loss: (!m.disc_loss.is_nan()).then_some(m.disc_loss),
            mean_reward: Some(m.mean_reward),
            practice_agreement: Some(m.practice_agreement),
            margin_before: None,
            margin_after: None,
        })
    }
}

fn agreement(practiced: &[StepSample]) -> f64 {
    let (hit, total) = practiced.iter().fold((0usize, 0usize), |(h, t), s| {
        (
            h + s
                .agent_actions
                .iter()
                .filter(|&&a| a == s.expert_action)
                .count(),
            t + s.agent_actions.len(),
        )
    });
    hit as f64 / total.max(1) as f64
}

fn checkpoint(policy: &PolicyModel, config: &RunConfig, seed: u64, iteration: usize) -> Checkpoint {
    policy
        .to_checkpoint()
        .with_tag("algo", config.algo.as_str())
        .with_tag("seed", seed.to_string())
        .with_tag("iteration", iteration.to_string())
}

/// Behavior cloning followed by `config.iterations` reflection iterations for one
/// seed. Purely in memory.
pub fn train_seed(
    config: &RunConfig,
    env: &Env,
    dataset: &[Trajectory],
    reference: &OccupancyReference,
    seed: u64,
) -> Result<SeedRun> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("expert dataset"));
    }
    let ctx = SeedContext {
        config,
        env,
        dataset,
        samples: segment_all(dataset),
        reference,
        run_id: run_id(config, seed),
    };
    let mut log = Vec::new();
    let mut policy = PolicyModel::new(env, &config.hidden, derive_seed(seed, &[0x90]))?;
    let bc = train_bc(
        &mut policy,
        dataset,
        &BcConfig {
            epochs: config.bc_epochs,
            lr: config.bc_lr,
            batch_size: config.bc_batch,
            seed: derive_seed(seed, &[0xBC]),
        },
    )?;
    let bc_loss = bc.epoch_losses.last().copied().unwrap_or(f64::NAN);
    let mut rows = vec![ctx.metrics_row(0, &policy)?];
    let mut train_rows = vec![TrainRow {
        run_id: ctx.run_id.clone(),
        iteration: 0,
        items: dataset.len(),
        loss: bc_loss,
        disc_loss: None,
        mean_reward: None,
        practice_agreement: None,
        margin_before: None,
        margin_after: None,
    }];
    let mut checkpoints = vec![checkpoint(&policy, config, seed, 0)];
    log.push(format!(
        "{} iter 0 sft epochs={} loss={:.6} success={:.4} reward={:.4} js={:.6}",
        ctx.run_id,
        config.bc_epochs,
        bc_loss,
        rows[0].success_rate,
        rows[0].mean_final_reward,
        rows[0].js_div
    ));

    if config.algo != Algo::Sft {
        let mut inverse_state = match config.algo {
            Algo::Inverse | Algo::PpoFinal => Some(InverseState::new(
                env,
                &config.disc_hidden,
                derive_seed(seed, &[0x1D]),
            )?),
            _ => None,
        };
        for k in 1..=config.iterations {
            let it_seed = derive_seed(seed, &[0x17, k as u64]);
            let row = match (config.algo, inverse_state.as_mut()) {
                (Algo::Implicit, _) => ctx.implicit_step(&mut policy, k, it_seed)?,
                (Algo::TrajDpo, _) => ctx.traj_dpo_step(&mut policy, k, it_seed)?,
                (_, Some(st)) => ctx.inverse_step(&mut policy, st, k, seed)?,
                (algo, None) => unreachable!("{algo} has no reflection state"),
            };
            let metrics = ctx.metrics_row(k, &policy)?;
            log.push(format!(
                "{} iter {k} items={} loss={:.6} disc_loss={} reward={} success={:.4} final_reward={:.4} js={:.6}",
                ctx.run_id,
                row.items,
                row.loss,
                fmt_opt(row.disc_loss),
                fmt_opt(row.mean_reward),
                metrics.success_rate,
                metrics.mean_final_reward,
                metrics.js_div
            ));
            rows.push(metrics);
            train_rows.push(row);
            checkpoints.push(checkpoint(&policy, config, seed, k));
        }
    }
    Ok(SeedRun {
        seed,
        rows,
        train_rows,
        checkpoints,
        policy,
        log,
    })
}

/// Runs every seed in memory.
pub fn run_training(
    config: &RunConfig,
    dataset: &[Trajectory],
) -> Result<(RunRecord, Vec<SeedRun>)> {
    config.validate()?;
    let start = Instant::now();
    let env = Env::builtin(config.env);
    if let Some(t) = dataset
        .iter()
        .find(|t| t.steps.iter().any(|s| s.obs_id.0 >= env.num_observations()))
    {
        return Err(Error::InvalidArgument(format!(
            "trajectory {} does not belong to env {}",
            t.episode_id, config.env
        )));
    }
    let reference = OccupancyReference::new(&env, config.gamma)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&s| train_seed(config, &env, dataset, &reference, s))
        .collect::<Result<Vec<_>>>()?;
    let record = RunRecord {
        config: config.clone(),
        rows: runs.iter().flat_map(|r| r.rows.iter().cloned()).collect(),
        train_rows: runs
            .iter()
            .flat_map(|r| r.train_rows.iter().cloned())
            .collect(),
        final_reports: runs
            .iter()
            .map(|r| {
                let last = r.rows.last().expect("at least the sft row");
                (
                    r.seed,
                    EvalReport {
                        episodes: last.episodes,
                        success_rate: last.success_rate,
                        mean_final_reward: last.mean_final_reward,
                        mean_length: last.mean_length,
                    },
                )
            })
            .collect(),
        policies: runs.iter().map(|r| (r.seed, r.policy.clone())).collect(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((record, runs))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads the dataset, trains every seed and writes `metrics.csv`,
/// `train_metrics.csv`, `config.snapshot`, `run.log` and
/// `checkpoints/iter_<k>/policy_seed<s>.json` under `config.output_dir`.
pub fn cmd_train(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let path = config.dataset.as_ref().ok_or_else(|| {
        Error::Config("no expert dataset given (set `dataset` or pass --dataset)".into())
    })?;
    let dataset = load_trajectories(path)?;
    let (record, runs) = run_training(config, &dataset)?;

    let out = &config.output_dir;
    create_dir(out)?;
    let snapshot = out.join("config.snapshot");
    fs::write(&snapshot, config.to_toml()).map_err(|e| Error::io(&snapshot, e))?;
    if record.rows.is_empty() {
        return Err(Error::Empty("metric rows"));
    }
    write_csv(&out.join("metrics.csv"), &record.rows)?;
    write_csv(&out.join("train_metrics.csv"), &record.train_rows)?;
    for run in &runs {
        for (k, ck) in run.checkpoints.iter().enumerate() {
            let dir = out.join("checkpoints").join(format!("iter_{k}"));
            create_dir(&dir)?;
            ck.save(dir.join(format!("policy_seed{}.json", run.seed)))?;
        }
    }
    let log_path = out.join("run.log");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = format!(
        "env={} algo={} reward_mode={} iterations={} practice_m={} seeds={:?} dataset={} trajectories={}",
        config.env,
        config.algo,
        config.effective_reward_mode(),
        config.iterations,
        config.practice_m,
        config.seeds,
        path.display(),
        dataset.len()
    );
    for line in std::iter::once(&header).chain(runs.iter().flat_map(|r| r.log.iter())) {
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
    }
    Ok(record)
}
