use rayon::prelude::*;
use serde::Serialize;

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::expert::{Source, Step, Trajectory};
use crate::policy::HistoryState;
use crate::rng::{derive_seed, rng_from};

use super::occupancy::RolloutPolicy;

/// Version of the metrics CSV layout ([`METRICS_HEADER`]).
pub const METRICS_SCHEMA_VERSION: u32 = 1;

pub const METRICS_HEADER: [&str; 10] = [
    "run_id",
    "iteration",
    "env",
    "algo",
    "episodes",
    "success_rate",
    "mean_final_reward",
    "mean_length",
    "js_div",
    "kl_div",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Greedy,
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub trajectory: Trajectory,
    /// Hidden state before each action.
    pub hidden: Vec<usize>,
    pub final_reward: f64,
}

/// Plays one episode from `env.reset(reset_seed)`. Sampled actions come from the
/// stream `(sample_seed, reset_seed)`.
pub fn run_episode<P: RolloutPolicy + ?Sized>(
    env: &Env,
    policy: &P,
    reset_seed: u64,
    mode: EvalMode,
    sample_seed: u64,
) -> Result<EpisodeResult> {
    let mut rng = rng_from(sample_seed, &[reset_seed, 0xE7A1]);
    let (mut state, obs) = env.reset(reset_seed);
    let mut h = HistoryState::initial(obs);
    let mut steps = Vec::new();
    let mut hidden = Vec::new();
    loop {
        let a = match mode {
            EvalMode::Greedy => policy.greedy(state.hidden, &h)?,
            EvalMode::Sample => policy.sample(state.hidden, &h, &mut rng)?,
        };
        steps.push(Step {
            obs_id: h.latest(),
            action_id: a,
        });
        hidden.push(state.hidden);
        let (next, res) = env.step(&state, a)?;
        if let Some(final_reward) = res.final_reward {
            return Ok(EpisodeResult {
                trajectory: Trajectory {
                    episode_id: reset_seed,
                    source: Source::Agent,
                    steps,
                    final_reward,
                },
                hidden,
                final_reward,
            });
        }
        h.push(a, res.observation);
        state = next;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_final_reward: f64,
    pub mean_length: f64,
}

/// Runs `episodes` episodes; episode `i` resets with `derive_seed(seed, [i])`.
pub fn evaluate<P: RolloutPolicy + ?Sized>(
    env: &Env,
    policy: &P,
    episodes: usize,
    seed: u64,
    mode: EvalMode,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let results = (0..episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(env, policy, derive_seed(seed, &[i]), mode, seed))
        .collect::<Result<Vec<_>>>()?;
    let n = episodes as f64;
    let threshold = env.success_threshold();
    Ok(EvalReport {
        episodes,
        success_rate: results
            .iter()
            .filter(|r| r.final_reward >= threshold)
            .count() as f64
            / n,
        mean_final_reward: results.iter().map(|r| r.final_reward).sum::<f64>() / n,
        mean_length: results
            .iter()
            .map(|r| r.trajectory.len() as f64)
            .sum::<f64>()
            / n,
    })
}

/// One row of `metrics.csv`; columns follow [`METRICS_HEADER`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub iteration: usize,
    pub env: String,
    pub algo: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_final_reward: f64,
    pub mean_length: f64,
    pub js_div: f64,
    pub kl_div: f64,
}

impl MetricsRow {
    pub fn new(
        run_id: &str,
        iteration: usize,
        env: &str,
        algo: &str,
        report: &EvalReport,
        js_div: f64,
        kl_div: f64,
    ) -> Self {
        MetricsRow {
            run_id: run_id.to_string(),
            iteration,
            env: env.to_string(),
            algo: algo.to_string(),
            episodes: report.episodes,
            success_rate: report.success_rate,
            mean_final_reward: report.mean_final_reward,
            mean_length: report.mean_length,
            js_div,
            kl_div,
        }
    }
}
