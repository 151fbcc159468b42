use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::envs::{Env, EnvId};
use crate::error::{Error, Result};
use crate::expert::{sample_expert_trajectories, save_trajectories, Trajectory};
use crate::metrics::{evaluate, EvalMode, EvalReport, MetricsRow};
use crate::numcore::Checkpoint;
use crate::policy::PolicyModel;
use crate::reflect_inverse::RewardMode;

use super::config::{Algo, RunConfig};
use super::run::{cmd_train, write_csv, OccupancyReference, RunRecord};

/// Samples `count` expert trajectories and writes them as JSONL.
pub fn cmd_gen_expert(
    env_id: EnvId,
    count: usize,
    seed: u64,
    out_path: &Path,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let env = Env::builtin(env_id);
    let data = sample_expert_trajectories(&env, count, seed)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_trajectories(out_path, &data)?;
    Ok(data)
}

/// Loads a policy checkpoint and evaluates it; the row carries the checkpoint's
/// divergences from the expert.
pub fn cmd_eval(
    checkpoint: &Path,
    env_id: EnvId,
    episodes: usize,
    seed: u64,
    mode: EvalMode,
) -> Result<(EvalReport, MetricsRow)> {
    let env = Env::builtin(env_id);
    let ck = Checkpoint::load(checkpoint)?;
    let policy = PolicyModel::from_checkpoint(&ck, &env)?;
    let report = evaluate(&env, &policy, episodes, seed, mode)?;
    let (js, kl) = OccupancyReference::new(&env, 0.99)?.divergences(&env, &policy)?;
    let run_id = format!("eval-{}", checkpoint.display());
    let algo = ck.tag("algo").unwrap_or("unknown");
    let iteration = ck
        .tag("iteration")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let row = MetricsRow::new(&run_id, iteration, env_id.as_str(), algo, &report, js, kl);
    Ok((report, row))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Iterations,
    Practice,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Iterations => "iterations",
            SweepAxis::Practice => "practice_m",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterations" | "iters" => Ok(SweepAxis::Iterations),
            "practice" | "practice_m" => Ok(SweepAxis::Practice),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected iterations or practice)"
            ))),
        }
    }
}

/// Long-format sweep row: one per (value, seed, iteration).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: usize,
    pub run_id: String,
    pub iteration: usize,
    pub success_rate: f64,
    pub mean_final_reward: f64,
    pub mean_length: f64,
    pub js_div: f64,
    pub kl_div: f64,
}

impl SweepRow {
    fn new(axis: SweepAxis, value: usize, m: MetricsRow) -> Self {
        SweepRow {
            axis: axis.as_str().to_string(),
            value,
            run_id: m.run_id,
            iteration: m.iteration,
            success_rate: m.success_rate,
            mean_final_reward: m.mean_final_reward,
            mean_length: m.mean_length,
            js_div: m.js_div,
            kl_div: m.kl_div,
        }
    }
}

/// One training run per axis value (each over all seeds). Runs land in
/// `<output_dir>/<axis>_<value>` and the rows are gathered in `<output_dir>/sweep.csv`.
pub fn cmd_sweep(base: &RunConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &v in values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Iterations => cfg.iterations = v,
            SweepAxis::Practice => cfg.practice_m = v,
        }
        cfg.output_dir = base.output_dir.join(format!("{}_{v}", axis.as_str()));
        let record = cmd_train(&cfg)?;
        rows.extend(record.rows.into_iter().map(|m| SweepRow::new(axis, v, m)));
    }
    fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    write_csv(&base.output_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// Mean and standard error over seeds of the last iteration's `mean_final_reward`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationCell {
    pub reward_mode: String,
    pub seeds: usize,
    pub mean_final_reward: f64,
    pub stderr: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    /// In the order step, final, both.
    pub cells: Vec<AblationCell>,
    /// `both >= step >= final`, each gap tolerated down to minus one standard error
    /// of the difference.
    pub ordering_holds: bool,
    /// Strictly `step > final` on the means.
    pub step_beats_final: bool,
}

impl AblationTable {
    pub fn cell(&self, mode: RewardMode) -> &AblationCell {
        self.cells
            .iter()
            .find(|c| c.reward_mode == mode.as_str())
            .expect("all three modes are present")
    }

    pub fn note(&self) -> String {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        format!(
            "ordering both >= step >= final: {}; step > final: {}",
            verdict(self.ordering_holds),
            verdict(self.step_beats_final)
        )
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn final_rows(record: &RunRecord) -> Vec<&MetricsRow> {
    let last = record.rows.iter().map(|r| r.iteration).max().unwrap_or(0);
    record.rows.iter().filter(|r| r.iteration == last).collect()
}

/// Trains the inverse algorithm under each reward mode (step, final, both) and
/// tabulates `mean_final_reward`. Writes `<output_dir>/ablation.csv`.
pub fn cmd_ablation_rewardtype(base: &RunConfig, seeds: &[u64]) -> Result<AblationTable> {
    if seeds.len() < 3 {
        return Err(Error::Config(format!(
            "reward ablation needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let mut cells = Vec::new();
    for mode in [RewardMode::Step, RewardMode::Final, RewardMode::Both] {
        let cfg = RunConfig {
            algo: Algo::Inverse,
            reward_mode: Some(mode),
            seeds: seeds.to_vec(),
            output_dir: base.output_dir.join(format!("reward_{mode}")),
            ..base.clone()
        };
        let record = cmd_train(&cfg)?;
        let rows = final_rows(&record);
        let rewards: Vec<f64> = rows.iter().map(|r| r.mean_final_reward).collect();
        let (mean, stderr) = mean_stderr(&rewards);
        cells.push(AblationCell {
            reward_mode: mode.as_str().to_string(),
            seeds: rows.len(),
            mean_final_reward: mean,
            stderr,
            success_rate: rows.iter().map(|r| r.success_rate).sum::<f64>() / rows.len() as f64,
        });
    }
    let table = ablation_verdict(cells);
    fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    write_csv(&base.output_dir.join("ablation.csv"), &table.cells)?;
    Ok(table)
}

/// Computes the ordering flags for cells given in step, final, both order.
pub fn ablation_verdict(cells: Vec<AblationCell>) -> AblationTable {
    let geq = |a: &AblationCell, b: &AblationCell| {
        a.mean_final_reward + (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() >= b.mean_final_reward
    };
    let (step, fin, both) = (&cells[0], &cells[1], &cells[2]);
    AblationTable {
        ordering_holds: geq(both, step) && geq(step, fin),
        step_beats_final: step.mean_final_reward > fin.mean_final_reward,
        cells,
    }
}
