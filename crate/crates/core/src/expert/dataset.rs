use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::{AgentAction, Env, Observation};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::planner::ExpertPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Agent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub obs_id: Observation,
    pub action_id: AgentAction,
}

/// One episode as seen by the agent: the observation before each action, and the
/// action taken. The observation following the last action is not recorded.
///
/// `episode_id` is the seed passed to [`Env::reset`], so the episode's start can be
/// replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub episode_id: u64,
    pub source: Source,
    pub steps: Vec<Step>,
    pub final_reward: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = AgentAction> + '_ {
        self.steps.iter().map(|s| s.action_id)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.steps.is_empty() {
            return Err("trajectory has no steps".into());
        }
        if !(0.0..=1.0).contains(&self.final_reward) {
            return Err(format!("final_reward {} outside [0, 1]", self.final_reward));
        }
        Ok(())
    }
}

/// Writes one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads line-delimited JSON records; blank lines are skipped and errors carry the
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn save_trajectories(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    write_jsonl(path, trajectories)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        t.check().map_err(parse_err)?;
        out.push(t);
    }
    Ok(out)
}

/// Runs the expert for `count` episodes. Episode `i` starts from
/// `env.reset(derive_seed(seed, [i]))`; output is ordered by episode index.
pub fn sample_expert_trajectories(env: &Env, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "expert trajectory count must be at least 1".into(),
        ));
    }
    let policy = ExpertPolicy::plan(&env.underlying_mdp())?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| run_expert(env, &policy, derive_seed(seed, &[i])))
        .collect()
}

fn run_expert(env: &Env, policy: &ExpertPolicy, episode_id: u64) -> Result<Trajectory> {
    let (mut state, mut obs) = env.reset(episode_id);
    let mut steps = Vec::new();
    loop {
        let action = policy
            .action(state.hidden)
            .expect("non-terminal state has an expert action");
        steps.push(Step {
            obs_id: obs,
            action_id: action,
        });
        let (next, res) = env.step(&state, action)?;
        state = next;
        obs = res.observation;
        if let Some(reward) = res.final_reward {
            if reward < env.success_threshold() {
                return Err(Error::ExpertFailure {
                    episode: episode_id,
                    reward,
                });
            }
            return Ok(Trajectory {
                episode_id,
                source: Source::Expert,
                steps,
                final_reward: reward,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;

    #[test]
    fn expert_always_succeeds() {
        for id in EnvId::ALL {
            let env = Env::builtin(id);
            let trajs = sample_expert_trajectories(&env, 100, 5).unwrap();
            assert_eq!(trajs.len(), 100);
            assert!(trajs
                .iter()
                .all(|t| t.final_reward == 1.0 && t.len() <= env.max_steps()));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let env = Env::builtin(EnvId::MiniShop);
        assert_eq!(
            sample_expert_trajectories(&env, 20, 9).unwrap(),
            sample_expert_trajectories(&env, 20, 9).unwrap()
        );
    }

    #[test]
    fn zero_count_is_an_error() {
        assert!(sample_expert_trajectories(&Env::builtin(EnvId::Grid), 0, 0).is_err());
    }

    #[test]
    fn chainkey_picks_key_before_door() {
        let env = Env::builtin(EnvId::ChainKey);
        let t = &sample_expert_trajectories(&env, 1, 0).unwrap()[0];
        let acts: Vec<usize> = t.actions().map(|a| a.0).collect();
        assert_eq!(acts, vec![0, 0, 2, 3, 2, 0, 0, 0, 4]);
    }

    #[test]
    fn round_trip_preserves_order() {
        let env = Env::builtin(EnvId::Grid);
        let trajs = sample_expert_trajectories(&env, 1000, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expert.jsonl");
        save_trajectories(&path, &trajs).unwrap();
        assert_eq!(load_trajectories(&path).unwrap(), trajs);
        save_trajectories(&path, &trajs[..1]).unwrap();
        assert_eq!(load_trajectories(&path).unwrap(), trajs[..1].to_vec());
    }

    #[test]
    fn record_layout_uses_documented_field_names() {
        let t = Trajectory {
            episode_id: 3,
            source: Source::Expert,
            steps: vec![Step {
                obs_id: Observation(4),
                action_id: AgentAction(1),
            }],
            final_reward: 1.0,
        };
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"episode_id":3,"source":"expert","steps":[{"obs_id":4,"action_id":1}],"final_reward":1.0}"#
        );
    }

    #[test]
    fn truncated_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"episode_id":0,"source":"expert","steps":[{"obs_id":0,"action_id":1}],"final_reward":1.0}"#;
        std::fs::write(&path, format!("{good}\n{good}\n{}\n", &good[..30])).unwrap();
        match load_trajectories(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, good.replace("1.0}", "1.5}")).unwrap();
        assert!(matches!(
            load_trajectories(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
