//! Inspection: cut expert trajectories after every action and let the agent
//! practice one action from each expert prefix.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::AgentAction;
use crate::error::{Error, Result};
use crate::expert::{read_jsonl, write_jsonl, Source, Step, Trajectory};
use crate::policy::{HistoryState, PolicyModel};
use crate::rng::rng_from;

pub const DEFAULT_PRACTICE: usize = 3;

/// One expert decision point together with the agent's practiced actions there.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSample {
    pub prefix: HistoryState,
    pub expert_action: AgentAction,
    pub agent_actions: Vec<AgentAction>,
    /// 1-based position of the decision within its source trajectory.
    pub step_index: usize,
    pub source_episode: u64,
    pub source_reward: f64,
}

/// One sample per action: sample `i` sees observations `1..=i` and actions `1..i`.
pub fn segment_trajectory(t: &Trajectory) -> Vec<StepSample> {
    HistoryState::prefixes(t)
        .into_iter()
        .zip(&t.steps)
        .enumerate()
        .map(|(i, (prefix, step))| StepSample {
            prefix,
            expert_action: step.action_id,
            agent_actions: Vec::new(),
            step_index: i + 1,
            source_episode: t.episode_id,
            source_reward: t.final_reward,
        })
        .collect()
}

pub fn segment_all(trajectories: &[Trajectory]) -> Vec<StepSample> {
    trajectories.iter().flat_map(segment_trajectory).collect()
}

/// Appends `m` sampled actions to every sample. Draw `k` at sample `s` uses the
/// stream `(seed, episode, step, k)`, so the result does not depend on scheduling.
pub fn practice(
    model: &PolicyModel,
    samples: &[StepSample],
    m: usize,
    seed: u64,
) -> Result<Vec<StepSample>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "practice count must be at least 1".into(),
        ));
    }
    samples
        .par_iter()
        .map(|s| {
            let scored = model.score(&s.prefix)?;
            let mut out = s.clone();
            out.agent_actions.extend((0..m as u64).map(|k| {
                let mut rng = rng_from(seed, &[s.source_episode, s.step_index as u64, k]);
                scored.sample(&mut rng)
            }));
            Ok(out)
        })
        .collect()
}

/// A step-level preference: at `prefix`, `winner` (expert) is preferred to `loser`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub prefix: HistoryState,
    pub winner: AgentAction,
    pub loser: AgentAction,
}

/// One pair per practiced action that differs from the expert's; repeated draws
/// yield repeated pairs.
pub fn build_pair_dataset(samples: &[StepSample]) -> Vec<PreferencePair> {
    samples
        .iter()
        .flat_map(|s| {
            s.agent_actions
                .iter()
                .filter(move |&&a| a != s.expert_action)
                .map(move |&a| PreferencePair {
                    prefix: s.prefix.clone(),
                    winner: s.expert_action,
                    loser: a,
                })
        })
        .collect()
}

/// On-disk form of a step sample: the trajectory record of the prefix plus the
/// expert's action (as the final step) extended with the practice fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSampleRecord {
    episode_id: u64,
    source: Source,
    steps: Vec<Step>,
    final_reward: f64,
    step_index: usize,
    expert_action: AgentAction,
    agent_actions: Vec<AgentAction>,
}

impl From<&StepSample> for StepSampleRecord {
    fn from(s: &StepSample) -> Self {
        let mut steps = s.prefix.steps();
        steps.push(Step {
            obs_id: s.prefix.latest(),
            action_id: s.expert_action,
        });
        StepSampleRecord {
            episode_id: s.source_episode,
            source: Source::Expert,
            steps,
            final_reward: s.source_reward,
            step_index: s.step_index,
            expert_action: s.expert_action,
            agent_actions: s.agent_actions.clone(),
        }
    }
}

impl StepSampleRecord {
    fn into_sample(self) -> std::result::Result<StepSample, String> {
        let Some((last, prior)) = self.steps.split_last() else {
            return Err("step sample has no steps".into());
        };
        if last.action_id != self.expert_action {
            return Err("last step action differs from expert_action".into());
        }
        if self.step_index != self.steps.len() {
            return Err(format!(
                "step_index {} but {} steps",
                self.step_index,
                self.steps.len()
            ));
        }
        Ok(StepSample {
            prefix: HistoryState::from_steps(prior, last.obs_id),
            expert_action: self.expert_action,
            agent_actions: self.agent_actions,
            step_index: self.step_index,
            source_episode: self.episode_id,
            source_reward: self.final_reward,
        })
    }
}

pub fn save_step_samples(path: impl AsRef<Path>, samples: &[StepSample]) -> Result<()> {
    let records: Vec<StepSampleRecord> = samples.iter().map(StepSampleRecord::from).collect();
    write_jsonl(path, &records)
}

pub fn load_step_samples(path: impl AsRef<Path>) -> Result<Vec<StepSample>> {
    let path = path.as_ref();
    let records: Vec<StepSampleRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_sample().map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvId, Observation};
    use crate::expert::sample_expert_trajectories;
    use proptest::prelude::*;

    fn traj(n: usize) -> Trajectory {
        Trajectory {
            episode_id: 9,
            source: Source::Expert,
            steps: (0..n)
                .map(|i| Step {
                    obs_id: Observation(i % 4),
                    action_id: AgentAction(i % 3),
                })
                .collect(),
            final_reward: 1.0,
        }
    }

    #[test]
    fn single_step_trajectory_gives_one_sample() {
        let s = segment_trajectory(&traj(1));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].prefix.step_index(), 0);
        assert_eq!(s[0].step_index, 1);
    }

    #[test]
    fn last_prefix_plus_action_rebuilds_trajectory() {
        let t = traj(3);
        let s = segment_trajectory(&t);
        assert_eq!(
            s.iter()
                .map(|x| x.prefix.actions().len())
                .collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        let last = s.last().unwrap();
        let mut steps = last.prefix.steps();
        steps.push(Step {
            obs_id: last.prefix.latest(),
            action_id: last.expert_action,
        });
        assert_eq!(steps, t.steps);
    }

    #[test]
    fn pairs_drop_matching_draws() {
        let mut s = segment_trajectory(&traj(1)).remove(0);
        let e = s.expert_action;
        s.agent_actions = vec![e, AgentAction(5), AgentAction(6)];
        let pairs = build_pair_dataset(&[s.clone()]);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.winner == e && p.loser != e));
        s.agent_actions = vec![e; 3];
        assert!(build_pair_dataset(&[s]).is_empty());
    }

    #[test]
    fn practice_is_seeded_and_keeps_prefixes() {
        let env = Env::builtin(EnvId::Grid);
        let data = sample_expert_trajectories(&env, 10, 0).unwrap();
        let samples = segment_all(&data);
        let model = PolicyModel::new(&env, &[8], 0).unwrap();
        let a = practice(&model, &samples, 3, 4).unwrap();
        let b = practice(&model, &samples, 3, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, practice(&model, &samples, 3, 5).unwrap());
        for (x, y) in a.iter().zip(&samples) {
            assert_eq!(x.prefix, y.prefix);
            assert_eq!(x.expert_action, y.expert_action);
            assert_eq!(x.agent_actions.len(), 3);
        }
        assert!(build_pair_dataset(&a).len() <= a.len() * 3);
        assert!(practice(&model, &samples, 0, 4).is_err());
    }

    #[test]
    fn forced_action_is_always_practiced() {
        let env = Env::builtin(EnvId::ChainKey);
        let data = sample_expert_trajectories(&env, 1, 0).unwrap();
        let model = PolicyModel::new(&env, &[8], 0).unwrap();
        let s = practice(&model, &segment_all(&data)[..1], 1, 0).unwrap();
        assert_eq!(s[0].agent_actions, vec![AgentAction(0)]);
    }

    #[test]
    fn step_samples_round_trip() {
        let env = Env::builtin(EnvId::MiniShop);
        let data = sample_expert_trajectories(&env, 5, 0).unwrap();
        let model = PolicyModel::new(&env, &[8], 0).unwrap();
        let s = practice(&model, &segment_all(&data), 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        save_step_samples(&path, &s).unwrap();
        assert_eq!(load_step_samples(&path).unwrap(), s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"agent_actions\":["));
    }

    proptest! {
        #[test]
        fn segmentation_is_nested_and_complete(n in 1usize..20) {
            let t = traj(n);
            let s = segment_trajectory(&t);
            prop_assert_eq!(s.len(), n);
            for w in s.windows(2) {
                let (a, b) = (&w[0].prefix, &w[1].prefix);
                prop_assert_eq!(&b.observations()[..a.observations().len()], a.observations());
                prop_assert_eq!(&b.actions()[..a.actions().len()], a.actions());
                prop_assert!(b.step_index() == a.step_index() + 1);
            }
        }
    }
}
