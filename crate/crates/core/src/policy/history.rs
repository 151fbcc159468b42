use serde::{Deserialize, Serialize};

use crate::envs::{AgentAction, Env, Observation};
use crate::error::{Error, Result};
use crate::expert::{Step, Trajectory};

/// Version tag of the history encoding; stored in policy checkpoints.
pub const ENCODER_VERSION: &str = "history-bag-v1";

/// An interaction prefix `o_1, a_1, ..., a_{t-1}, o_t`: always one more observation
/// than actions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryState {
    observations: Vec<Observation>,
    actions: Vec<AgentAction>,
}

impl HistoryState {
    pub fn new(observations: Vec<Observation>, actions: Vec<AgentAction>) -> Result<Self> {
        if observations.len() != actions.len() + 1 {
            return Err(Error::MalformedHistory(format!(
                "{} observations and {} actions; a prefix must end with an observation",
                observations.len(),
                actions.len()
            )));
        }
        Ok(HistoryState {
            observations,
            actions,
        })
    }

    pub fn initial(obs: Observation) -> Self {
        HistoryState {
            observations: vec![obs],
            actions: Vec::new(),
        }
    }

    /// Prefix built from completed steps followed by the current observation.
    pub fn from_steps(steps: &[Step], current: Observation) -> Self {
        let mut observations: Vec<Observation> = steps.iter().map(|s| s.obs_id).collect();
        observations.push(current);
        HistoryState {
            observations,
            actions: steps.iter().map(|s| s.action_id).collect(),
        }
    }

    /// The decision prefix before each action of `traj`, in order.
    pub fn prefixes(traj: &Trajectory) -> Vec<HistoryState> {
        (0..traj.steps.len())
            .map(|i| Self::from_steps(&traj.steps[..i], traj.steps[i].obs_id))
            .collect()
    }

    pub fn push(&mut self, action: AgentAction, obs: Observation) {
        self.actions.push(action);
        self.observations.push(obs);
    }

    pub fn latest(&self) -> Observation {
        *self
            .observations
            .last()
            .expect("history holds at least one observation")
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn actions(&self) -> &[AgentAction] {
        &self.actions
    }

    /// Number of actions taken so far.
    pub fn step_index(&self) -> usize {
        self.actions.len()
    }

    /// Completed (observation, action) pairs of the prefix.
    pub fn steps(&self) -> Vec<Step> {
        self.observations
            .iter()
            .zip(&self.actions)
            .map(|(&obs_id, &action_id)| Step { obs_id, action_id })
            .collect()
    }
}

/// Fixed-length history features:
/// `[one-hot latest obs | counts of earlier obs | counts of actions | t / max_steps]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEncoder {
    pub num_observations: usize,
    pub num_actions: usize,
    pub max_steps: usize,
}

impl HistoryEncoder {
    pub fn for_env(env: &Env) -> Self {
        HistoryEncoder {
            num_observations: env.num_observations(),
            num_actions: env.num_actions(),
            max_steps: env.max_steps(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.num_observations + self.num_actions + 1
    }

    pub fn encode(&self, h: &HistoryState) -> Result<Vec<f64>> {
        let no = self.num_observations;
        let mut v = vec![0.0; self.dim()];
        let (prior, latest) = h.observations.split_at(h.observations.len() - 1);
        for &Observation(o) in latest.iter().chain(prior) {
            if o >= no {
                return Err(Error::MalformedHistory(format!(
                    "observation {o} outside vocabulary of {no}"
                )));
            }
        }
        v[latest[0].0] = 1.0;
        for &Observation(o) in prior {
            v[no + o] += 1.0;
        }
        for &AgentAction(a) in &h.actions {
            if a >= self.num_actions {
                return Err(Error::MalformedHistory(format!(
                    "action {a} outside vocabulary of {}",
                    self.num_actions
                )));
            }
            v[2 * no + a] += 1.0;
        }
        v[2 * no + self.num_actions] = h.actions.len() as f64 / self.max_steps as f64;
        Ok(v)
    }
}
