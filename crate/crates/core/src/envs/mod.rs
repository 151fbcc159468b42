//! Partially observable episodic tasks backed by small, fully enumerable hidden MDPs.
//!
//! Every environment exposes two views of the same dynamics: an episodic
//! [`Env::reset`]/[`Env::step`] interface that only reveals observations to the agent,
//! and [`Env::underlying_mdp`], the exact tabular model used by the expert planner
//! and the occupancy oracles. Hidden states are identified by their MDP index.

mod chainkey;
mod config;
mod grid;
mod mdp;
mod minishop;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

pub use chainkey::ChainKey;
pub use config::{ChainKeyConfig, EnvConfig, GridConfig, MiniShopConfig, ENV_CONFIG_SCHEMA};
pub use grid::GridTreasure;
pub use mdp::{TabularMdp, Transition};
pub use minishop::MiniShop;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentAction(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Grid,
    ChainKey,
    MiniShop,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Grid, EnvId::ChainKey, EnvId::MiniShop];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Grid => "grid",
            EnvId::ChainKey => "chainkey",
            EnvId::MiniShop => "minishop",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(EnvId::Grid),
            "chainkey" => Ok(EnvId::ChainKey),
            "minishop" => Ok(EnvId::MiniShop),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

/// Runtime state of one episode. `hidden` is the index of the full state in the
/// underlying MDP and is never shown to the agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub hidden: usize,
    pub step_count: usize,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub done: bool,
    /// Present only once the episode has ended; always in `[0, 1]`.
    pub final_reward: Option<f64>,
}

/// Deterministic result of applying a legal action to a hidden state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Outcome {
    pub next: usize,
    pub reward: f64,
    pub observation: usize,
}

/// Task dynamics shared by the episodic interface and the tabular model.
pub(crate) trait Task {
    fn num_states(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn is_terminal(&self, s: usize) -> bool;
    /// Support of the (uniform) initial-state distribution, ascending.
    fn initial_states(&self) -> Vec<usize>;
    fn initial_observation(&self, s: usize) -> usize;
    /// Legal actions in ascending id order; empty for terminal states.
    fn legal(&self, s: usize) -> Vec<usize>;
    fn legal_for_observation(&self, obs: usize) -> Vec<usize>;
    fn transition(&self, s: usize, a: usize) -> Outcome;
    fn observation_name(&self, obs: usize) -> String;
    fn action_name(&self, a: usize) -> String;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Env {
    Grid(GridTreasure),
    ChainKey(ChainKey),
    MiniShop(MiniShop),
}

macro_rules! dispatch {
    ($self:expr, $t:ident => $body:expr) => {
        match $self {
            Env::Grid($t) => $body,
            Env::ChainKey($t) => $body,
            Env::MiniShop($t) => $body,
        }
    };
}

impl Env {
    pub fn new(id: EnvId, config: &EnvConfig) -> Result<Self> {
        Ok(match id {
            EnvId::Grid => Env::Grid(GridTreasure::new(config.grid.clone())?),
            EnvId::ChainKey => Env::ChainKey(ChainKey::new(config.chainkey.clone())?),
            EnvId::MiniShop => Env::MiniShop(MiniShop::new(config.minishop.clone())?),
        })
    }

    /// One of the three built-in environments with default configuration.
    pub fn builtin(id: EnvId) -> Self {
        Self::new(id, &EnvConfig::default()).expect("default configs are valid")
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    pub fn id(&self) -> EnvId {
        match self {
            Env::Grid(_) => EnvId::Grid,
            Env::ChainKey(_) => EnvId::ChainKey,
            Env::MiniShop(_) => EnvId::MiniShop,
        }
    }

    fn task(&self) -> &dyn Task {
        dispatch!(self, t => t)
    }

    pub fn num_observations(&self) -> usize {
        self.task().num_observations()
    }

    pub fn num_actions(&self) -> usize {
        self.task().num_actions()
    }

    pub fn num_states(&self) -> usize {
        self.task().num_states()
    }

    pub fn max_steps(&self) -> usize {
        self.task().max_steps()
    }

    /// Threshold on the final reward counted as task success.
    pub fn success_threshold(&self) -> f64 {
        1.0
    }

    /// Starts a fresh episode; the initial hidden state is drawn uniformly from the
    /// initial-state support using `seed`.
    pub fn reset(&self, seed: u64) -> (EnvState, Observation) {
        let starts = self.task().initial_states();
        let s = if starts.len() == 1 {
            starts[0]
        } else {
            starts[rng_from(seed, &[0x5EED]).gen_range(0..starts.len())]
        };
        self.reset_to(s).expect("initial states are valid")
    }

    /// Starts an episode in a given hidden state (oracle access).
    pub fn reset_to(&self, hidden: usize) -> Result<(EnvState, Observation)> {
        let t = self.task();
        if hidden >= t.num_states() || t.is_terminal(hidden) {
            return Err(Error::InvalidArgument(format!(
                "hidden state {hidden} cannot start an episode"
            )));
        }
        let state = EnvState {
            hidden,
            step_count: 0,
            done: false,
        };
        Ok((state, Observation(t.initial_observation(hidden))))
    }

    pub fn step(&self, state: &EnvState, action: AgentAction) -> Result<(EnvState, StepResult)> {
        if state.done {
            return Err(Error::EpisodeDone);
        }
        let t = self.task();
        if !t.legal(state.hidden).contains(&action.0) {
            return Err(Error::IllegalAction { action: action.0 });
        }
        let out = t.transition(state.hidden, action.0);
        let step_count = state.step_count + 1;
        let (done, final_reward) = if t.is_terminal(out.next) {
            (true, Some(out.reward))
        } else if step_count >= t.max_steps() {
            (true, Some(0.0))
        } else {
            (false, None)
        };
        let next = EnvState {
            hidden: out.next,
            step_count,
            done,
        };
        Ok((
            next,
            StepResult {
                observation: Observation(out.observation),
                done,
                final_reward,
            },
        ))
    }

    pub fn legal_actions(&self, state: &EnvState) -> Vec<AgentAction> {
        if state.done {
            return Vec::new();
        }
        self.task()
            .legal(state.hidden)
            .into_iter()
            .map(AgentAction)
            .collect()
    }

    /// Legal actions are a function of the latest observation, so the agent can
    /// mask its policy without access to the hidden state.
    pub fn legal_for_observation(&self, obs: Observation) -> Vec<AgentAction> {
        self.task()
            .legal_for_observation(obs.0)
            .into_iter()
            .map(AgentAction)
            .collect()
    }

    /// One-hot encoding over the observation vocabulary.
    pub fn observation_features(&self, obs: Observation) -> Vec<f64> {
        let mut v = vec![0.0; self.num_observations()];
        v[obs.0] = 1.0;
        v
    }

    pub fn observation_name(&self, obs: Observation) -> String {
        self.task().observation_name(obs.0)
    }

    pub fn action_name(&self, a: AgentAction) -> String {
        self.task().action_name(a.0)
    }

    pub fn underlying_mdp(&self) -> TabularMdp {
        let t = self.task();
        let n = t.num_states();
        let legal: Vec<Vec<usize>> = (0..n).map(|s| t.legal(s)).collect();
        let transitions = (0..n)
            .map(|s| {
                let mut row = vec![Vec::new(); t.num_actions()];
                for &a in &legal[s] {
                    let o = t.transition(s, a);
                    row[a].push(Transition {
                        prob: 1.0,
                        next: o.next,
                        reward: o.reward,
                    });
                }
                row
            })
            .collect();
        let starts = t.initial_states();
        let mut initial = vec![0.0; n];
        for &s in &starts {
            initial[s] = 1.0 / starts.len() as f64;
        }
        TabularMdp {
            num_states: n,
            num_actions: t.num_actions(),
            legal,
            terminal: (0..n).map(|s| t.is_terminal(s)).collect(),
            transitions,
            initial,
            horizon: Some(t.max_steps()),
        }
    }

    /// Initial observation emitted when an episode starts in `hidden`.
    pub fn initial_observation(&self, hidden: usize) -> Observation {
        Observation(self.task().initial_observation(hidden))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rollout(
        env: &Env,
        seed: u64,
        pick: impl Fn(&[AgentAction], usize) -> AgentAction,
    ) -> (Vec<usize>, StepResult) {
        let (mut state, _) = env.reset(seed);
        let mut hidden = vec![state.hidden];
        loop {
            let legal = env.legal_actions(&state);
            let a = pick(&legal, state.step_count);
            let (next, res) = env.step(&state, a).unwrap();
            hidden.push(next.hidden);
            state = next;
            if res.done {
                return (hidden, res);
            }
        }
    }

    #[test]
    fn unknown_env_is_rejected() {
        assert!(matches!(
            Env::from_name("webshop"),
            Err(Error::UnknownEnv(_))
        ));
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        for id in EnvId::ALL {
            let env = Env::builtin(id);
            assert_eq!(env.reset(0), env.reset(0));
        }
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let env = Env::builtin(EnvId::Grid);
        let (hidden, _) = rollout(&env, 3, |l, _| l[0]);
        let done = EnvState {
            hidden: *hidden.last().unwrap(),
            step_count: 20,
            done: true,
        };
        assert!(matches!(
            env.step(&done, AgentAction(0)),
            Err(Error::EpisodeDone)
        ));
        assert!(env.legal_actions(&done).is_empty());
    }

    #[test]
    fn mdp_rows_are_stochastic() {
        for id in EnvId::ALL {
            let mdp = Env::builtin(id).underlying_mdp();
            mdp.validate().unwrap();
            for s in 0..mdp.num_states {
                for &a in &mdp.legal[s] {
                    let total: f64 = mdp.transitions[s][a].iter().map(|t| t.prob).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
            assert!((mdp.initial.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_encoding_is_injective() {
        for id in EnvId::ALL {
            let env = Env::builtin(id);
            let feats: Vec<Vec<f64>> = (0..env.num_observations())
                .map(|o| env.observation_features(Observation(o)))
                .collect();
            for i in 0..feats.len() {
                for j in 0..i {
                    assert_ne!(feats[i], feats[j]);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_episodes_terminate_with_bounded_reward(seed in 0u64..10_000, env_ix in 0usize..3) {
            let env = Env::builtin(EnvId::ALL[env_ix]);
            let mut r = rng_from(seed, &[1]);
            let (mut state, mut obs) = env.reset(seed);
            let mut steps = 0;
            loop {
                let legal = env.legal_actions(&state);
                prop_assert!(!legal.is_empty());
                prop_assert_eq!(env.legal_for_observation(obs), legal.clone());
                let a = legal[r.gen_range(0..legal.len())];
                let (next, res) = env.step(&state, a).unwrap();
                steps += 1;
                prop_assert_eq!(next.step_count, steps);
                state = next;
                obs = res.observation;
                if res.done {
                    let rew = res.final_reward.unwrap();
                    prop_assert!((0.0..=1.0).contains(&rew));
                    if env.id() != EnvId::MiniShop {
                        prop_assert!(rew == 0.0 || rew == 1.0);
                    }
                    break;
                }
                prop_assert!(res.final_reward.is_none());
            }
            prop_assert!(steps <= env.max_steps());
        }

        #[test]
        fn step_and_mdp_agree_action_for_action(seed in 0u64..10_000, env_ix in 0usize..3) {
            let env = Env::builtin(EnvId::ALL[env_ix]);
            let mdp = env.underlying_mdp();
            let mut r = rng_from(seed, &[2]);
            let (mut state, _) = env.reset(seed);
            prop_assert!(mdp.initial[state.hidden] > 0.0);
            let mut s = state.hidden;
            while !state.done {
                let legal = env.legal_actions(&state);
                prop_assert_eq!(legal.iter().map(|a| a.0).collect::<Vec<_>>(), mdp.legal[s].clone());
                let a = legal[r.gen_range(0..legal.len())];
                let (next, res) = env.step(&state, a).unwrap();
                let t = &mdp.transitions[s][a.0][0];
                prop_assert_eq!(t.next, next.hidden);
                if mdp.terminal[t.next] {
                    prop_assert_eq!(res.final_reward, Some(t.reward));
                }
                s = t.next;
                state = next;
            }
        }
    }
}
