use crate::error::{Error, Result};

use super::config::ChainKeyConfig;
use super::{Outcome, Task};

pub const FORWARD: usize = 0;
pub const BACK: usize = 1;
pub const SIDE: usize = 2;
pub const PICK_UP_KEY: usize = 3;
pub const OPEN_DOOR: usize = 4;

const ACTION_NAMES: [&str; 5] = ["forward", "back", "side", "pick_up_key", "open_door"];

/// A corridor of rooms with a side room holding a key; the locked exit door is in
/// the last chain room.
///
/// Hidden state = (location, has_key) encoded as `location * 2 + has_key`, where
/// locations `0..rooms` are the chain and `rooms` is the key room; one extra
/// terminal state means "escaped". The observation is the room label plus the
/// carried-key flag, except that a failed `open_door` shows "door locked".
#[derive(Clone, Debug, PartialEq)]
pub struct ChainKey {
    config: ChainKeyConfig,
}

impl ChainKey {
    pub fn new(config: ChainKeyConfig) -> Result<Self> {
        if config.rooms < 2 {
            return Err(Error::Config("chainkey needs at least 2 rooms".into()));
        }
        if config.key_branch >= config.rooms {
            return Err(Error::Config(
                "chainkey key_branch must be a chain room".into(),
            ));
        }
        if config.max_steps == 0 {
            return Err(Error::Config("chainkey max_steps must be positive".into()));
        }
        Ok(ChainKey { config })
    }

    pub fn key_room(&self) -> usize {
        self.config.rooms
    }

    fn exit_room(&self) -> usize {
        self.config.rooms - 1
    }

    pub fn state(&self, location: usize, has_key: bool) -> usize {
        location * 2 + has_key as usize
    }

    pub fn escaped_state(&self) -> usize {
        (self.config.rooms + 1) * 2
    }

    pub fn locked_observation(&self) -> usize {
        self.escaped_state()
    }

    pub fn escaped_observation(&self) -> usize {
        self.escaped_state() + 1
    }
}

impl Task for ChainKey {
    fn num_states(&self) -> usize {
        self.escaped_state() + 1
    }

    fn num_observations(&self) -> usize {
        self.escaped_state() + 2
    }

    fn num_actions(&self) -> usize {
        5
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn is_terminal(&self, s: usize) -> bool {
        s == self.escaped_state()
    }

    fn initial_states(&self) -> Vec<usize> {
        vec![self.state(0, false)]
    }

    fn initial_observation(&self, s: usize) -> usize {
        s
    }

    fn legal(&self, s: usize) -> Vec<usize> {
        if self.is_terminal(s) {
            return Vec::new();
        }
        let (loc, key) = (s / 2, s % 2 == 1);
        let chain = loc < self.config.rooms;
        let mut out = Vec::new();
        if chain && loc < self.exit_room() {
            out.push(FORWARD);
        }
        if chain && loc > 0 {
            out.push(BACK);
        }
        if loc == self.config.key_branch || loc == self.key_room() {
            out.push(SIDE);
        }
        if loc == self.key_room() && !key {
            out.push(PICK_UP_KEY);
        }
        if loc == self.exit_room() {
            out.push(OPEN_DOOR);
        }
        out
    }

    fn legal_for_observation(&self, obs: usize) -> Vec<usize> {
        if obs == self.locked_observation() {
            self.legal(self.state(self.exit_room(), false))
        } else if obs == self.escaped_observation() {
            Vec::new()
        } else {
            self.legal(obs)
        }
    }

    fn transition(&self, s: usize, a: usize) -> Outcome {
        let (loc, key) = (s / 2, s % 2 == 1);
        let moved = |l: usize, k: bool| {
            let next = self.state(l, k);
            Outcome {
                next,
                reward: 0.0,
                observation: next,
            }
        };
        match a {
            FORWARD => moved(loc + 1, key),
            BACK => moved(loc - 1, key),
            SIDE if loc == self.key_room() => moved(self.config.key_branch, key),
            SIDE => moved(self.key_room(), key),
            PICK_UP_KEY => moved(loc, true),
            OPEN_DOOR if key => Outcome {
                next: self.escaped_state(),
                reward: 1.0,
                observation: self.escaped_observation(),
            },
            OPEN_DOOR => Outcome {
                next: s,
                reward: 0.0,
                observation: self.locked_observation(),
            },
            _ => unreachable!("action {a} is not legal"),
        }
    }

    fn observation_name(&self, obs: usize) -> String {
        if obs == self.locked_observation() {
            return "door locked".into();
        }
        if obs == self.escaped_observation() {
            return "escaped".into();
        }
        let (loc, key) = (obs / 2, obs % 2 == 1);
        let room = if loc == 0 {
            "start room".to_string()
        } else if loc == self.key_room() {
            "key room".to_string()
        } else {
            format!("room {loc}")
        };
        if key {
            format!("{room} +key")
        } else {
            room
        }
    }

    fn action_name(&self, a: usize) -> String {
        ACTION_NAMES[a].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{AgentAction, Env, Observation};

    fn env() -> (Env, ChainKey) {
        let ck = ChainKey::new(ChainKeyConfig::default()).unwrap();
        (Env::ChainKey(ck.clone()), ck)
    }

    #[test]
    fn starts_in_start_room_for_any_seed() {
        let (env, _) = env();
        for seed in 0..20 {
            let (_, obs) = env.reset(seed);
            assert_eq!(obs, Observation(0));
            assert_eq!(env.observation_name(obs), "start room");
        }
    }

    #[test]
    fn state_count_is_locations_times_key_flag_plus_exit() {
        let (env, _) = env();
        let mdp = env.underlying_mdp();
        assert_eq!(mdp.num_states, 7 * 2 + 1);
        assert_eq!(mdp.num_decision_states(), 14);
    }

    #[test]
    fn opening_without_key_shows_locked_door() {
        let (env, ck) = env();
        let (state, _) = env.reset_to(ck.state(5, false)).unwrap();
        let (next, res) = env.step(&state, AgentAction(OPEN_DOOR)).unwrap();
        assert!(!res.done);
        assert_eq!(env.observation_name(res.observation), "door locked");
        assert_eq!(next.hidden, state.hidden);
        assert_eq!(
            env.legal_for_observation(res.observation),
            env.legal_actions(&next)
        );
    }

    #[test]
    fn key_then_door_escapes() {
        let (env, _) = env();
        let plan = [
            FORWARD,
            FORWARD,
            SIDE,
            PICK_UP_KEY,
            SIDE,
            FORWARD,
            FORWARD,
            FORWARD,
            OPEN_DOOR,
        ];
        let (mut state, _) = env.reset(0);
        let mut last = None;
        for a in plan {
            let (next, res) = env.step(&state, AgentAction(a)).unwrap();
            state = next;
            last = Some(res);
        }
        let res = last.unwrap();
        assert!(res.done);
        assert_eq!(res.final_reward, Some(1.0));
        assert_eq!(env.observation_name(res.observation), "escaped");
    }

    #[test]
    fn pick_up_only_in_key_room_without_key() {
        let (_, ck) = env();
        assert_eq!(ck.legal(ck.state(6, false)), vec![SIDE, PICK_UP_KEY]);
        assert_eq!(ck.legal(ck.state(6, true)), vec![SIDE]);
        assert_eq!(ck.legal(ck.state(2, false)), vec![FORWARD, BACK, SIDE]);
        assert_eq!(ck.legal(ck.state(0, true)), vec![FORWARD]);
    }
}
