use crate::envs::{AgentAction, TabularMdp};
use crate::error::{Error, Result};

/// Discount used for expert planning; favors the shortest successful route.
pub const EXPERT_GAMMA: f64 = 0.99;
/// Default convergence tolerance for [`value_iteration`].
pub const PLANNER_TOL: f64 = 1e-12;
/// Action values closer than this count as tied.
const TIE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub iterations: usize,
}

fn q_value(mdp: &TabularMdp, values: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
    mdp.transitions[s][a]
        .iter()
        .map(|t| t.prob * (t.reward + gamma * values[t.next]))
        .sum()
}

fn backup(mdp: &TabularMdp, values: &[f64], gamma: f64, s: usize) -> f64 {
    if mdp.terminal[s] {
        return 0.0;
    }
    mdp.legal[s]
        .iter()
        .map(|&a| q_value(mdp, values, gamma, s, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sup-norm of the Bellman optimality residual.
pub fn bellman_residual(mdp: &TabularMdp, values: &[f64], gamma: f64) -> f64 {
    (0..mdp.num_states)
        .map(|s| (backup(mdp, values, gamma, s) - values[s]).abs())
        .fold(0.0, f64::max)
}

/// Synchronous value iteration from zero until the residual drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<ValueTable> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    if gamma == 1.0 && !mdp.is_episodic() {
        return Err(Error::NonEpisodic);
    }
    let mut values = vec![0.0; mdp.num_states];
    let mut iterations = 0;
    loop {
        let next: Vec<f64> = (0..mdp.num_states)
            .map(|s| backup(mdp, &values, gamma, s))
            .collect();
        iterations += 1;
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if delta < tol {
            return Ok(ValueTable { values, iterations });
        }
    }
}

/// Deterministic state-to-action map; `None` for terminal states.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertPolicy {
    actions: Vec<Option<AgentAction>>,
}

impl ExpertPolicy {
    pub fn action(&self, hidden: usize) -> Option<AgentAction> {
        self.actions[hidden]
    }

    pub fn actions(&self) -> &[Option<AgentAction>] {
        &self.actions
    }

    /// Plans with [`EXPERT_GAMMA`] on `mdp`.
    pub fn plan(mdp: &TabularMdp) -> Result<Self> {
        let values = value_iteration(mdp, EXPERT_GAMMA, PLANNER_TOL)?;
        Ok(expert_policy(mdp, &values, EXPERT_GAMMA))
    }
}

/// Greedy one-step lookahead policy; ties go to the lowest action id.
pub fn expert_policy(mdp: &TabularMdp, values: &ValueTable, gamma: f64) -> ExpertPolicy {
    let actions = (0..mdp.num_states)
        .map(|s| {
            let qs: Vec<(usize, f64)> = mdp.legal[s]
                .iter()
                .map(|&a| (a, q_value(mdp, &values.values, gamma, s, a)))
                .collect();
            let best = qs.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
            qs.iter()
                .find(|&&(_, q)| q >= best - TIE_EPS)
                .map(|&(a, _)| AgentAction(a))
        })
        .collect();
    ExpertPolicy { actions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvId, Transition};
    use std::collections::VecDeque;

    #[test]
    fn single_step_chain() {
        let mdp = TabularMdp::chain(1, 1.0);
        let v = value_iteration(&mdp, 0.9, 1e-12).unwrap();
        assert_eq!(v.values, vec![1.0, 0.0]);
    }

    #[test]
    fn longer_chain_discounts() {
        let mdp = TabularMdp::chain(3, 1.0);
        let v = value_iteration(&mdp, 0.5, 1e-12).unwrap();
        assert_eq!(v.values, vec![0.25, 0.5, 1.0, 0.0]);
        let v1 = value_iteration(&mdp, 1.0, 1e-12).unwrap();
        assert_eq!(v1.values, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn bad_arguments() {
        let mdp = TabularMdp::chain(1, 1.0);
        assert!(value_iteration(&mdp, 0.0, 1e-6).is_err());
        assert!(value_iteration(&mdp, 0.9, 0.0).is_err());
    }

    #[test]
    fn cyclic_mdp_with_unit_gamma_is_rejected() {
        let env = Env::builtin(EnvId::Grid);
        let mdp = env.underlying_mdp();
        assert!(!mdp.is_episodic());
        assert!(matches!(
            value_iteration(&mdp, 1.0, 1e-9),
            Err(Error::NonEpisodic)
        ));
        assert!(value_iteration(&mdp, 0.99, 1e-9).is_ok());
    }

    #[test]
    fn ties_go_to_lowest_action() {
        // Two actions leading to the same terminal with equal reward.
        let t = Transition {
            prob: 1.0,
            next: 1,
            reward: 1.0,
        };
        let mdp = TabularMdp {
            num_states: 2,
            num_actions: 3,
            legal: vec![vec![1, 2], vec![]],
            terminal: vec![false, true],
            transitions: vec![vec![vec![], vec![t], vec![t]], vec![vec![], vec![], vec![]]],
            initial: vec![1.0, 0.0],
            horizon: None,
        };
        mdp.validate().unwrap();
        let v = value_iteration(&mdp, 0.9, 1e-12).unwrap();
        for _ in 0..3 {
            assert_eq!(expert_policy(&mdp, &v, 0.9).action(0), Some(AgentAction(1)));
        }
    }

    fn grid_distances(env: &Env) -> Vec<Option<usize>> {
        let mdp = env.underlying_mdp();
        let goal = mdp.terminal.iter().position(|&t| t).unwrap();
        let mut dist = vec![None; mdp.num_states];
        dist[goal] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(u) = queue.pop_front() {
            for s in 0..mdp.num_states {
                let reaches = mdp.legal[s]
                    .iter()
                    .any(|&a| mdp.transitions[s][a][0].next == u);
                if reaches && dist[s].is_none() {
                    dist[s] = Some(dist[u].unwrap() + 1);
                    queue.push_back(s);
                }
            }
        }
        dist
    }

    #[test]
    fn grid_values_follow_shortest_paths() {
        let env = Env::builtin(EnvId::Grid);
        let mdp = env.underlying_mdp();
        let v = value_iteration(&mdp, EXPERT_GAMMA, PLANNER_TOL).unwrap();
        assert!(bellman_residual(&mdp, &v.values, EXPERT_GAMMA) < PLANNER_TOL);
        for (s, d) in grid_distances(&env).into_iter().enumerate() {
            let d = d.unwrap();
            let expect = if d == 0 {
                0.0
            } else {
                EXPERT_GAMMA.powi(d as i32 - 1)
            };
            assert!((v.values[s] - expect).abs() < 1e-10, "state {s}");
        }
    }

    #[test]
    fn chainkey_expert_picks_up_key() {
        use crate::envs::ChainKey;
        let env = Env::builtin(EnvId::ChainKey);
        let Env::ChainKey(ck) = &env else {
            unreachable!()
        };
        let policy = ExpertPolicy::plan(&env.underlying_mdp()).unwrap();
        let ck: &ChainKey = ck;
        assert_eq!(
            policy.action(ck.state(ck.key_room(), false)),
            Some(AgentAction(3))
        );
        assert_eq!(policy.action(ck.state(5, true)), Some(AgentAction(4)));
        assert_eq!(policy.action(ck.escaped_state()), None);
    }

    #[test]
    fn goal_adjacent_moves_into_goal() {
        let env = Env::builtin(EnvId::Grid);
        let Env::Grid(g) = &env else { unreachable!() };
        let policy = ExpertPolicy::plan(&env.underlying_mdp()).unwrap();
        assert_eq!(policy.action(g.cell(1, 4)), Some(AgentAction(0)));
        assert_eq!(policy.action(g.cell(0, 3)), Some(AgentAction(3)));
    }

    #[test]
    fn grid_expert_trajectories_are_shortest_paths() {
        let env = Env::builtin(EnvId::Grid);
        let dist = grid_distances(&env);
        for t in crate::expert::sample_expert_trajectories(&env, 200, 11).unwrap() {
            let start = env.reset(t.episode_id).0.hidden;
            assert_eq!(Some(t.len()), dist[start]);
        }
    }
}
