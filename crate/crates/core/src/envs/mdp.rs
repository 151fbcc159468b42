use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub next: usize,
    /// Reward received on this transition; non-zero only when `next` is terminal.
    pub reward: f64,
}

/// Exact tabular model of an environment's hidden dynamics.
///
/// Terminal states are absorbing sinks with no legal actions. `horizon`, when set,
/// is the episode step limit: episodes still running after `horizon` decisions end
/// with reward 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub legal: Vec<Vec<usize>>,
    pub terminal: Vec<bool>,
    /// `transitions[s][a]`, empty for illegal actions.
    pub transitions: Vec<Vec<Vec<Transition>>>,
    pub initial: Vec<f64>,
    pub horizon: Option<usize>,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let n = self.num_states;
        if self.legal.len() != n
            || self.terminal.len() != n
            || self.transitions.len() != n
            || self.initial.len() != n
        {
            return Err(Error::InvalidArgument(
                "MDP tables disagree on state count".into(),
            ));
        }
        for s in 0..n {
            if self.terminal[s] != self.legal[s].is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "state {s}: terminal states must be exactly those without legal actions"
                )));
            }
            for a in 0..self.num_actions {
                let row = &self.transitions[s][a];
                let legal = self.legal[s].contains(&a);
                if legal {
                    let total: f64 = row.iter().map(|t| t.prob).sum();
                    if (total - 1.0).abs() > 1e-9 || row.iter().any(|t| t.next >= n || t.prob < 0.0)
                    {
                        return Err(Error::InvalidArgument(format!(
                            "bad transition row ({s}, {a})"
                        )));
                    }
                } else if !row.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "illegal action {a} has transitions in state {s}"
                    )));
                }
            }
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "initial distribution does not sum to 1".into(),
            ));
        }
        Ok(())
    }

    pub fn num_decision_states(&self) -> usize {
        self.terminal.iter().filter(|t| !**t).count()
    }

    /// True when every policy reaches a terminal state with probability 1 even
    /// without a step limit, i.e. the graph over non-terminal states is acyclic.
    pub fn is_episodic(&self) -> bool {
        // Kahn's algorithm on the non-terminal subgraph.
        let n = self.num_states;
        let mut indeg = vec![0usize; n];
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in (0..n).filter(|&s| !self.terminal[s]) {
            for &a in &self.legal[s] {
                for t in &self.transitions[s][a] {
                    if t.prob > 0.0 && !self.terminal[t.next] {
                        edges[s].push(t.next);
                        indeg[t.next] += 1;
                    }
                }
            }
        }
        let mut stack: Vec<usize> = (0..n)
            .filter(|&s| !self.terminal[s] && indeg[s] == 0)
            .collect();
        let mut seen = 0;
        while let Some(s) = stack.pop() {
            seen += 1;
            for &t in &edges[s] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
        seen == self.num_decision_states()
    }

    /// A deterministic chain `0 -> 1 -> ... -> len` where the last state is terminal
    /// and the final transition pays `reward`. Handy for hand-checkable fixtures.
    pub fn chain(len: usize, reward: f64) -> Self {
        let n = len + 1;
        let mut transitions = vec![vec![Vec::new(); 1]; n];
        let mut legal = vec![Vec::new(); n];
        for s in 0..len {
            legal[s] = vec![0];
            transitions[s][0] = vec![Transition {
                prob: 1.0,
                next: s + 1,
                reward: if s + 1 == len { reward } else { 0.0 },
            }];
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        let mut terminal = vec![false; n];
        terminal[len] = true;
        TabularMdp {
            num_states: n,
            num_actions: 1,
            legal,
            terminal,
            transitions,
            initial,
            horizon: None,
        }
    }
}
