use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::config::GridConfig;
use super::{Outcome, Task};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

/// Treasure hunt on a square grid with internal walls.
///
/// Hidden state = agent cell (`r * size + c`); the treasure cell is terminal. The
/// observation is the floor tile under the agent, which also reveals which of the
/// four neighbouring edges are open; the treasure location is never observed
/// directly. Entering the treasure cell pays 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTreasure {
    config: GridConfig,
    walls: BTreeSet<(usize, usize)>,
}

impl GridTreasure {
    pub fn new(config: GridConfig) -> Result<Self> {
        let n = config.size;
        if n < 2 {
            return Err(Error::Config("grid size must be at least 2".into()));
        }
        if config.treasure[0] >= n || config.treasure[1] >= n {
            return Err(Error::Config("grid treasure lies outside the grid".into()));
        }
        if config.max_steps == 0 {
            return Err(Error::Config("grid max_steps must be positive".into()));
        }
        let mut walls = BTreeSet::new();
        for &[r1, c1, r2, c2] in &config.walls {
            let adjacent = r1.abs_diff(r2) + c1.abs_diff(c2) == 1;
            if r1 >= n || r2 >= n || c1 >= n || c2 >= n || !adjacent {
                return Err(Error::Config(format!(
                    "wall ({r1},{c1})-({r2},{c2}) is not between adjacent cells"
                )));
            }
            let (a, b) = (r1 * n + c1, r2 * n + c2);
            walls.insert((a.min(b), a.max(b)));
        }
        Ok(GridTreasure { config, walls })
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn treasure_cell(&self) -> usize {
        self.config.treasure[0] * self.config.size + self.config.treasure[1]
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.config.size + col
    }

    /// Neighbour reached by `action`, or `None` when blocked by the border or a wall.
    pub fn neighbour(&self, cell: usize, action: usize) -> Option<usize> {
        let n = self.config.size;
        let (r, c) = (cell / n, cell % n);
        let next = match action {
            UP if r > 0 => cell - n,
            DOWN if r + 1 < n => cell + n,
            LEFT if c > 0 => cell - 1,
            RIGHT if c + 1 < n => cell + 1,
            _ => return None,
        };
        (!self.walls.contains(&(cell.min(next), cell.max(next)))).then_some(next)
    }

    fn open_moves(&self, cell: usize) -> Vec<usize> {
        (0..4)
            .filter(|&a| self.neighbour(cell, a).is_some())
            .collect()
    }
}

impl Task for GridTreasure {
    fn num_states(&self) -> usize {
        self.config.size * self.config.size
    }

    fn num_observations(&self) -> usize {
        self.num_states()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn is_terminal(&self, s: usize) -> bool {
        s == self.treasure_cell()
    }

    fn initial_states(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&s| !self.is_terminal(s))
            .collect()
    }

    fn initial_observation(&self, s: usize) -> usize {
        s
    }

    fn legal(&self, s: usize) -> Vec<usize> {
        if self.is_terminal(s) {
            Vec::new()
        } else {
            self.open_moves(s)
        }
    }

    fn legal_for_observation(&self, obs: usize) -> Vec<usize> {
        self.legal(obs)
    }

    fn transition(&self, s: usize, a: usize) -> Outcome {
        let next = self.neighbour(s, a).expect("legal move");
        Outcome {
            next,
            reward: if self.is_terminal(next) { 1.0 } else { 0.0 },
            observation: next,
        }
    }

    fn observation_name(&self, obs: usize) -> String {
        let n = self.config.size;
        if obs == self.treasure_cell() {
            "treasure".into()
        } else {
            format!("tile({},{})", obs / n, obs % n)
        }
    }

    fn action_name(&self, a: usize) -> String {
        ACTION_NAMES[a].to_string()
    }
}
