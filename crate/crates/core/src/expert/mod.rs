//! The expert: an optimal planner on the hidden MDP, and the demonstration
//! datasets it produces.

mod dataset;
mod planner;

pub use dataset::{
    load_trajectories, read_jsonl, sample_expert_trajectories, save_trajectories, write_jsonl,
    Source, Step, Trajectory,
};
pub use planner::{
    bellman_residual, expert_policy, value_iteration, ExpertPolicy, ValueTable, EXPERT_GAMMA,
    PLANNER_TOL,
};
