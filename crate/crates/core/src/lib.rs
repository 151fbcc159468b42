//! Step-wise imitation learning on small, exactly solvable partially observable tasks.
//!
//! The pipeline has four stages:
//!
//! 1. **Expert observation.** A value-iteration planner with access to the hidden
//!    state produces demonstration trajectories ([`expert`]).
//! 2. **Behavioral cloning.** A history-conditioned policy network is fit to the
//!    expert's actions ([`policy`]).
//! 3. **Inspection.** Expert trajectories are cut after every action and the agent
//!    practices from each expert prefix ([`inspection`]).
//! 4. **Reflection.** The policy is refined either with step-wise preference
//!    optimization against a frozen reference ([`reflect_implicit`]) or with an
//!    adversarially trained discriminator whose score is used as a step-wise reward
//!    for a clipped policy-gradient update ([`reflect_inverse`]).
//!
//! Because every environment has a small tabular hidden MDP, occupancy measures,
//! divergences and optimal discriminators can be computed exactly ([`metrics`]).
//! The [`harness`] module wires everything into reproducible runs with CSV output.

pub mod envs;
pub mod error;
pub mod expert;
pub mod harness;
pub mod inspection;
pub mod metrics;
pub mod numcore;
pub mod policy;
pub mod reflect_implicit;
pub mod reflect_inverse;
pub mod rng;

pub use error::{Error, Result};
