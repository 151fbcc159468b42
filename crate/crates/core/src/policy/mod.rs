//! The agent: a history-conditioned softmax policy over legal actions, and its
//! behavioral-cloning pretraining.

mod bc;
mod history;
mod model;

pub use bc::{bc_loss, train_bc, BcConfig, BcReport};
pub use history::{HistoryEncoder, HistoryState, ENCODER_VERSION};
pub use model::{entropy, PolicyModel, ScoredState, DEFAULT_POLICY_HIDDEN};
