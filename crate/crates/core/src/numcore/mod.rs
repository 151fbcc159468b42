//! Minimal differentiable computation: flat parameter vectors with a named layout,
//! small tanh feed-forward nets with hand-written reverse mode, softmax utilities,
//! an adaptive-moment optimizer and finite-difference gradient checking.

mod checkpoint;
mod gradcheck;
mod net;
mod optim;
mod softmax;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, numeric_gradient, relative_error, FD_STEP};
pub use net::{
    backward, backward_tape, forward, forward_tape, Activation, GradResult, NetSpec, ParamVector,
    Segment, Tape,
};
pub use optim::{optimizer_step, sgd_step, Adam, AdamConfig, Optimizer};
pub use softmax::{log_sigmoid, log_softmax, masked_log_softmax, sigmoid, softplus};
