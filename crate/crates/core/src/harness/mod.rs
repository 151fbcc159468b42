//! Run orchestration: configuration, training runs over seeds, sweeps, the reward
//! ablation, evaluation and on-disk artifacts.

mod commands;
mod config;
mod run;

pub use commands::{
    ablation_verdict, cmd_ablation_rewardtype, cmd_eval, cmd_gen_expert, cmd_sweep, mean_stderr,
    AblationCell, AblationTable, SweepAxis, SweepRow,
};
pub use config::{Algo, RunConfig, RUN_CONFIG_SCHEMA};
pub use run::{
    cmd_train, run_id, run_training, train_seed, write_csv, OccupancyReference, RunRecord, SeedRun,
    TrainRow, TRAIN_METRICS_HEADER,
};

use crate::error::Error;

/// Process exit code for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownEnv(_) => 1,
        _ => 2,
    }
}
