//! Diagnostics: exact and sampled occupancy measures, divergences between them,
//! causal entropy, and episode-level evaluation.

mod divergence;
mod eval;
mod occupancy;

pub use divergence::{bradley_terry_prob, causal_entropy, js, js_divergence, kl, kl_divergence};
pub use eval::{
    evaluate, run_episode, EpisodeResult, EvalMode, EvalReport, MetricsRow, METRICS_HEADER,
    METRICS_SCHEMA_VERSION,
};
pub use occupancy::{
    binomial_check, discounted_visitation, occupancy_analytic, occupancy_mc, project_policy,
    BinomialCheck, OccupancyTable, RolloutPolicy, TabularPolicy,
};
