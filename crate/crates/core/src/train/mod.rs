//! Losses, the optimizer, the training loop and evaluation protocols.

mod adam;
mod eval;
mod harness;
mod loss;
mod surrogate;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use eval::{
    constant_mean_baseline, evaluate, evaluate_with, extend_horizon, oracle_report, per_timestep_csv, rollout_csv,
    rollout_summary, throughput_report, EvalReport, Throughput, PER_TIMESTEP_HEADER, ROLLOUT_HEADER,
};
pub use harness::{
    all_pairs, init_surrogate, metrics_csv, train, train_step, LossSpace, MetricsRecord, Pair, TrainConfig, METRICS_HEADER,
};
pub use loss::{rel_h1, rel_l2, tape_loss, LossKind};
pub use surrogate::Surrogate;
