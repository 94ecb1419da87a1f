//! Experiment driver: configuration, the end-to-end run, the ablation
//! table and on-disk artifacts.

pub mod artifacts;
mod config;
mod eval;
mod run;
mod train;

pub use config::{
    AblationFlags, CemSettings, DataMode, EvalConfig, ExperimentConfig, FitnessKind, NetworkConfig,
    PdaConfig, ReplayConfig, TrainingConfig,
};
pub use eval::{
    auc_per_objective, collect_eval_set, evaluate_policy, evaluate_traces, run_episode,
    EpisodeTrace, PolicyReturns,
};
pub use run::{
    ablation_configs, ablation_matrix, ablation_rows, baseline_fused_weights, evaluate,
    final_weights, log_traffic, make_env, median_combined, metrics_row, run_experiment,
    search_weights, simulate, train, LoggedData, MetricsRow, RunOutput, Trained, ABLATION_LABELS,
};
pub use train::{act_fused_epsilon, Learner};
