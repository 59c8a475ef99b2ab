//! Experiment harness: configs, paired trials, aggregation, sweeps and fits.

pub mod config;
pub mod fit;
pub mod output;
pub mod stats;
pub mod sweep;
pub mod trial;

pub use config::{Algorithm, ConfigFile, SweepGrid, TaskSpec, TrainConfig};
pub use fit::{fit_power_law, ridge_points, PowerLawFit, RidgePoint};
pub use output::write_runs;
pub use stats::{
    accuracy, aggregate, aggregate_arm, c1_threshold_stat, delta_l, loss_ratio_r, AggregateResult,
    ArmAggregate, C1Threshold,
};
pub use sweep::{
    efficiency_pairs, sweep, sweep_to_file, EfficiencyPair, GridPoint, RowStatus, SweepRow,
};
pub use trial::{build_model, run_trial, run_trials, Arm, TrialResult, TrialSeeds, TrialSet};
