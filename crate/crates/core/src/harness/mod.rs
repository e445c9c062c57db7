//! Experiment plumbing: configs, runs, replicates, rate fits, sweeps, CSV.

pub mod config;
pub mod fit;
pub mod output;
pub mod replicate;
pub mod run;
pub mod sweep;
pub mod testfn;

pub use config::{Experiment, OptimizerConfig, ProposalConfig, RunConfig, RunSection, TargetConfig};
pub use fit::{fit_rate, RateFit, MIN_FIT_POINTS};
pub use replicate::{
    ground_truths, replicate_seeds, run_replicates, run_replicates_with_seeds, ReplicateOptions,
    ReplicateOutcome, SummaryRow,
};
pub use run::{run_ais, AbortKind, IterationRow, RunAbort, RunRecord};
pub use sweep::{calibration_sweep, plateau_stats, samples_for, SlopeFit, SweepCell, SweepTable};
pub use testfn::TestFunction;
