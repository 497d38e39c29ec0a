//! Activated random walks and internal DLA on finite sub-stochastic
//! networks: exact mixing statistics, replayable simulation engines, exact
//! small-system oracles, and Monte Carlo cutoff experiments.

pub mod arw;
pub mod error;
pub mod experiments;
pub mod greens;
pub mod idla;
mod linalg;
pub mod network;
pub mod oracle;
pub mod sampler;

pub use arw::{arw_step, stabilize, two_stage_trace, ArwParams, Configuration, SelectionRule};
pub use error::{Error, Result};
pub use experiments::{
    check_win_inequality, cutoff_sweep, estimate_survival, SurvivalEstimate, SweepConfig,
    SweepFamily, SweepRow, WinReport,
};
pub use greens::{
    green_function, hitting_probabilities, hitting_probability_set, statistics, GreenMatrix,
    NetworkStats,
};
pub use idla::{coupled_run, idla_update, run_filling, FillingRecord, OccupiedSet};
pub use network::{generate, validate, GeneratorSpec, Network, ValidationReport};
pub use oracle::{
    exact_transition_operator, filling_time_law, stationary_and_profiles, subset_kernel,
    ExactReport, FillingLaw, OperatorReport, SubsetKernel,
};
pub use sampler::{sample_walk, walk_stream, SimStream, StreamFamily, Trajectory, WalkStream};
