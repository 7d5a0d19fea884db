//! Simulation, kernel density estimation and CLT verification for
//! bifurcating Markov chains on the full binary tree.
//!
//! The crate is organised bottom-up:
//!
//! - [`tree_sim`]: node addressing, reproducible node-local randomness and
//!   generation-by-generation simulation.
//! - [`bar_model`]: the symmetric Gaussian bifurcating autoregressive model,
//!   its invariant law and integrability checks.
//! - [`smoothing`]: kernels, bandwidth schedules and the Parzen estimator.
//! - [`fluctuations`]: normalised fluctuations and their Gaussian limits.
//! - [`oracle`]: exact moments of generation sums.
//! - [`harness`]: the Monte Carlo runner, statistics and exports.

pub mod bar_model;
pub mod error;
pub mod exec;
pub mod fluctuations;
pub mod harness;
pub mod oracle;
pub mod quadrature;
pub mod smoothing;
pub mod tree_sim;

pub use bar_model::{
    check_assumptions, AlphaRegime, BarAssumptionReport, BarModel, GaussianInitial,
};
pub use error::{Error, Result};
pub use exec::{with_threads, Execution};
pub use fluctuations::{
    theoretical_limit, zeta, FluctuationSample, FunctionSequenceVariant, GaussianLimit, SequenceTag,
};
pub use harness::{
    run_clt_experiment, run_clt_experiment_with, CltRunResult, ExperimentConfig, InitialSpec,
};
pub use oracle::{MomentOracle, MomentOracleResult};
pub use quadrature::{CompositeLegendre, QuadratureRule};
pub use smoothing::{
    admissible_bandwidth, density_estimate, BandwidthSchedule, RegimeReport, SmoothingKernel,
};
pub use tree_sim::{
    simulate_generations, simulate_tree, GenerationBuffer, NodeAddress, PointMass, ReplicateSeed,
    Scope, TransitionKernel,
};
