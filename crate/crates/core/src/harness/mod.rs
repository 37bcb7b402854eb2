//! End-to-end experiments: configuration, particle/grid convergence runs, stability
//! probes, the identity suite and result files.

mod config;
mod convergence;
mod output;
mod sampling;
mod stability;
mod suite;

pub use config::{parse_config, ExperimentConfig, FlowConfig, GridConfig};
pub use convergence::{
    check_options, grid_solution, run_convergence, run_seed, run_single, summarize, ConditionChecks, ConvergenceResult,
    FieldSummary, RateFit, Replicate, RunSeries, TimePoint, HOLDER_SIGMA, PROBE_DECAY,
};
pub use output::{config_hash, thread_pool, write_convergence, write_stability, write_suite, Manifest};
pub use sampling::{sample_initial, sample_points, WellPreparedness};
pub use stability::{perturbed, run_stability, StabilityReport, StabilityRow, GRONWALL_C};
pub use suite::{
    eta_defects, parse_suite_config, run_identity_suite, BallSection, KernelSection, PatchSection, SuiteConfig,
    SuiteEntry, SuiteReport,
};
