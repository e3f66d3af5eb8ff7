//! Error functional `e_n(T)`, the Monte Carlo convergence study, tail and
//! moment diagnostics, the invariant suite and result files.
//!
//! Every path is one independent work unit: a reference solve plus one
//! splitting run per `n`, all driven by the same fine Wiener path.

mod checks;
mod config;
mod error_fn;
mod exec;
mod output;
mod stats;
mod study;

pub use checks::{
    hypotheses_report, run_check_suite, CheckItem, CheckSuite, HypothesisReport, CANCELLATION_TOL,
    DIVERGENCE_TOL, ENERGY_TOL, HYPOTHESIS_TOL,
};
pub use config::{
    config_hash, GridSection, GrowthFn, InitSection, NoiseSection, RefSection, SchemeSection,
    StudyConfig, StudySection, StudySetup, Threshold,
};
pub use error_fn::{coupled_monitors, error_e_n, ErrorReport};
pub use exec::{map_indexed, Execution};
pub use output::{study_json, write_study, write_study_csv, write_trajectory_csv};
pub use stats::{
    fit_loglog, mean, probability_tail, quantile, std_dev, wilson_interval, LogLogFit, TailRow,
    TailTable, MIN_TAIL_SAMPLES,
};
pub use study::{
    convergence_study, coupled_run, moment_diagnostics, Moments, MomentRow, MomentTable,
    PathOutcome, PerN, RunRecord, StudyResult, StudyStatus, MAX_EXCLUDED_FRACTION,
    MOMENT_DRIFT_LIMIT,
};
