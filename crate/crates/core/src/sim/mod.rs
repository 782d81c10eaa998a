//! Monte-Carlo harness: data-generating processes, intercept calibration, the
//! replication engine and parameter sweeps.

pub mod bundled;
pub mod config;
pub mod generate;
pub mod study;
pub mod sweep;

pub use config::{
    BetaXSpec, ConfounderConfig, ErrorDist, FirstStage, MissingOn, MrConfig, MrDesign, MrEstimatorChoice,
    OutcomeFamily, Populations, ScenarioConfig, ScenarioKind, SelectionConfig, SweepConfig, VariableForm,
};
pub use generate::{
    calibrate_alpha_r, draw_regression, generate_mr, generate_regression, selection_index, variant_names, Draw,
    MrData,
};
pub use study::{applicable_methods, resolve, run_study, MethodSummary, Replicate, SimulationReport};
pub use sweep::{sweep, with_parameter, SWEEPABLE};
