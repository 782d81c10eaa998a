//! Selection-adjusted estimation for outcomes and exposures missing not at random.
//!
//! Estimators: complete-case and inverse-probability-weighted GLMs, Heckman
//! sample-selection models, homogeneous-selection-bias (TTW) likelihoods, and
//! Mendelian-randomization estimators built on them. The [`sim`] module
//! reproduces the simulation designs used to compare them.

pub mod data;
pub mod error;
pub mod glm;
pub mod heckman;
pub mod mr;
pub mod numkit;
pub mod sim;
pub mod ttw;

pub use data::Dataset;
pub use error::{Error, Result};
pub use glm::{FitResult, Method, ModelKind};
pub use mr::{Adjuster, CausalEstimate, SummaryStats};
pub use numkit::RngStream;
pub use sim::{ScenarioConfig, SimulationReport};
