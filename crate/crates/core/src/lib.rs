//! Growth and reclassification dynamics of patent classification systems.
//!
//! [`model`] holds the closed-form solution of the cohort dynamics and its
//! growth factor, [`simulator`] iterates the dynamics, [`estimation`] recovers
//! parameters from counts, [`snapshots`] diffs classification editions and
//! [`analysis`] builds per-class statistics and regressions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod estimation;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod simulator;
pub mod snapshots;
pub mod validation;

pub use analysis::{ClassPanel, GroupStats, RegressionResult, SuiteSpec};
pub use estimation::{BetaFit, ClassificationCountTable, GrowthFit, LagConvention};
pub use model::{GrowthSolution, ModelParams, PredictedQuantities};
pub use simulator::{CohortMatrix, CountMode, ReclassEventStream, ReclassRecord, SimulationConfig, Window};
pub use snapshots::{ClassLevel, DiffResult, EditionSnapshot};
