//! Statistical mechanics of combat: coupled stochastic attrition equations,
//! their short-time likelihood, adaptive simulated annealing to fit them,
//! and canonical momenta indicators computed from the fit.

#[cfg(test)]
#[macro_use]
mod testutil;

pub mod asa;
pub mod error;
pub mod fit;
pub mod likelihood;
pub mod model;
pub mod momenta;
pub mod refine;
pub mod series;
pub mod simulator;

pub use asa::{minimize, AsaConfig, AsaResult};
pub use error::{Error, Result};
pub use fit::{fit, FitOptions, FitOutcome};
pub use likelihood::{Coordinates, LagrangianReport, Likelihood};
pub use model::{CoefficientSet, ModelSpec, Side, StateVector, TermKind};
pub use momenta::{CmiPoint, CmiSeries, SeriesId};
pub use series::{Ensemble, EpochTransition, Trajectory};
pub use simulator::{SimConfig, StepMode};
