//! Killed and branching Levy processes: rate functions, quasi-stationary
//! laws, extinction phases and travelling waves.

pub mod branching;
pub mod error;
pub mod fkpp;
pub mod levy;
pub mod paths;
pub mod qsd;
pub mod rng;
pub mod roots;
pub mod stats;

pub use branching::{BranchingConfig, GwCounts, PhaseCell};
pub use error::{Error, Result};
pub use fkpp::{FrontState, Grid, WaveProfile};
pub use levy::{JumpDistribution, JumpSpec, LevyTriplet, ModelDocument, Phase, TiltedModel};
pub use paths::PathConfig;
pub use qsd::QSDensity;
pub use stats::{EmpiricalDistribution, LinearFit, MeanSe};
