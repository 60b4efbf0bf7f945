//! Simulation and diagnostics for clusters of extremes in regularly varying
//! time series: cluster point processes, their Poisson limits, sums and
//! records built from the same clusters.

pub mod clusters;
pub mod error;
pub mod espace;
pub mod functionals;
pub mod limitpp;
pub mod models;
pub mod quad;
pub mod records;
pub mod rng;
pub mod seqspace;
pub mod stats;
pub mod sums;

pub use error::{LabError, Result};
pub use functionals::{ClusterFunctional, Functional};
pub use models::{GarchModel, LinearModel, ModelSpec, RegVarLaw, SeriesSample};
pub use seqspace::Cluster;
