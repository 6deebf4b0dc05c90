//! Pulmonary artery/vein analysis engine.
//!
//! Spatial normalization, Hessian vesselness, Poisson noise simulation, a
//! staged segmentation cascade with prior transmission, curve thinning and
//! vessel-tree decomposition, segmentation metrics and losses, synthetic
//! phantoms with analytic ground truth, and the cohort statistics used to
//! relate vessel abundance to sex, age and lung volume.

pub mod cascade;
pub mod enhance;
pub mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod par;
pub mod phantom;
pub mod skeleton;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
