//! Registration of one functional dataset onto another's time scale and
//! pooled kernel estimation of their common mean function.
//!
//! The model: `y1 = m(t) + e1` for the first sample and `y2 = m(g0(s)) + e2`
//! for the second, with `g0` a strictly increasing warp of the second time
//! scale into the first. [`registration::register`] estimates `g0` over
//! piecewise-linear warps, [`estimator::pooled_nw`] smooths the pooled sample,
//! [`inference`] gives bootstrap bands and a cross-validation check of
//! whether pooling helped, [`theory`] holds the asymptotic MSE calculators and
//! the symmetric-decomposition toolkit, and [`simulate`] runs Monte Carlo
//! comparisons.

pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernels;
pub mod registration;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod theory;
pub mod warp;

pub use data::{load_dataset, DatasetSummary, FunctionalDataset, ParseOptions, TiePolicy};
pub use error::{Error, Result};
pub use estimator::{plugin_estimate, pooled_nw, EstimateConfig, GridSpec, MeanCurve, PointFlag};
pub use kernels::{Bandwidth, Kernel};
pub use registration::{km_criterion, register, RegistrationConfig, RegistrationResult};
pub use warp::{sup_distance, Identity, PiecewiseLinearWarp, TimeWarp};
