//! Optimism of training-set and test-set error under dependent observations.
//!
//! The crate builds the pieces needed to study how far cross-validation
//! estimates fall below true out-of-sample error when responses are
//! correlated:
//!
//! * [`designs`]: orthogonal polynomial design matrices, OLS and hat matrices.
//! * [`covariance`]: structured covariance models (iid, equicorrelated,
//!   AR(1), group-block, paired training/test copies).
//! * [`sampling`]: seeded, platform-independent Gaussian generators.
//! * [`smoothers`]: linear smoothers `ŷ = Hy` (OLS, k-nearest neighbours in time).
//! * [`optimism`]: analytic error decompositions, closed forms, Monte Carlo.
//! * [`splitters`]: k-fold, temporal block, buffered, grouped and network splits.
//! * [`evaluation`]: scheme comparison plus McNemar and Meng procedures.
//! * [`cli`]: the config-driven experiment runner behind the `optcv` binary.

pub mod cli;
pub mod covariance;
pub mod designs;
pub mod error;
pub mod evaluation;
pub mod optimism;
pub mod sampling;
pub mod smoothers;
pub mod splitters;

mod stats;
mod svg;

pub use error::{Error, Result};
