//! Subsampling estimators for large least-squares problems.
//!
//! The crate covers full and weighted least squares, sampling probabilities
//! (uniform, leverage-based and optimal ones), seeded row sampling, volume
//! sampling, optimality-criterion subset selection, asymptotic variance
//! formulas and an empirical MSE benchmark.

pub mod asymptotics;
pub mod bench;
pub mod cli;
pub mod error;
pub mod lsq;
pub mod method;
pub mod optdesign;
pub mod probs;
pub mod rng;
pub mod sampler;
pub mod volume;

pub use error::{Error, Result};
pub use lsq::{leverage_scores, ols_fit, weighted_ls_fit, Dataset, EstimateResult, LeverageVector};
pub use method::Method;
pub use probs::{compute_probabilities, ProbabilityVector, Scheme};
pub use sampler::{draw, subsample_estimate, EstimateMode, SubsampleDraw};
