//! Pivotal (square-root) SLOPE estimation for sparse linear regression with
//! adversarially contaminated responses and heavy-tailed noise.
//!
//! The model is `Y = X beta* + sqrt(n) theta* + sigma xi`, where `theta*` is an
//! `o`-sparse vector of outliers. The estimator jointly minimizes
//!
//! ```text
//! L(beta, theta) = Q(beta, theta)^(1/2) + ||beta||_lambda + ||theta||_mu,
//! Q(beta, theta) = ||Y - X beta - sqrt(n) theta||^2 / (2n)
//! ```
//!
//! with sorted-l1 penalties on both blocks. Besides the solver the crate ships
//! the instance generators and the Monte-Carlo diagnostics used to check the
//! design and noise conditions the error bounds rely on.

pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod penalties;
pub mod rng;
pub mod solver;
pub mod sorted_l1;
pub mod stats;

pub use datagen::{
    AdversaryStrategy, Covariance, CovarianceKind, GroundTruth, NoiseFamily, NoiseSpec,
    RegressionInstance, RowFamily, SignalPattern,
};
pub use error::{Error, Result};
pub use penalties::{MuRegime, PenaltyConfig, Tau};
pub use solver::{Dataset, FitConfig, FitResult, FitStatus, KktReport};
pub use sorted_l1::WeightSequence;
