//! Numerical core for multi-sensor prognostics with unlabeled failure modes.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It covers:
//!
//! * [`signal`]: the degradation-signal data model, truncation, log-TTF
//!   standardization and robust local quadratic smoothing.
//! * [`fda`]: univariate, cluster-wise and multivariate functional PCA with
//!   conditional-expectation scores.
//! * [`cluster`]: k-means, nearest-neighbour diagnosis and label alignment.
//! * [`mixture`]: the mixture of Gaussian regressions with an adaptive sparse
//!   group lasso penalty, fitted by EM.
//! * [`sim`]: the seeded degradation-signal generator.
//! * [`pipeline`]: offline sensor selection, cross-validation, online
//!   diagnosis and remaining-useful-life prediction.
#![no_std]

extern crate alloc;

pub mod cluster;
mod error;
pub mod fda;
pub mod linalg;
pub mod mixture;
pub mod pipeline;
pub mod signal;
pub mod sim;

pub use error::{Error, Result, Warning};
