//! Local polynomial Lp-norm regression.
//!
//! Replaces the weighted least-squares step of local constant / local linear
//! kernel regression with a weighted Lp-norm fit, and supplies the machinery
//! needed to use it in practice:
//!
//! - [`ged`]: the generalized error distribution (density, CDF, quantiles,
//!   sampling, absolute moments), the error family for which the Lp fit is the
//!   local maximum-likelihood estimator.
//! - [`kernels`]: kernel weights and their moment constants.
//! - [`lpsolve`]: the weighted Lp minimization engine (damped IRLS).
//! - [`localreg`]: 1D/2D local fits over an evaluation grid, plus the leading
//!   asymptotic bias and variance terms.
//! - [`tuning`]: shape estimation (quantile and kurtosis methods), the pilot
//!   least-squares bandwidth and its conversion to the Lp-optimal bandwidth.
//! - [`inference`]: residual-bootstrap pointwise confidence bands with a
//!   bias-reduced pilot.
//! - [`simlab`]: Monte-Carlo experiments comparing local least squares with
//!   the local Lp estimator.
//! - [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod ged;
pub mod inference;
pub mod kernels;
mod linalg;
pub mod localreg;
pub mod lpsolve;
pub mod rng;
pub mod simlab;
mod special;
pub mod tuning;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use ged::Ged;
pub use kernels::{Kernel, KernelConstants};
pub use localreg::{Dataset1D, Dataset2D, Degree, FitResult, FitResult2D, FitSpec, FitSpec2D};
pub use lpsolve::{lp_minimize, ConditionFlag, LpProblem, LpSolution, SolverOptions};
