//! Linear response of Markov jump processes on finite (truncated countable) state spaces.
//!
//! A jump process is specified by a rate kernel `r(x, y) >= 0` with finite holding
//! rates `r_hat(x) = sum_y r(x, y)`. Perturbations scale the kernel multiplicatively,
//! `r_t^lambda(x, y) = r(x, y) * exp(lambda * g(t, x, y))`, and the crate computes the
//! derivative at `lambda = 0` of path observables three independent ways:
//!
//! * **Monte-Carlo** ([`response_mc`]): covariance of the observable with the response
//!   martingale accumulated along unperturbed trajectories, exponential-reweighting
//!   (change-of-measure) estimators, and reweighted finite differences.
//! * **Exact** ([`response_exact`]): stationary correlation formulas evaluated with the
//!   semigroup `exp(tL)` and adaptive quadrature.
//! * **Oscillatory steady state** ([`oss`]): for time-periodic perturbations, the
//!   derivative of the periodic steady state via resolvents `(ik*omega - L*)^{-1}` of the
//!   adjoint generator, cross-checked against direct semigroup quadrature.
//!
//! [`mobility`] specializes the steady-state machinery to driven nearest-neighbour walks
//! on the discrete torus and yields the frequency-dependent complex mobility matrix;
//! [`models`] hosts the birth-death and confining-potential model families together with
//! the certificate checks (summability, Lyapunov drift, exponential moments) that justify
//! truncating them to finite boxes.

// `!(x > 0.0)` is deliberate throughout: unlike `x <= 0.0` it also rejects
// NaN, which is exactly what the validation sites need.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numerical loops routinely index several slices in lockstep; iterator-zip
// rewrites of those are harder to read, not easier.
#![allow(clippy::needless_range_loop)]

pub mod acceptance;
pub mod document;
pub mod error;
pub mod expm;
pub mod kernel;
pub mod mobility;
pub mod models;
pub mod oss;
pub mod paths;
pub mod perturb;
pub mod profile;
pub mod quad;
pub mod resolvent;
pub mod response_exact;
pub mod response_mc;
pub mod space;
pub mod stationary;

pub use document::{BuiltModel, ModelDocument};
pub use error::Error;
pub use kernel::RateMatrix;
pub use paths::{FunctionalSpec, RngStream, Trajectory};
pub use perturb::{EdgeField, Perturbation, PerturbedKernel, PsiField};
pub use mobility::{MobilityMatrix, TorusModel};
pub use profile::TimeProfile;
pub use response_mc::{EstimatorTag, McParams, ResponseEstimate};

pub use space::StateSpace;
pub use stationary::{ReversedKernel, StationaryChain, StationaryDistribution};

/// Convenience alias used throughout: double-precision complex scalar.
pub type C64 = num_complex::Complex64;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
