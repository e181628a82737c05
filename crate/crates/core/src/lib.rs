//! Solver and verification harness for ergodic Hamilton-Jacobi-Bellman
//! equations
//!
//! ```text
//!     min_{alpha in A} { -L_alpha u(x) + f(x, alpha) } = c   in R^m
//! ```
//!
//! where `L_alpha phi = trace(a(x,alpha) D^2 phi) + b(x,alpha) . grad phi` is
//! the generator of a controlled diffusion. The unknowns are the ergodic
//! constant `c` (the optimal long-run average cost) and the corrector `u`,
//! determined up to an additive constant.
//!
//! The solver works on the measure side: the domain is truncated to a box,
//! `L_alpha` is discretized as a Markov generator matrix (zero row sums,
//! nonnegative off-diagonals), and the invariant probability measure of each
//! policy is obtained from the stationary Fokker-Planck equation `G' mu = 0`.
//! The ergodic constant is `c = <f, mu>`, minimized over feedback policies by
//! policy iteration. Two independent routes certify the answer at small
//! scale: exhaustive policy enumeration and a dense-simplex solve of the
//! dual linear program `max { c : c - H(x, Du, D2u) <= 0 }`.
//!
//! Module map:
//!
//! * [`problem`] - controlled-diffusion instances, standing-assumption
//!   checks, builtin benchmarks
//! * [`discretize`] - grids, policies, monotone generator assembly
//! * [`fpk`] - stationary measures, moments, positivity, Hellinger/TV
//! * [`primal`] - objective, Poisson/corrector solve, policy iteration,
//!   enumeration oracle
//! * [`dual`] - HJB residuals, the dual LP, optimality certificates
//! * [`verify`] - theorem-level studies (uniqueness, measure perturbation
//!   bounds, continuity of the cost functional, moment sweeps)

pub mod discretize;
pub mod dual;
pub mod error;
pub mod fpk;
mod linalg;
pub mod primal;
pub mod problem;
mod simplex;
pub mod util;
pub mod verify;

pub use error::Error;

/// Convenient result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
