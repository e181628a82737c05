//! Error type shared by all solver modules.

use thiserror::Error;

use crate::primal::ErgodicSolution;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested builtin problem does not exist.
    #[error("unknown problem `{name}`; available: {}", available.join(", "))]
    UnknownProblem {
        name: String,
        available: Vec<String>,
    },

    /// The monotone stencil cannot be built: the diffusion matrix is not
    /// diagonally dominant relative to the grid spacing at this node.
    /// Refine the grid or reduce the anisotropy.
    #[error(
        "diagonal dominance violated at node {node}, control {control}, axis {axis}: \
         a_ii/h_i - sum_j |a_ij|/h_j = {margin:.6e} < 0"
    )]
    DiagonalDominance {
        node: usize,
        control: usize,
        axis: usize,
        margin: f64,
    },

    /// The generator's off-diagonal graph is not strongly connected, so the
    /// invariant measure is not unique and the stationary solve refuses to
    /// pick one.
    #[error("generator is reducible: invariant measure is not unique")]
    ReducibleGenerator,

    /// The Poisson right-hand side is not orthogonal to the invariant
    /// measure, so the singular system has no solution.
    #[error("Poisson compatibility violated: |<f - c, mu>| = {imbalance:.6e} > {tol:.6e}")]
    IncompatibleRhs { imbalance: f64, tol: f64 },

    /// A linear solve or iteration broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Policy enumeration would visit more candidates than the oracle bound.
    #[error(
        "policy space too large for enumeration: |A|^N = {policies:.3e} > {bound:.3e}; \
         use policy_iteration instead"
    )]
    SearchSpaceTooLarge { policies: f64, bound: f64 },

    /// The dual LP exceeds the oracle-scale bound.
    #[error(
        "LP too large: N * |A| = {size} > {bound}; the simplex is a small-scale \
         verification oracle, use policy_iteration instead"
    )]
    LpTooLarge { size: usize, bound: usize },

    /// The dual LP is unbounded, which signals a reducible generator or an
    /// assembly bug (irreducibility bounds the dual value).
    #[error("dual LP unbounded: {0}")]
    LpUnbounded(String),

    /// Policy iteration hit the iteration cap; the best solution found so
    /// far (with its history) is attached.
    #[error("policy iteration did not converge within {max_iter} iterations")]
    MaxIterations {
        max_iter: usize,
        best: Box<ErgodicSolution>,
    },

    /// Two measures live on different grids.
    #[error("grid mismatch: operands are defined on different grids")]
    GridMismatch,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
