//! Bregman proximal gradient methods for composite minimization
//! `min f(x) + g(x)` where `f` is smooth relative to a kernel `h` rather than
//! globally Lipschitz-smooth.
//!
//! - [`kernels`]: kernel generating distances and Bregman distances.
//! - [`problems`]: the composite objective and its proximal map.
//! - [`solvers`]: BPG and BPGe (with line-searched extrapolation), and their
//!   Euclidean versions PG and PGe, with per-iteration diagnostics.
//! - [`plip`], [`qip`]: Poisson linear and sparse quadratic inverse problems.
//! - [`harness`]: seeded experiment sweeps and CSV output.
//! - [`checks`]: the invariant suite behind `bregopt check`.

pub mod checks;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod plip;
pub mod problems;
pub mod qip;
pub mod solvers;

pub use error::{Error, Result};
pub use kernels::{BurgKernel, EuclideanKernel, Kernel, QuarticKernel};
pub use problems::{CompositeObjective, L1Term, NonsmoothTerm, SmoothTerm, ZeroTerm};
pub use solvers::{
    bpg_solve, bpge_solve, pg_solve, pge_solve, ExitMode, ExitReason, IterationRecord,
    LineSearchConfig, SolveResult, SolverConfig,
};
