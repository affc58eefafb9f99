//! Cooperative conjugate gradient: `p` agents solve one SPD system
//! `Ax = b` together, exchanging directions through matrix-valued step
//! sizes.
//!
//! The crate provides dense kernels generic over `f64` and exact rationals,
//! seeded test problems, sequential reference solvers, a barrier-synchronized
//! multithreaded runtime and the multiplication-count model.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity;
pub mod dense;
pub mod error;
pub mod mtx;
pub mod parallel;
pub mod problem;
pub mod scalar;
pub mod solvers;

pub use dense::{DenseBlock, LuFactors, SmallMatrix, SpdMatrix};
pub use error::{Error, Result};
pub use parallel::{parallel_ccg, parallel_ccg_detailed, MultCounter, ParallelRun, WorkPlan};
pub use problem::{Mode, ProblemInstance, ProblemSpec};
pub use scalar::{Rational, Scalar};
pub use solvers::{
    ccg_solve, cg_solve, mccg_solve, steepest_descent_solve, Algo, SolveOptions, SolveTrace, StopRule, Termination,
};
