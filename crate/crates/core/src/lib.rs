//! Online local learning with a log-determinant regularizer.
//!
//! The learner plays follow-the-regularized-leader over the pseudo-moment
//! polytope of `n` items and `L` labels. The [`reduction`] module turns
//! planted clique and planted dense subgraph instances into games for it,
//! and [`oracles`] holds brute-force references for every closed form.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "qp-oracle")]
extern crate openblas_src;

pub mod environments;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod learner;
pub mod oracles;
pub mod polytope;
pub mod reduction;
pub mod regularizer;
pub mod rng;

pub use environments::{Environment, PayoffFunction};
pub use error::{Error, Result};
pub use graph::Graph;
pub use learner::{choose_nu, FtrlState, InnerSolverConfig, OnlineLearner};
pub use polytope::{ProblemDims, PseudoMomentMatrix};
