//! Verification of ReLU network controllers for discrete-time linear systems.
//!
//! The crate encodes a network (optionally unrolled through the plant) as a
//! big-M mixed-integer linear program and solves it exactly with its own
//! branch-and-bound on top of a dense simplex. On top of that sit the
//! certificate checks: input constraints, invariance of the initial set, and
//! asymptotic stability via the equilibrium region of the network. The
//! [`network::retrofit_lqr`] routine adjusts the output layer so the network
//! reproduces an LQR gain around the origin.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod lp;
pub mod milp;
pub mod network;
pub mod numerics;
pub mod polytope;
pub mod verify;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use numerics::Matrix;
pub use polytope::Polytope;
