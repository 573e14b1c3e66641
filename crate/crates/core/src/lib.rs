//! Numerical toolkit for sub-Riemannian Harnack inequalities on the
//! Heisenberg group and its compact nilmanifold quotient.

pub mod action;
pub mod coefficients;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod harnack;
pub mod identities;
pub mod jet;
pub mod runner;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
