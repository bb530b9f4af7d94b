//! Inexact proximal Newton methods for `min f(x) + g(x)` with smooth,
//! possibly nonconvex `f` and convex `g`, plus the Student's t sparse
//! recovery test bed.

pub mod dct;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod outer;
pub mod pg_inner;
pub mod problem;
pub mod prox;
pub mod ssn;
pub mod student_t;
pub mod testfns;

pub use error::{Result, SolverError};
