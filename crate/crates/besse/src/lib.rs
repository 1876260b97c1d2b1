//! Numerical and combinatorial laboratory for closed geodesics on Besse manifolds.

pub mod berger;
pub mod error;
pub mod formal_geodesic;
pub mod geodesic_engine;
pub mod linalg;
pub mod ode;
pub mod morse_ledger;
pub mod orientation;
pub mod random;
pub mod symplectic_core;
pub mod tol;

pub use error::{Error, Result};
