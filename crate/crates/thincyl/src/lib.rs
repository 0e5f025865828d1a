//! Asymptotic approximation of convection–diffusion in thin cylinders:
//! limit problem, cell correctors, boundary layers, a reference solver and
//! the convergence study that compares them.

pub mod cell;
pub mod limit;
pub mod blayer;
pub mod assemble;
pub mod refsolve;
pub mod study;
pub mod error;
pub mod interp;
pub mod model;

pub use error::{Error, Result};
