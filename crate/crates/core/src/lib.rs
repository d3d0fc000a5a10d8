//! Simulation core for the quadratically driven dissipative Bose-Hubbard lattice.

pub mod corner;
pub mod density;
pub mod error;
pub mod fock;
pub mod krylov;
pub mod lattice;
pub mod liouvillian;
pub mod observables;
pub mod operator;
pub mod scaling;
pub mod sector;
pub mod sparse;
pub mod spin;

pub use error::{Error, Result};
pub use num_complex::Complex64 as c64;
