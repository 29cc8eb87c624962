//! Einstein-Yang-Mills fields on flat tori: spectral discretization, the
//! Euler-Lagrange residual, its linearization and the deformation complex.

/// Version of this library, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod algebra;
pub mod asd4;
pub mod deform;
pub mod error;
pub mod eym;
pub mod fields;
pub mod gauge;
pub mod lattice;
pub mod linalg;
pub mod riemann;
pub mod sampling;
