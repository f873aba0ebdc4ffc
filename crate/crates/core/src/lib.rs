//! Regularized shape optimization for the Dirichlet inverse obstacle
//! problem in an annulus, with adjoint shape gradients, shape Hessians
//! and the numerical experiments built on them.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod error;
pub mod experiments;
pub mod fourier;
pub mod functionals;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod meshing;
pub mod optimize;
pub mod pde;
pub mod shape_calculus;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use fourier::BoundaryField;
pub use geometry::{HoldAll, RadialShape, SobolevExponent};
