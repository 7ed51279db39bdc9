//! Spherical-harmonic representation of scalar fields on the unit sphere and
//! the operators built on it: Laplace-Beltrami, Dirichlet-to-Neumann and
//! Neumann-to-Dirichlet maps, quadrature, and dealiased nonlinearities.

pub mod field;
pub mod grid;
pub mod legendre;
pub mod ops;

pub use field::{SurfaceField, SQRT_4PI};
pub use grid::{same_grid, SphereGrid};
pub use ops::{
    dtn, laplace_beltrami, ntd, ntd_of_laplacian, ntilde, pointwise_nonlinear, product,
    random_field,
};
