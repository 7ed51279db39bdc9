//! Numerical laboratory for a bulk-surface reaction-diffusion model of cell
//! polarization on the unit sphere.
//!
//! The crate provides:
//! - spectral surface fields and operators on S^2 ([`spectral`]),
//! - the cytosolic bulk field on the unit ball ([`bulk`]),
//! - time integration of the coupled membrane/cytosol dynamics ([`dynamics`]),
//! - stationary solvers with continuation in the scaling parameters ([`steady`]),
//! - the limiting obstacle-type problems, critical-mass and localization
//!   analysis ([`obstacle`]),
//! - an aggregated invariant check suite ([`checks`]).

pub mod bulk;
pub mod dynamics;
pub mod error;
pub mod params;
pub mod signal;
pub mod spectral;

pub use error::{CoreError, Result};
