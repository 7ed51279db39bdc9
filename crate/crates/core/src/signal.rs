//! The external membrane signal c and its saturation form g = c/(c + a5).

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::spectral::{SphereGrid, SurfaceField};

/// Signal data shared by the dynamic, stationary and obstacle solvers.
///
/// `c` is the processed external stimulus (strictly positive); `g` takes
/// values in (0, 1). Both are stored unscaled: the eps-rescaling multiplies c
/// and a5 by the same factor, so g is scale invariant.
#[derive(Clone, Debug)]
pub struct SignalField {
    pub c: SurfaceField,
    pub g: SurfaceField,
    /// min of c over the sphere (refined evaluation).
    pub c0: f64,
    /// max of g over the sphere (refined evaluation).
    pub g_max: f64,
    /// Base-grid node indices within tolerance of the maximum of g.
    pub argmax_nodes: Vec<usize>,
    pub a5: f64,
}

impl SignalField {
    pub fn from_c(c: SurfaceField, a5: f64) -> Result<SignalField> {
        let c0 = c.min_refined();
        if !(c0 > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "signal c must be strictly positive (min {c0:.3e})"
            )));
        }
        // g carries the exact pointwise ratio on the grid; its band-limited
        // projection is only used where a spectral representation is needed.
        let gvals: Vec<f64> = c.values().iter().map(|&x| x / (x + a5)).collect();
        let g = SurfaceField::from_values(c.grid().clone(), gvals)?;
        Self::finish(c, g, a5)
    }

    /// Build from g directly; c is reconstructed as a5 g / (1 - g) pointwise.
    pub fn from_g(g: SurfaceField, a5: f64) -> Result<SignalField> {
        let gmin = g.min_refined();
        let gmax = g.max_refined();
        if !(gmin > 0.0 && gmax < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "signal g must take values in (0,1), got [{gmin:.4}, {gmax:.4}]"
            )));
        }
        let cvals: Vec<f64> = g.values().iter().map(|&x| a5 * x / (1.0 - x)).collect();
        let c = SurfaceField::from_values(g.grid().clone(), cvals)?;
        Self::finish(c, g, a5)
    }

    fn finish(c: SurfaceField, g: SurfaceField, a5: f64) -> Result<SignalField> {
        let c0 = c.min_refined();
        let g_max = g.max_refined();
        let gvals = g.values();
        let span = g_max - g.min_refined();
        let tol = 1e-6 * span.max(1e-12) + 1e-12;
        let argmax_nodes = (0..gvals.len())
            .filter(|&i| gvals[i] >= g_max - tol)
            .collect();
        Ok(SignalField {
            c,
            g,
            c0,
            g_max,
            argmax_nodes,
            a5,
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.c.grid()
    }

    /// alpha_0 = (1 - g_max) / g_max.
    pub fn alpha0(&self) -> f64 {
        (1.0 - self.g_max) / self.g_max
    }

    /// Largest geodesic distance from any of the given nodes to the argmax set.
    pub fn geodesic_distance_to_argmax(&self, node: usize) -> f64 {
        let grid = self.grid();
        let (i, j) = (node / grid.nlon(), node % grid.nlon());
        let p = grid.node_position(i, j);
        let mut best = std::f64::consts::PI;
        for &s in &self.argmax_nodes {
            let (si, sj) = (s / grid.nlon(), s % grid.nlon());
            let q = grid.node_position(si, sj);
            let dot = (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).clamp(-1.0, 1.0);
            best = best.min(dot.acos());
        }
        best
    }
}

/// Named signal presets.
pub mod preset {
    use super::*;

    /// Constant signal c = kappa.
    pub fn constant(grid: &Arc<SphereGrid>, kappa: f64, a5: f64) -> Result<SignalField> {
        SignalField::from_c(SurfaceField::constant(grid.clone(), kappa), a5)
    }

    /// Axisymmetric g = g0 + g1 cos(theta); requires 0 < g0 - |g1| and g0 + |g1| < 1.
    pub fn axisymmetric(grid: &Arc<SphereGrid>, g0: f64, g1: f64, a5: f64) -> Result<SignalField> {
        let g = SurfaceField::from_fn(grid, |p| g0 + g1 * p[2])?;
        SignalField::from_g(g.projected(), a5)
    }

    /// The manufactured construction: a degree-2 obstacle-limit profile
    /// u*(x) = kappa (1 + x3)^2 with saturation signal g = (1 - Lap u*) / (3/2),
    /// built so that the critical multiplier is exactly 1/2. Requires
    /// kappa < 1/16 so that g stays inside (0, 1).
    pub fn manufactured(grid: &Arc<SphereGrid>, kappa: f64, a5: f64) -> Result<SignalField> {
        if !(kappa > 0.0 && kappa < 1.0 / 16.0) {
            return Err(CoreError::InvalidParameter(format!(
                "manufactured preset needs 0 < kappa < 1/16, got {kappa}"
            )));
        }
        let g = SurfaceField::from_fn(grid, |p| {
            let t = p[2];
            (1.0 + 2.0 * kappa * (3.0 * t * t + 2.0 * t - 1.0)) / 1.5
        })?;
        SignalField::from_g(g.projected(), a5)
    }

    /// The exact critical profile of the manufactured construction.
    pub fn manufactured_u_star(grid: &Arc<SphereGrid>, kappa: f64) -> SurfaceField {
        SurfaceField::from_fn(grid, |p| kappa * (1.0 + p[2]) * (1.0 + p[2]))
            .expect("finite")
            .projected()
    }
}
