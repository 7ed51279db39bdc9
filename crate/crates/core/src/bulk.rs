//! Cytosolic field on the unit ball: per-spherical-harmonic-mode radial
//! profiles on a cell-centered mesh, harmonic extension, and implicit
//! diffusion steps with Robin boundary coupling.
//!
//! The radial discretization is finite-volume in r^2 dr measure with faces at
//! k h, k = 0..nr; cell centers r_k = (k + 1/2) h carry the unknowns. The
//! r = 0 face has zero area, so the origin needs no special casing; mode
//! l >= 1 profiles vanish like r^l there anyway.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::spectral::{same_grid, SphereGrid, SurfaceField, SQRT_4PI};

/// Scalar field on the unit ball stored as radial profiles per (l, m) mode.
#[derive(Clone)]
pub struct BulkField {
    grid: Arc<SphereGrid>,
    nr: usize,
    /// modes[coef * nr + k] = W_lm(r_k)
    modes: Vec<f64>,
}

impl std::fmt::Debug for BulkField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BulkField(L={}, nr={}, mass={:.6e})",
            self.grid.lmax(),
            self.nr,
            self.integral()
        )
    }
}

/// Volume of radial cell k in the r^2 dr measure (faces at kh and (k+1)h).
#[inline]
fn cell_volume(nr: usize, k: usize) -> f64 {
    let h = 1.0 / nr as f64;
    let a = k as f64 * h;
    let b = (k + 1) as f64 * h;
    (b * b * b - a * a * a) / 3.0
}

impl BulkField {
    pub fn zeros(grid: Arc<SphereGrid>, nr: usize) -> BulkField {
        assert!(nr >= 4);
        let n = grid.ncoef() * nr;
        BulkField {
            grid,
            nr,
            modes: vec![0.0; n],
        }
    }

    /// Spatially constant bulk field.
    pub fn constant(grid: Arc<SphereGrid>, nr: usize, value: f64) -> BulkField {
        let mut b = Self::zeros(grid, nr);
        for k in 0..nr {
            b.modes[k] = value * SQRT_4PI;
        }
        b
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn nr(&self) -> usize {
        self.nr
    }
    /// Radial node r_k = (k + 1/2) / nr.
    pub fn r_node(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.nr as f64
    }
    pub fn mode(&self, coef: usize) -> &[f64] {
        &self.modes[coef * self.nr..(coef + 1) * self.nr]
    }
    fn mode_mut(&mut self, coef: usize) -> &mut [f64] {
        &mut self.modes[coef * self.nr..(coef + 1) * self.nr]
    }

    /// Boundary trace at r = 1 by one-sided quadratic extrapolation
    /// (second order on the cell-centered mesh).
    pub fn trace(&self) -> SurfaceField {
        let nc = self.grid.ncoef();
        let mut coeffs = vec![0.0; nc];
        for c in 0..nc {
            let m = self.mode(c);
            coeffs[c] = (15.0 * m[self.nr - 1] - 10.0 * m[self.nr - 2] + 3.0 * m[self.nr - 3]) / 8.0;
        }
        SurfaceField::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Trace at the last cell center (used by the discrete Robin flux).
    pub fn last_cell_trace(&self) -> SurfaceField {
        let nc = self.grid.ncoef();
        let mut coeffs = vec![0.0; nc];
        for c in 0..nc {
            coeffs[c] = self.mode(c)[self.nr - 1];
        }
        SurfaceField::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Outward normal derivative at r = 1 per mode by one-sided second-order
    /// finite differences (the independent cross-check of the spectral
    /// Dirichlet-to-Neumann map).
    pub fn radial_derivative_at_boundary(&self) -> SurfaceField {
        let h = 1.0 / self.nr as f64;
        let nc = self.grid.ncoef();
        let mut coeffs = vec![0.0; nc];
        for c in 0..nc {
            let m = self.mode(c);
            coeffs[c] = (2.0 * m[self.nr - 1] - 3.0 * m[self.nr - 2] + m[self.nr - 3]) / h;
        }
        SurfaceField::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Total bulk integral: FV radial quadrature of the (0,0) profile times sqrt(4 pi).
    pub fn integral(&self) -> f64 {
        let m = self.mode(0);
        let s: f64 = (0..self.nr).map(|k| m[k] * cell_volume(self.nr, k)).sum();
        SQRT_4PI * s
    }

    /// Mean over the ball.
    pub fn mean(&self) -> f64 {
        self.integral() / (4.0 * std::f64::consts::PI / 3.0)
    }

    /// Integral of w^2 over the ball (FV radial x exact angular quadrature).
    pub fn integral_sq(&self) -> f64 {
        let mut s = 0.0;
        for c in 0..self.grid.ncoef() {
            let m = self.mode(c);
            for k in 0..self.nr {
                s += m[k] * m[k] * cell_volume(self.nr, k);
            }
        }
        s
    }

    /// || w - mean w ||_{L2(ball)}.
    pub fn variance_norm(&self) -> f64 {
        let vol = 4.0 * std::f64::consts::PI / 3.0;
        let mean = self.mean();
        (self.integral_sq() - vol * mean * mean).max(0.0).sqrt()
    }

    /// || grad w ||^2_{L2(ball)} via per-mode face differences:
    /// int r^2 (W')^2 dr + l(l+1) int W^2 dr.
    pub fn grad_norm_sq(&self) -> f64 {
        let h = 1.0 / self.nr as f64;
        let mut s = 0.0;
        for c in 0..self.grid.ncoef() {
            let (l, _) = SphereGrid::coef_lm(c);
            let m = self.mode(c);
            for k in 1..self.nr {
                let rf = k as f64 * h;
                let d = (m[k] - m[k - 1]) / h;
                s += rf * rf * d * d * h;
            }
            let ll1 = (l * (l + 1)) as f64;
            if ll1 > 0.0 {
                for k in 0..self.nr {
                    s += ll1 * m[k] * m[k] * h;
                }
            }
        }
        s
    }

    /// Pointwise minimum over all radial nodes of the synthesized field,
    /// scanned shell by shell.
    pub fn min_value(&self) -> f64 {
        let nc = self.grid.ncoef();
        let mut shell = vec![0.0; nc];
        let mut best = f64::INFINITY;
        for k in 0..self.nr {
            for c in 0..nc {
                shell[c] = self.modes[c * self.nr + k];
            }
            let vals = self.grid.synthesize(&shell);
            best = best.min(vals.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        best
    }

    // ---- PBF1 binary format ----

    pub fn write_pbf1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"PBF1")?;
        for v in [
            self.grid.lmax() as u32,
            self.grid.nlat() as u32,
            self.grid.nlon() as u32,
            self.nr as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.modes {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_pbf1<R: Read>(mut r: R) -> Result<BulkField> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PBF1" {
            return Err(CoreError::Format {
                context: "PBF1".into(),
                detail: format!("bad magic {magic:?}"),
            });
        }
        let mut u32buf = [0u8; 4];
        let mut next_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let lmax = next_u32(&mut r)? as usize;
        let nlat = next_u32(&mut r)? as usize;
        let nlon = next_u32(&mut r)? as usize;
        let nr = next_u32(&mut r)? as usize;
        if lmax < 1 || lmax > 4096 || nlat < lmax + 1 || nlon < 2 * lmax + 1 || nr < 4 {
            return Err(CoreError::Format {
                context: "PBF1".into(),
                detail: format!("inconsistent header L={lmax} nlat={nlat} nlon={nlon} nr={nr}"),
            });
        }
        let grid = SphereGrid::with_resolution(lmax, nlat, nlon);
        let mut field = BulkField::zeros(grid, nr);
        let mut f64buf = [0u8; 8];
        for v in field.modes.iter_mut() {
            r.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
            if !v.is_finite() {
                return Err(CoreError::Format {
                    context: "PBF1".into(),
                    detail: "non-finite sample".into(),
                });
            }
        }
        Ok(field)
    }
}

/// Harmonic extension of boundary data: per-mode profile c_lm r^l (the exact
/// regular solution of the radial Laplace equation), sampled at cell centers.
pub fn harmonic_extend(f: &SurfaceField, nr: usize) -> BulkField {
    let grid = f.grid().clone();
    let mut b = BulkField::zeros(grid, nr);
    let coeffs = f.coeffs().to_vec();
    for (c, &clm) in coeffs.iter().enumerate() {
        let (l, _) = SphereGrid::coef_lm(c);
        let m = b.mode_mut(c);
        for (k, slot) in m.iter_mut().enumerate() {
            let r = (k as f64 + 0.5) / nr as f64;
            *slot = clm * r.powi(l as i32);
        }
    }
    b
}

/// Result of one implicit bulk step: the new field plus the effective
/// boundary flux density (into the bulk) actually applied, per mode:
/// flux = chi (a5 v - a6 (W^n + W^{n+1})_last / 2). The discrete bulk mass
/// change equals dt * int_Gamma flux to roundoff, so handing `flux` to the
/// surface integrator makes the coupled exchange conservative by construction.
pub struct HeatStep {
    pub field: BulkField,
    pub flux: SurfaceField,
}

/// One Crank-Nicolson step of the per-mode radial diffusion
/// dW/dt = D (W'' + (2/r) W' - l(l+1) W / r^2) with the Robin condition
/// D dW/dr = a5 v - a6 W at r = 1 (v frozen at its current value).
pub fn radial_heat_step(
    w: &BulkField,
    v: &SurfaceField,
    dt: f64,
    diffusivity: f64,
    a5: f64,
    a6: f64,
) -> Result<HeatStep> {
    assert!(dt > 0.0 && diffusivity > 0.0);
    if !same_grid(w.grid(), v.grid()) {
        return Err(CoreError::GridMismatch {
            left: format!("{:?}", w.grid()),
            right: format!("{:?}", v.grid()),
        });
    }
    let nr = w.nr;
    let h = 1.0 / nr as f64;
    let nc = w.grid.ncoef();
    let d = diffusivity;
    // Robin elimination factor: D * flux_top = chi (a5 v - a6 W_last).
    let chi = 1.0 / (1.0 + a6 * h / (2.0 * d));

    let vc = v.coeffs().to_vec();
    let mut out = BulkField::zeros(w.grid.clone(), nr);
    let mut flux = vec![0.0; nc];

    let results: Vec<(Vec<f64>, f64)> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let (l, _) = SphereGrid::coef_lm(c);
            let ll1 = (l * (l + 1)) as f64;
            let wm = w.mode(c);
            // Assemble L W (spatial operator, affine part separate):
            // V_k dW_k/dt = d [rho_{k+1}^2 (W_{k+1}-W_k)/h - rho_k^2 (W_k-W_{k-1})/h]
            //              - d ll1 h W_k   (+ boundary flux on the last cell)
            // Boundary: d * rho^2 W'(1) = chi (a5 v_lm - a6 W_last), rho = 1.
            let mut lower = vec![0.0; nr];
            let mut diag = vec![0.0; nr];
            let mut upper = vec![0.0; nr];
            let mut rhs = vec![0.0; nr];
            let half = 0.5;
            for k in 0..nr {
                let vk = cell_volume(nr, k);
                let rho_lo = k as f64 * h;
                let rho_hi = (k + 1) as f64 * h;
                let c_lo = d * rho_lo * rho_lo / h;
                let c_hi = if k + 1 < nr { d * rho_hi * rho_hi / h } else { 0.0 };
                // row: (V/dt) W^{n+1} - 1/2 L W^{n+1} = (V/dt) W^n + 1/2 L W^n + const
                let a_diag = -(c_lo + c_hi) - d * ll1 * h
                    + if k + 1 == nr { -chi * a6 } else { 0.0 };
                let a_lo = c_lo;
                let a_hi = c_hi;
                diag[k] = vk / dt - half * a_diag;
                if k > 0 {
                    lower[k] = -half * a_lo;
                }
                if k + 1 < nr {
                    upper[k] = -half * a_hi;
                }
                let mut lw = a_diag * wm[k];
                if k > 0 {
                    lw += a_lo * wm[k - 1];
                }
                if k + 1 < nr {
                    lw += a_hi * wm[k + 1];
                }
                rhs[k] = vk / dt * wm[k] + half * lw;
                if k + 1 == nr {
                    // Robin source: chi a5 v at both time levels (v frozen)
                    rhs[k] += chi * a5 * vc[c];
                }
            }
            let sol = thomas_solve(&lower, &diag, &upper, &rhs);
            let f = chi * (a5 * vc[c] - a6 * (wm[nr - 1] + sol[nr - 1]) / 2.0);
            (sol, f)
        })
        .collect();

    for (c, (sol, f)) in results.into_iter().enumerate() {
        out.mode_mut(c).copy_from_slice(&sol);
        flux[c] = f;
    }
    Ok(HeatStep {
        field: out,
        flux: SurfaceField::from_coeffs(w.grid.clone(), flux),
    })
}

/// Thomas algorithm; asserts nonsingularity (guaranteed for dt > 0, D > 0).
fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    assert!(piv.abs() > 0.0, "singular tridiagonal system");
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for k in 1..n {
        piv = diag[k] - lower[k] * c[k - 1];
        assert!(piv.abs() > 0.0, "singular tridiagonal system");
        if k + 1 < n {
            c[k] = upper[k] / piv;
        }
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}
