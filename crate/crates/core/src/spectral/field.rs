//! Scalar fields on the unit sphere with a dual coefficient/grid representation.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use super::grid::{same_grid, SphereGrid};
use crate::error::{CoreError, Result};

pub const SQRT_4PI: f64 = 3.5449077018110318; // sqrt(4 pi)

/// Real scalar field on the sphere. Immutable after construction; whichever
/// representation was not supplied is computed on first use and cached.
#[derive(Clone)]
pub struct SurfaceField {
    grid: Arc<SphereGrid>,
    coeffs: OnceLock<Vec<f64>>,
    values: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for SurfaceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SurfaceField(L={}, mean={:.6e})", self.grid.lmax(), self.mean())
    }
}

impl SurfaceField {
    pub fn from_coeffs(grid: Arc<SphereGrid>, coeffs: Vec<f64>) -> SurfaceField {
        assert_eq!(coeffs.len(), grid.ncoef());
        let cell = OnceLock::new();
        cell.set(coeffs).unwrap();
        SurfaceField {
            grid,
            coeffs: cell,
            values: OnceLock::new(),
        }
    }

    /// Build from grid samples; rejects non-finite input.
    pub fn from_values(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<SurfaceField> {
        assert_eq!(values.len(), grid.nnodes());
        grid.check_finite(&values, "SurfaceField::from_values")?;
        let cell = OnceLock::new();
        cell.set(values).unwrap();
        Ok(SurfaceField {
            grid,
            coeffs: OnceLock::new(),
            values: cell,
        })
    }

    pub fn zeros(grid: Arc<SphereGrid>) -> SurfaceField {
        let n = grid.ncoef();
        SurfaceField::from_coeffs(grid, vec![0.0; n])
    }

    /// Spatially constant field.
    pub fn constant(grid: Arc<SphereGrid>, value: f64) -> SurfaceField {
        let mut c = vec![0.0; grid.ncoef()];
        c[0] = value * SQRT_4PI;
        SurfaceField::from_coeffs(grid, c)
    }

    /// Field from a pointwise function of the unit-vector position.
    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn([f64; 3]) -> f64) -> Result<SurfaceField> {
        let mut values = vec![0.0; grid.nnodes()];
        for i in 0..grid.nlat() {
            for j in 0..grid.nlon() {
                values[i * grid.nlon() + j] = f(grid.node_position(i, j));
            }
        }
        SurfaceField::from_values(grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Coefficient view (computed by quadrature-exact analysis if needed).
    pub fn coeffs(&self) -> &[f64] {
        self.coeffs
            .get_or_init(|| self.grid.analyze_deg(self.grid.lmax(), self.values()))
    }

    /// Grid-sample view (computed by synthesis if needed).
    pub fn values(&self) -> &[f64] {
        self.values.get_or_init(|| self.grid.synthesize(self.coeffs()))
    }

    /// Whether the coefficient representation is currently materialized.
    pub fn has_coeffs(&self) -> bool {
        self.coeffs.get().is_some()
    }
    pub fn has_values(&self) -> bool {
        self.values.get().is_some()
    }

    pub fn coeff(&self, l: usize, m: isize) -> f64 {
        self.coeffs()[SphereGrid::coef_index(l, m)]
    }

    /// Integral over the sphere: sqrt(4 pi) * coeff(0,0).
    pub fn integral(&self) -> f64 {
        // Prefer the representation that is already materialized so that
        // value-primary fields (e.g. obstacle iterates) use plain quadrature.
        if let Some(v) = self.values.get() {
            let g = &self.grid;
            let mut s = 0.0;
            for i in 0..g.nlat() {
                let w = g.node_weight(i);
                let row = &v[i * g.nlon()..(i + 1) * g.nlon()];
                s += w * row.iter().sum::<f64>();
            }
            s
        } else {
            SQRT_4PI * self.coeffs()[0]
        }
    }

    /// Mean over the sphere.
    pub fn mean(&self) -> f64 {
        self.integral() / (4.0 * std::f64::consts::PI)
    }

    /// Quadrature inner product int f g.
    pub fn dot(&self, other: &SurfaceField) -> f64 {
        assert!(same_grid(&self.grid, &other.grid));
        let g = &self.grid;
        let (a, b) = (self.values(), other.values());
        let mut s = 0.0;
        for i in 0..g.nlat() {
            let w = g.node_weight(i);
            for j in 0..g.nlon() {
                s += w * a[i * g.nlon() + j] * b[i * g.nlon() + j];
            }
        }
        s
    }

    /// L2 norm by quadrature of the grid samples.
    pub fn norm_l2(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    /// L1 norm by quadrature.
    pub fn norm_l1(&self) -> f64 {
        let g = &self.grid;
        let v = self.values();
        let mut s = 0.0;
        for i in 0..g.nlat() {
            let w = g.node_weight(i);
            for j in 0..g.nlon() {
                s += w * v[i * g.nlon() + j].abs();
            }
        }
        s
    }

    /// Sobolev-type norm sum (1 + l(l+1))^k |c|^2, k = 1 (H1) or 2 (H2).
    pub fn norm_sobolev(&self, k: i32) -> f64 {
        let mut s = 0.0;
        for (idx, c) in self.coeffs().iter().enumerate() {
            let (l, _) = SphereGrid::coef_lm(idx);
            let lam = 1.0 + (l * (l + 1)) as f64;
            s += lam.powi(k) * c * c;
        }
        s.sqrt()
    }

    pub fn min_on_grid(&self) -> f64 {
        self.values().iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn max_on_grid(&self) -> f64 {
        self.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum over the sphere: evaluated on the 2x refined grid, then
    /// polished by a local quadratic fit in the tangent plane.
    pub fn min_refined(&self) -> f64 {
        self.extremum_refined(false)
    }
    pub fn max_refined(&self) -> f64 {
        self.extremum_refined(true)
    }

    fn extremum_refined(&self, maximize: bool) -> f64 {
        let fine = self.grid.refined_grid();
        let vals = fine.synthesize(self.coeffs());
        let sgn = if maximize { -1.0 } else { 1.0 };
        let mut best = f64::INFINITY;
        let mut best_ix = 0;
        for (ix, v) in vals.iter().enumerate() {
            if sgn * v < best {
                best = sgn * v;
                best_ix = ix;
            }
        }
        let (i, j) = (best_ix / fine.nlon(), best_ix % fine.nlon());
        let x0 = fine.node_position(i, j);
        let c = self.coeffs();
        let f = |p: [f64; 3]| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let t = (p[2] / r).clamp(-1.0, 1.0);
            let theta = t.acos();
            let phi = p[1].atan2(p[0]);
            sgn * SphereGrid::evaluate_at(c, theta, phi)
        };
        let refined = local_min_tangent(f, x0, std::f64::consts::PI / fine.lmax() as f64, best);
        sgn * refined
    }

    // ---- arithmetic (coefficient space) ----

    pub fn scale(&self, a: f64) -> SurfaceField {
        let c = self.coeffs().iter().map(|v| a * v).collect();
        SurfaceField::from_coeffs(self.grid.clone(), c)
    }

    pub fn add(&self, other: &SurfaceField) -> SurfaceField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SurfaceField) -> SurfaceField {
        self.axpy(-1.0, other)
    }

    /// self + a * other.
    pub fn axpy(&self, a: f64, other: &SurfaceField) -> SurfaceField {
        assert!(same_grid(&self.grid, &other.grid));
        let c = self
            .coeffs()
            .iter()
            .zip(other.coeffs())
            .map(|(x, y)| x + a * y)
            .collect();
        SurfaceField::from_coeffs(self.grid.clone(), c)
    }

    pub fn add_constant(&self, a: f64) -> SurfaceField {
        let mut c = self.coeffs().to_vec();
        c[0] += a * SQRT_4PI;
        SurfaceField::from_coeffs(self.grid.clone(), c)
    }

    /// Re-projection onto degree <= lmax of this field's own grid (identity for
    /// coefficient-primary fields; analysis for value-primary ones).
    pub fn projected(&self) -> SurfaceField {
        SurfaceField::from_coeffs(self.grid.clone(), self.coeffs().to_vec())
    }

    /// Resample onto another grid (synthesis of this field's coefficients).
    pub fn on_grid(&self, grid: &Arc<SphereGrid>) -> SurfaceField {
        assert!(grid.lmax() >= self.grid.lmax());
        let vals = grid.synthesize(self.coeffs());
        SurfaceField::from_values(grid.clone(), vals).expect("finite by construction")
    }

    // ---- PSF1 binary format ----

    /// Write the PSF1 dump: magic "PSF1", LE u32 L, nlat, nlon, then
    /// nlat*nlon f64 values (latitude-major), then (L+1)^2 coefficients.
    pub fn write_psf1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"PSF1")?;
        for v in [self.grid.lmax() as u32, self.grid.nlat() as u32, self.grid.nlon() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        for c in self.coeffs() {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a PSF1 dump. The stored values are authoritative; coefficients are
    /// verified against the values and rejected on mismatch.
    pub fn read_psf1<R: Read>(mut r: R) -> Result<SurfaceField> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PSF1" {
            return Err(CoreError::Format {
                context: "PSF1".into(),
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
        if lmax < 1 || lmax > 4096 || nlat < lmax + 1 || nlon < 2 * lmax + 1 {
            return Err(CoreError::Format {
                context: "PSF1".into(),
                detail: format!("inconsistent header L={lmax} nlat={nlat} nlon={nlon}"),
            });
        }
        let grid = SphereGrid::with_resolution(lmax, nlat, nlon);
        let mut f64buf = [0u8; 8];
        let mut values = Vec::with_capacity(grid.nnodes());
        for _ in 0..grid.nnodes() {
            r.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        let mut coeffs = Vec::with_capacity(grid.ncoef());
        for _ in 0..grid.ncoef() {
            r.read_exact(&mut f64buf)?;
            coeffs.push(f64::from_le_bytes(f64buf));
        }
        let field = SurfaceField::from_values(grid.clone(), values)?;
        let recomputed = field.coeffs();
        let scale = coeffs.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        for (a, b) in recomputed.iter().zip(&coeffs) {
            if (a - b).abs() > 1e-8 * scale {
                return Err(CoreError::Format {
                    context: "PSF1".into(),
                    detail: "stored coefficients disagree with stored values".into(),
                });
            }
        }
        Ok(field)
    }
}

/// Minimize f over the sphere near x0 by nested tangent-plane quadratic fits.
fn local_min_tangent(
    f: impl Fn([f64; 3]) -> f64,
    x0: [f64; 3],
    initial_step: f64,
    f0: f64,
) -> f64 {
    let mut center = x0;
    let mut best = f0;
    let mut step = initial_step;
    for _ in 0..8 {
        // tangent frame at center
        let up = if center[2].abs() < 0.9 {
            [0.0, 0.0, 1.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        let e1 = normalize(cross(up, center));
        let e2 = normalize(cross(center, e1));
        let mut improved = false;
        let mut best_local = best;
        let mut best_pt = center;
        for a in -2..=2 {
            for b in -2..=2 {
                if a == 0 && b == 0 {
                    continue;
                }
                let p = normalize([
                    center[0] + step * (a as f64 * e1[0] + b as f64 * e2[0]) / 2.0,
                    center[1] + step * (a as f64 * e1[1] + b as f64 * e2[1]) / 2.0,
                    center[2] + step * (a as f64 * e1[2] + b as f64 * e2[2]) / 2.0,
                ]);
                let v = f(p);
                if v < best_local {
                    best_local = v;
                    best_pt = p;
                    improved = true;
                }
            }
        }
        if improved {
            center = best_pt;
            best = best_local;
        } else {
            step *= 0.25;
        }
        if step < 1e-9 {
            break;
        }
    }
    best
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}
