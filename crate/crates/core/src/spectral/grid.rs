//! Gauss-Legendre x equispaced-longitude grid on the unit sphere, with the
//! spherical-harmonic transform machinery shared by every field operation.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::legendre::{gauss_legendre, normalized_plm, packed_index, packed_len};
use crate::error::{CoreError, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Quadrature grid for degree-`lmax` spherical-harmonic transforms.
///
/// Latitudes are Gauss-Legendre nodes in t = cos(theta) (south to north),
/// longitudes are equispaced. The quadrature weights carry the full area
/// measure, so they sum to 4 pi. Values are stored row-major, latitude
/// (index i) outer, longitude (index j) inner.
pub struct SphereGrid {
    lmax: usize,
    nlat: usize,
    nlon: usize,
    /// Gauss nodes t_i = cos(theta_i), ascending.
    pub cos_theta: Vec<f64>,
    /// sin(theta_i) > 0.
    pub sin_theta: Vec<f64>,
    /// Longitudes phi_j = 2 pi j / nlon.
    pub phi: Vec<f64>,
    /// Latitude quadrature weights including the 2 pi / nlon azimuthal factor.
    /// Node (i, j) has area weight `lat_weight[i]` independent of j.
    pub lat_weight: Vec<f64>,
    /// Packed normalized Legendre table per latitude: plm[i][packed(l,m)].
    plm: Vec<Vec<f64>>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    dealias: OnceLock<Arc<SphereGrid>>,
    refined: OnceLock<Arc<SphereGrid>>,
    /// Dense synthesis matrix (nlat*nlon) x ncoef for this grid's own lmax.
    synth_matrix: OnceLock<Arc<nalgebra::DMatrix<f64>>>,
    /// Dense grid-to-grid Laplace-Beltrami collocation matrix.
    laplacian_matrix: OnceLock<Arc<nalgebra::DMatrix<f64>>>,
    /// Dense grid-to-grid matrix of u -> N(u) + (u - mean u).
    ntilde_matrix: OnceLock<Arc<nalgebra::DMatrix<f64>>>,
}

impl std::fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SphereGrid(L={}, nlat={}, nlon={})",
            self.lmax, self.nlat, self.nlon
        )
    }
}

impl SphereGrid {
    /// Standard grid for degree `lmax`: nlat = lmax + 1, nlon = 2 (lmax + 1).
    ///
    /// Exact quadrature for integrands of spherical-harmonic degree <= 2 lmax + 1.
    pub fn new(lmax: usize) -> Arc<SphereGrid> {
        assert!(lmax >= 1, "need lmax >= 1");
        Self::with_resolution(lmax, lmax + 1, 2 * (lmax + 1))
    }

    /// Grid with explicit resolution; requires nlat >= lmax + 1 and nlon >= 2 lmax + 1.
    pub fn with_resolution(lmax: usize, nlat: usize, nlon: usize) -> Arc<SphereGrid> {
        assert!(nlat >= lmax + 1, "nlat {nlat} < lmax+1 = {}", lmax + 1);
        assert!(nlon >= 2 * lmax + 1, "nlon {nlon} < 2 lmax+1");
        let (nodes, gl_weights) = gauss_legendre(nlat);
        let sin_theta: Vec<f64> = nodes.iter().map(|t| (1.0 - t * t).sqrt()).collect();
        let phi: Vec<f64> = (0..nlon)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / nlon as f64)
            .collect();
        let azimuth = 2.0 * std::f64::consts::PI / nlon as f64;
        let lat_weight: Vec<f64> = gl_weights.iter().map(|w| w * azimuth).collect();
        let plen = packed_len(lmax);
        let plm: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&x| {
                let mut buf = vec![0.0; plen];
                normalized_plm(lmax, x, &mut buf);
                buf
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(nlon);
        let fft_inv = planner.plan_fft_inverse(nlon);
        Arc::new(SphereGrid {
            lmax,
            nlat,
            nlon,
            cos_theta: nodes,
            sin_theta,
            phi,
            lat_weight,
            plm,
            fft_fwd,
            fft_inv,
            dealias: OnceLock::new(),
            refined: OnceLock::new(),
            synth_matrix: OnceLock::new(),
            laplacian_matrix: OnceLock::new(),
            ntilde_matrix: OnceLock::new(),
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }
    pub fn nlat(&self) -> usize {
        self.nlat
    }
    pub fn nlon(&self) -> usize {
        self.nlon
    }
    /// Number of grid nodes nlat * nlon.
    pub fn nnodes(&self) -> usize {
        self.nlat * self.nlon
    }
    /// Number of real coefficients (lmax + 1)^2.
    pub fn ncoef(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    /// Flat coefficient index of (l, m), m in [-l, l]; (l, m) lexicographic.
    /// Negative m are the sin(|m| phi) components.
    #[inline]
    pub fn coef_index(l: usize, m: isize) -> usize {
        debug_assert!(m.unsigned_abs() <= l);
        l * l + (m + l as isize) as usize
    }

    /// Inverse of `coef_index`.
    #[inline]
    pub fn coef_lm(idx: usize) -> (usize, isize) {
        let l = (idx as f64).sqrt() as usize;
        let l = if (l + 1) * (l + 1) <= idx { l + 1 } else { l };
        (l, idx as isize - (l * l + l) as isize)
    }

    /// Quadrature weight of node (i, j) — independent of j on this grid.
    #[inline]
    pub fn node_weight(&self, i: usize) -> f64 {
        self.lat_weight[i]
    }

    /// Sum of all quadrature weights (should be 4 pi).
    pub fn total_weight(&self) -> f64 {
        self.lat_weight.iter().sum::<f64>() * self.nlon as f64
    }

    /// Unit-vector position of node (i, j).
    pub fn node_position(&self, i: usize, j: usize) -> [f64; 3] {
        let ct = self.cos_theta[i];
        let st = self.sin_theta[i];
        [st * self.phi[j].cos(), st * self.phi[j].sin(), ct]
    }

    /// The dealiasing companion grid with L_grid = ceil(3 lmax / 2), used for
    /// pointwise nonlinear products. Cached.
    pub fn dealias_grid(self: &Arc<Self>) -> Arc<SphereGrid> {
        self.dealias
            .get_or_init(|| {
                let lg = (3 * self.lmax).div_ceil(2);
                SphereGrid::new(lg)
            })
            .clone()
    }

    /// A 2x refined grid (L_fine = 2 lmax) for extremum location. Cached.
    pub fn refined_grid(self: &Arc<Self>) -> Arc<SphereGrid> {
        self.refined
            .get_or_init(|| SphereGrid::new(2 * self.lmax))
            .clone()
    }

    /// Forward transform: grid samples -> real SH coefficients of degree <= deg.
    ///
    /// Exact (to roundoff) for band-limited inputs when deg <= self.lmax.
    pub fn analyze_deg(&self, deg: usize, values: &[f64]) -> Vec<f64> {
        assert!(deg <= self.lmax);
        assert_eq!(values.len(), self.nnodes());
        let ncoef = (deg + 1) * (deg + 1);
        let mut coeffs = vec![0.0; ncoef];
        // Azimuthal DFT per latitude row.
        let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.nlon];
        // fourier[i][m]: (a, b) with f = sum a cos + b sin
        let mut fourier = vec![[0.0f64; 2]; self.nlat * (deg + 1)];
        for i in 0..self.nlat {
            for j in 0..self.nlon {
                row[j] = Complex::new(values[i * self.nlon + j], 0.0);
            }
            self.fft_fwd.process(&mut row);
            for m in 0..=deg {
                fourier[i * (deg + 1) + m] = [row[m].re, -row[m].im];
            }
        }
        // Legendre quadrature per order m.
        for m in 0..=deg {
            let scale = if m == 0 { 1.0 } else { SQRT_2 };
            for l in m..=deg {
                let mut acc_c = 0.0;
                let mut acc_s = 0.0;
                for i in 0..self.nlat {
                    let p = self.plm[i][packed_index(self.lmax, l, m)] * self.lat_weight[i];
                    let ab = fourier[i * (deg + 1) + m];
                    acc_c += p * ab[0];
                    acc_s += p * ab[1];
                }
                coeffs[Self::coef_index(l, m as isize)] = scale * acc_c;
                if m > 0 {
                    coeffs[Self::coef_index(l, -(m as isize))] = scale * acc_s;
                }
            }
        }
        coeffs
    }

    /// Inverse transform: real SH coefficients (degree deg implied by length)
    /// -> grid samples on this grid. deg may exceed nothing: deg <= self.lmax.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let deg = (coeffs.len() as f64).sqrt() as usize - 1;
        assert_eq!((deg + 1) * (deg + 1), coeffs.len());
        assert!(deg <= self.lmax);
        let mut values = vec![0.0; self.nnodes()];
        let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.nlon];
        for i in 0..self.nlat {
            for c in row.iter_mut() {
                *c = Complex::new(0.0, 0.0);
            }
            for m in 0..=deg {
                let scale = if m == 0 { 1.0 } else { SQRT_2 };
                let mut ac = 0.0;
                let mut as_ = 0.0;
                for l in m..=deg {
                    let p = self.plm[i][packed_index(self.lmax, l, m)];
                    ac += p * coeffs[Self::coef_index(l, m as isize)];
                    if m > 0 {
                        as_ += p * coeffs[Self::coef_index(l, -(m as isize))];
                    }
                }
                // f_row(phi) = sum_m scale (ac cos + as sin); pack as spectrum for inverse FFT
                row[m] += Complex::new(scale * ac / 2.0, -scale * as_ / 2.0);
                if m == 0 {
                    row[0] += Complex::new(scale * ac / 2.0, 0.0);
                } else {
                    row[self.nlon - m] += Complex::new(scale * ac / 2.0, scale * as_ / 2.0);
                }
            }
            self.fft_inv.process(&mut row);
            for j in 0..self.nlon {
                values[i * self.nlon + j] = row[j].re;
            }
        }
        values
    }

    /// Evaluate a coefficient vector at an arbitrary point (theta, phi).
    /// Direct basis summation, O(deg^2); used for refined extremum location.
    pub fn evaluate_at(coeffs: &[f64], theta: f64, phi: f64) -> f64 {
        let deg = (coeffs.len() as f64).sqrt() as usize - 1;
        let mut plm = vec![0.0; packed_len(deg)];
        normalized_plm(deg, theta.cos(), &mut plm);
        let mut sum = 0.0;
        for m in 0..=deg {
            let (c, s) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
            let scale = if m == 0 { 1.0 } else { SQRT_2 };
            for l in m..=deg {
                let p = plm[packed_index(deg, l, m)];
                let mut v = coeffs[Self::coef_index(l, m as isize)] * c;
                if m > 0 {
                    v += coeffs[Self::coef_index(l, -(m as isize))] * s;
                }
                sum += scale * p * v;
            }
        }
        sum
    }

    /// Dense synthesis matrix S with S[node, coef] = Y_coef(node), for this
    /// grid's own lmax. Cached; ~(nlat nlon)(lmax+1)^2 doubles.
    pub fn synthesis_matrix(&self) -> Arc<nalgebra::DMatrix<f64>> {
        self.synth_matrix
            .get_or_init(|| {
                let n = self.nnodes();
                let nc = self.ncoef();
                let mut s = nalgebra::DMatrix::zeros(n, nc);
                for i in 0..self.nlat {
                    for m in 0..=self.lmax {
                        let scale = if m == 0 { 1.0 } else { SQRT_2 };
                        for l in m..=self.lmax {
                            let p = scale * self.plm[i][packed_index(self.lmax, l, m)];
                            for j in 0..self.nlon {
                                let node = i * self.nlon + j;
                                s[(node, Self::coef_index(l, m as isize))] =
                                    p * (m as f64 * self.phi[j]).cos();
                                if m > 0 {
                                    s[(node, Self::coef_index(l, -(m as isize)))] =
                                        p * (m as f64 * self.phi[j]).sin();
                                }
                            }
                        }
                    }
                }
                Arc::new(s)
            })
            .clone()
    }

    /// Dense grid-to-grid collocation matrix of a diagonal-in-SH operator with
    /// per-degree symbol `sym(l)`: values -> analyze -> scale -> synthesize.
    fn diagonal_operator_matrix(&self, sym: impl Fn(usize) -> f64) -> nalgebra::DMatrix<f64> {
        let s = self.synthesis_matrix();
        let n = self.nnodes();
        let nc = self.ncoef();
        // A[coef, node] = w_node Y_coef(node) = w_node S[node, coef]
        let mut sa = nalgebra::DMatrix::zeros(n, nc);
        // sa = S * diag(sym); then K = sa * A
        for c in 0..nc {
            let (l, _) = Self::coef_lm(c);
            let f = sym(l);
            for r in 0..n {
                sa[(r, c)] = s[(r, c)] * f;
            }
        }
        let mut at = nalgebra::DMatrix::zeros(nc, n);
        for r in 0..n {
            let w = self.lat_weight[r / self.nlon];
            for c in 0..nc {
                at[(c, r)] = s[(r, c)] * w;
            }
        }
        sa * at
    }

    /// Cached dense Laplace-Beltrami collocation matrix (symbol -l(l+1)).
    pub fn laplacian_matrix(&self) -> Arc<nalgebra::DMatrix<f64>> {
        self.laplacian_matrix
            .get_or_init(|| {
                Arc::new(self.diagonal_operator_matrix(|l| -((l * (l + 1)) as f64)))
            })
            .clone()
    }

    /// Cached dense matrix of u -> N(u) + (u - mean u) (symbol l + 1 for l >= 1, 0 for l = 0).
    pub fn ntilde_matrix(&self) -> Arc<nalgebra::DMatrix<f64>> {
        self.ntilde_matrix
            .get_or_init(|| {
                Arc::new(self.diagonal_operator_matrix(|l| if l == 0 { 0.0 } else { (l + 1) as f64 }))
            })
            .clone()
    }

    /// Reject non-finite samples with a diagnostic.
    pub fn check_finite(&self, values: &[f64], context: &str) -> Result<()> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos / self.nlon, pos % self.nlon);
            return Err(CoreError::NonFinite {
                context: format!("{context} at node (lat {i}, lon {j})"),
            });
        }
        Ok(())
    }
}

/// Logical grid compatibility (same lmax and resolution).
pub fn same_grid(a: &Arc<SphereGrid>, b: &Arc<SphereGrid>) -> bool {
    Arc::ptr_eq(a, b) || (a.lmax == b.lmax && a.nlat == b.nlat && a.nlon == b.nlon)
}
