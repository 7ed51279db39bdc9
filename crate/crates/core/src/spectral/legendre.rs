//! Gauss-Legendre quadrature and fully normalized associated Legendre functions.
//!
//! The normalization is chosen so that the real spherical harmonic basis
//! built from these functions is orthonormal on the unit sphere:
//! `Y_{l0} = Pbar_{l0}(cos th)` and for m > 0
//! `Y_{lm}^{cos} = sqrt(2) Pbar_{lm}(cos th) cos(m ph)`,
//! `Y_{lm}^{sin} = sqrt(2) Pbar_{lm}(cos th) sin(m ph)`.

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the degree-n Legendre polynomial; accurate to
/// machine precision for the grid sizes used here (n <= a few hundred).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..(n + 1) / 2 {
        // Initial guess (Abramowitz & Stegun 22.16.6 style).
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_p_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = legendre_p_and_deriv(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_p_and_deriv(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_p_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Triangular index of (l, m) with 0 <= m <= l <= lmax into a packed table:
/// entries ordered m = 0..lmax, then l = m..lmax within each m block.
#[inline]
pub fn packed_index(lmax: usize, l: usize, m: usize) -> usize {
    // offset of block m: sum_{k<m} (lmax + 1 - k) = m (2 lmax + 3 - m) / 2
    m * (2 * lmax + 3 - m) / 2 + (l - m)
}

/// Number of packed (l, m) pairs with 0 <= m <= l <= lmax.
#[inline]
pub fn packed_len(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

/// Fully normalized associated Legendre values Pbar_{lm}(x) for all
/// 0 <= m <= l <= lmax at a single point, written into `out` (packed layout).
///
/// Stable three-term recurrences; no Condon-Shortley phase.
pub fn normalized_plm(lmax: usize, x: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), packed_len(lmax));
    let s = (1.0 - x * x).max(0.0).sqrt();
    // Pbar_{00} = 1/sqrt(4 pi)
    let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for m in 0..=lmax {
        out[packed_index(lmax, m, m)] = pmm;
        if m + 1 <= lmax {
            // Pbar_{m+1,m} = sqrt(2m+3) x Pbar_{mm}
            let pm1 = ((2 * m + 3) as f64).sqrt() * x * pmm;
            out[packed_index(lmax, m + 1, m)] = pm1;
            let mut plm2 = pmm;
            let mut plm1 = pm1;
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((2.0 * lf + 1.0) * ((lf - 1.0) * (lf - 1.0) - mf * mf))
                    / ((2.0 * lf - 3.0) * (lf * lf - mf * mf)))
                    .sqrt();
                let pl = a * x * plm1 - b * plm2;
                out[packed_index(lmax, l, m)] = pl;
                plm2 = plm1;
                plm1 = pl;
            }
        }
        // Pbar_{m+1,m+1} = sqrt((2m+3)/(2m+2)) s Pbar_{mm}
        pmm *= ((2 * m + 3) as f64 / (2 * m + 2) as f64).sqrt() * s;
    }
}
