//! Differential and nonlocal operators on surface fields, all diagonal in the
//! spherical-harmonic basis, plus dealiased pointwise nonlinearities.

use std::sync::Arc;

use super::field::SurfaceField;
use super::grid::{same_grid, SphereGrid};
use crate::error::{CoreError, Result};

fn diagonal_map(f: &SurfaceField, sym: impl Fn(usize) -> f64) -> SurfaceField {
    let mut c = f.coeffs().to_vec();
    for (idx, v) in c.iter_mut().enumerate() {
        let (l, _) = SphereGrid::coef_lm(idx);
        *v *= sym(l);
    }
    SurfaceField::from_coeffs(f.grid().clone(), c)
}

/// Laplace-Beltrami operator: coefficient (l, m) scaled by -l(l+1).
pub fn laplace_beltrami(f: &SurfaceField) -> SurfaceField {
    diagonal_map(f, |l| -((l * (l + 1)) as f64))
}

/// Dirichlet-to-Neumann map N of the unit ball: harmonic extension r^l Y_lm
/// has outward normal derivative l Y_lm at r = 1. Constants map to 0.
pub fn dtn(f: &SurfaceField) -> SurfaceField {
    diagonal_map(f, |l| l as f64)
}

/// Neumann-to-Dirichlet map T: inverse of N on mean-zero data, T(const) = 0.
pub fn ntd(f: &SurfaceField) -> SurfaceField {
    diagonal_map(f, |l| if l == 0 { 0.0 } else { 1.0 / l as f64 })
}

/// The positive-semidefinite map u -> N(u) + (u - mean u) (symbol l + 1, l >= 1).
pub fn ntilde(f: &SurfaceField) -> SurfaceField {
    diagonal_map(f, |l| if l == 0 { 0.0 } else { (l + 1) as f64 })
}

/// T(Laplacian(u)) computed along two independent routes:
/// via ntd(laplace_beltrami(u)) and via -N(u) - (u - mean u).
/// Both must agree; the second form is returned for downstream use.
pub fn ntd_of_laplacian(u: &SurfaceField) -> Result<SurfaceField> {
    let via_composition = ntd(&laplace_beltrami(u));
    let via_identity = ntilde(u).scale(-1.0);
    let diff = via_composition.sub(&via_identity).norm_l2();
    let scale = via_identity.norm_l2().max(1.0);
    if diff > 1e-10 * scale {
        return Err(CoreError::Domain {
            term: "ntd_of_laplacian".into(),
            detail: format!("route disagreement {diff:.3e} (scale {scale:.3e})"),
        });
    }
    Ok(via_identity)
}

/// Evaluate a pointwise nonlinearity of several fields on the dealiasing grid
/// and re-project onto degree <= L. The closure receives one value per input
/// field at a node; `term` names the nonlinearity for diagnostics.
pub fn pointwise_nonlinear(
    fields: &[&SurfaceField],
    term: &str,
    f: impl Fn(&[f64]) -> f64,
) -> Result<SurfaceField> {
    assert!(!fields.is_empty());
    let grid = fields[0].grid().clone();
    for other in &fields[1..] {
        if !same_grid(&grid, other.grid()) {
            return Err(CoreError::GridMismatch {
                left: format!("{:?}", grid),
                right: format!("{:?}", other.grid()),
            });
        }
    }
    let fine = grid.dealias_grid();
    let fine_vals: Vec<Vec<f64>> = fields.iter().map(|ff| fine.synthesize(ff.coeffs())).collect();
    let n = fine.nnodes();
    let mut out = vec![0.0; n];
    let mut args = vec![0.0; fields.len()];
    for node in 0..n {
        for (k, fv) in fine_vals.iter().enumerate() {
            args[k] = fv[node];
        }
        let v = f(&args);
        if !v.is_finite() {
            return Err(CoreError::Domain {
                term: term.into(),
                detail: format!(
                    "non-finite result at node {node} (inputs {:?})",
                    &args
                ),
            });
        }
        out[node] = v;
    }
    let coeffs = fine.analyze_deg(grid.lmax(), &out);
    Ok(SurfaceField::from_coeffs(grid, coeffs))
}

/// Pointwise product of two fields, dealiased.
pub fn product(a: &SurfaceField, b: &SurfaceField) -> Result<SurfaceField> {
    pointwise_nonlinear(&[a, b], "product", |v| v[0] * v[1])
}

/// Random band-limited field with per-degree decay (1 + l)^(-decay), for
/// conformance checks. Deterministic in the seed.
pub fn random_field(grid: &Arc<SphereGrid>, seed: u64, decay: f64) -> SurfaceField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0.0; grid.ncoef()];
    for (idx, v) in c.iter_mut().enumerate() {
        let (l, _) = SphereGrid::coef_lm(idx);
        *v = rng.gen_range(-1.0..1.0) / (1.0 + l as f64).powf(decay);
    }
    SurfaceField::from_coeffs(grid.clone(), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::field::SQRT_4PI;

    fn grid16() -> Arc<SphereGrid> {
        SphereGrid::new(16)
    }

    fn unit_coeff(grid: &Arc<SphereGrid>, l: usize, m: isize) -> SurfaceField {
        let mut c = vec![0.0; grid.ncoef()];
        c[SphereGrid::coef_index(l, m)] = 1.0;
        SurfaceField::from_coeffs(grid.clone(), c)
    }

    #[test]
    fn quadrature_weights_sum_to_4pi() {
        let g = grid16();
        assert!((g.total_weight() - 4.0 * std::f64::consts::PI).abs() < 1e-12 * 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn constant_projects_to_l0() {
        let g = grid16();
        let one = SurfaceField::from_fn(&g, |_| 1.0).unwrap();
        let c = one.coeffs();
        assert!((c[0] - SQRT_4PI).abs() < 1e-12);
        for v in &c[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn y20_sample_analyzes_to_unit_coefficient() {
        let g = grid16();
        // Y_2^0 = sqrt(5/(4pi)) (3 z^2 - 1)/2
        let y20 = SurfaceField::from_fn(&g, |p| {
            (5.0 / (4.0 * std::f64::consts::PI)).sqrt() * (3.0 * p[2] * p[2] - 1.0) / 2.0
        })
        .unwrap();
        let c = y20.coeffs();
        for (idx, v) in c.iter().enumerate() {
            let want = if idx == SphereGrid::coef_index(2, 0) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "idx {idx}: {v}");
        }
    }

    #[test]
    fn analyze_synthesize_roundtrip() {
        let g = grid16();
        let f = random_field(&g, 7, 1.0);
        let back = g.analyze_deg(g.lmax(), &g.synthesize(f.coeffs()));
        for (a, b) in f.coeffs().iter().zip(&back) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn laplacian_eigenvalues() {
        let g = grid16();
        let y10 = unit_coeff(&g, 1, 0);
        let lap = laplace_beltrami(&y10);
        assert!((lap.coeff(1, 0) + 2.0).abs() < 1e-14);
        let y21 = unit_coeff(&g, 2, 1);
        let lap = laplace_beltrami(&y21);
        assert!((lap.coeff(2, 1) + 6.0).abs() < 1e-14);
        let constant = SurfaceField::constant(g, 3.0);
        assert!(laplace_beltrami(&constant).norm_l2() < 1e-14);
    }

    #[test]
    fn dtn_and_ntd_eigenvalues() {
        let g = grid16();
        let y30 = unit_coeff(&g, 3, 0);
        assert!((dtn(&y30).coeff(3, 0) - 3.0).abs() < 1e-14);
        let constant = SurfaceField::constant(g.clone(), 2.0);
        assert!(dtn(&constant).norm_l2() < 1e-14);
        assert!(ntd(&constant).norm_l2() < 1e-14);
        let y20 = unit_coeff(&g, 2, 0);
        assert!((ntd(&y20).coeff(2, 0) - 0.5).abs() < 1e-14);
        // T(N f) = f - mean f
        let f = random_field(&g, 3, 1.5);
        let tnf = ntd(&dtn(&f));
        let centered = f.add_constant(-f.mean());
        assert!(tnf.sub(&centered).norm_l2() < 1e-10);
        // int N f = 0
        assert!(dtn(&f).integral().abs() < 1e-12);
    }

    #[test]
    fn tdelta_identity_routes_agree() {
        let g = grid16();
        let u = unit_coeff(&g, 1, 0);
        let t = ntd_of_laplacian(&u).unwrap();
        assert!((t.coeff(1, 0) + 2.0).abs() < 1e-12);
        let c = SurfaceField::constant(g.clone(), 1.0);
        assert!(ntd_of_laplacian(&c).unwrap().norm_l2() < 1e-13);
        let y52 = unit_coeff(&g, 5, 2);
        let t = ntd_of_laplacian(&y52).unwrap();
        assert!((t.coeff(5, 2) + 6.0).abs() < 1e-12);
        let r = random_field(&g, 11, 1.0);
        ntd_of_laplacian(&r).unwrap();
    }

    #[test]
    fn dtn_self_adjoint_and_positive() {
        let g = grid16();
        for seed in 0..20u64 {
            let f = random_field(&g, 100 + seed, 1.0);
            let h = random_field(&g, 200 + seed, 1.0);
            let lhs = dtn(&f).dot(&h);
            let rhs = f.dot(&dtn(&h));
            assert!((lhs - rhs).abs() < 1e-10, "seed {seed}: {lhs} vs {rhs}");
            assert!(dtn(&f).dot(&f) >= -1e-12);
        }
        let c = SurfaceField::constant(g, 1.3);
        assert!(dtn(&c).dot(&c).abs() < 1e-12);
    }

    #[test]
    fn pointwise_saturation_examples() {
        let g = grid16();
        let one = SurfaceField::constant(g.clone(), 1.0);
        let half = pointwise_nonlinear(&[&one], "u/(1+u)", |v| v[0] / (1.0 + v[0])).unwrap();
        assert!((half.mean() - 0.5).abs() < 1e-12);
        assert!(half.sub(&SurfaceField::constant(g.clone(), 0.5)).norm_l2() < 1e-12);
        let zero = SurfaceField::zeros(g.clone());
        let eps = 0.1;
        let r = pointwise_nonlinear(&[&zero], "u/(eps+u)", |v| v[0] / (eps + v[0])).unwrap();
        assert!(r.norm_l2() < 1e-14);
    }

    #[test]
    fn pointwise_product_matches_refined_quadrature_oracle() {
        let g = grid16();
        let a = random_field(&g, 21, 1.0);
        let b = random_field(&g, 22, 1.0);
        let p = product(&a, &b).unwrap();
        // Oracle: evaluate the product at 2x resolution and project by
        // brute-force quadrature there.
        let fine = SphereGrid::new(2 * g.lmax());
        let av = fine.synthesize(a.coeffs());
        let bv = fine.synthesize(b.coeffs());
        let prod: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
        let oracle = fine.analyze_deg(g.lmax(), &prod);
        for (x, y) in p.coeffs().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn pointwise_division_by_zero_rejected() {
        let g = grid16();
        let zero = SurfaceField::zeros(g);
        let err = pointwise_nonlinear(&[&zero], "1/(1-g)", |v| 1.0 / v[0]).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("1/(1-g)"), "{msg}");
    }

    #[test]
    fn spectral_identities_all_lm() {
        let g = SphereGrid::new(8);
        for l in 0..=8usize {
            for m in -(l as isize)..=(l as isize) {
                let y = unit_coeff(&g, l, m);
                let lam = -((l * (l + 1)) as f64);
                assert!((laplace_beltrami(&y).coeff(l, m) - lam).abs() < 1e-13);
                assert!((dtn(&y).coeff(l, m) - l as f64).abs() < 1e-13);
                if l >= 1 {
                    assert!((ntd(&y).coeff(l, m) - 1.0 / l as f64).abs() < 1e-13);
                    assert!((ntilde(&y).coeff(l, m) - (l + 1) as f64).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn field_integral_equals_sqrt4pi_c00() {
        let g = grid16();
        let f = random_field(&g, 5, 1.0);
        let by_quadrature = {
            let v = SurfaceField::from_values(g.clone(), f.values().to_vec()).unwrap();
            v.integral()
        };
        assert!((by_quadrature - SQRT_4PI * f.coeff(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn min_refined_beats_grid_min_for_offgrid_extremum() {
        let g = grid16();
        // f = (1 + z)^2 / 20: true min 0 at the south pole (not a grid node)
        let f = SurfaceField::from_fn(&g, |p| (1.0 + p[2]).powi(2) / 20.0).unwrap();
        let grid_min = f.min_on_grid();
        let refined = f.min_refined();
        assert!(refined <= grid_min);
        assert!(refined.abs() < 1e-9, "refined min {refined}");
    }
}
