//! Two-dimensional runs through the whole pipeline.

use std::sync::Arc;

use greenlab::green::{symmetry_defect, GreenCache};
use greenlab::sampling::{random_rhs, smooth_divergence_data, RhsParts};
use greenlab::solver::{bogovskii_solve, estimate_infsup, identity_system, solve_dense_oracle, solve_stokes, SolveOptions};
use greenlab::{assemble_system, build_domain, build_grid, generate_coefficients, CoefficientSpec, MaskSpec};

fn setup(cells: usize, spec: CoefficientSpec, mask: MaskSpec) -> (Arc<greenlab::DomainMask>, Arc<greenlab::CoefficientField>) {
    let g = build_grid(2, cells, 1.0).unwrap();
    let m = Arc::new(build_domain(&g, &mask).unwrap());
    let f = Arc::new(generate_coefficients(&g, &spec).unwrap());
    (m, f)
}

#[test]
fn iterative_matches_dense_in_2d() {
    for spec in [
        CoefficientSpec::Identity,
        CoefficientSpec::Smooth { amplitude: 0.3 },
        CoefficientSpec::Checkerboard { scale: 2, contrast: 4.0, skew: 0.5 },
        CoefficientSpec::Random { oscillation: 0.4, seed: 3 },
    ] {
        let (m, f) = setup(12, spec.clone(), MaskSpec::Sinusoid { offset: 0.5, amplitude: 0.1, wavelength: 0.5 });
        let sys = assemble_system(&f, &m, false).unwrap();
        let rhs = random_rhs(&sys, 7, RhsParts::default(), 3);
        let (it, stats) = solve_stokes(&sys, &rhs, &SolveOptions::with_tol(1e-12)).unwrap();
        let dense = solve_dense_oracle(&sys, &rhs).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (x, y) in it.u.iter().chain(&it.p).zip(dense.u.iter().chain(&dense.p)) {
            num += (x - y) * (x - y);
            den += y * y;
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-8, "{spec:?}: {rel:e} after {} iterations", stats.iterations);
    }
}

#[test]
fn green_symmetry_in_2d() {
    let (m, f) = setup(16, CoefficientSpec::Random { oscillation: 0.5, seed: 1 }, MaskSpec::Box);
    let g = m.grid().clone();
    let primal = GreenCache::new(Arc::new(assemble_system(&f, &m, false).unwrap()), SolveOptions::with_tol(1e-12), 8);
    let adjoint = GreenCache::new(Arc::new(assemble_system(&f, &m, true).unwrap()), SolveOptions::with_tol(1e-12), 8);
    let x = g.locate(&[0.3, 0.4]);
    let y = g.locate(&[0.7, 0.6]);
    let d = symmetry_defect(&primal, &adjoint, x, y, 1.5 * g.h()).unwrap();
    assert!(d <= 1e-6, "{d:e}");
}

#[test]
fn bogovskii_and_infsup_in_2d() {
    let (m, _) = setup(16, CoefficientSpec::Identity, MaskSpec::Box);
    let sys = identity_system(&m).unwrap();
    let g = smooth_divergence_data(&sys, 4, 3);
    let b = bogovskii_solve(&m, &g, 1e-10).unwrap();
    assert!(b.divergence_residual <= 1e-8, "{}", b.divergence_residual);
    assert!(b.norm_ratio.is_finite() && b.norm_ratio > 0.0);
    let beta = estimate_infsup(&sys).unwrap();
    assert!(beta.beta > 0.1 && beta.beta < 1.0, "{beta:?}");
}
