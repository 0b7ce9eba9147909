//! Identity-coefficient Green matrix against the free-space Stokeslet
//! `S_ij(x) = (δ_ij / r + x_i x_j / r³) / 8π`.
//!
//! On a bounded box `G = S + H` with a smooth regular part `H`; near the
//! pole `H` is close to a constant matrix, so we remove its shell mean and
//! compare what is left.

use std::sync::Arc;

use greenlab::assembly::assemble_system;
use greenlab::green::{averaged_green_column, GreenColumn};
use greenlab::solver::SolveOptions;
use greenlab::{build_domain, build_grid, generate_coefficients, CoefficientSpec, MaskSpec};

fn stokeslet(d: [f64; 3]) -> [[f64; 3]; 3] {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            s[i][j] = (delta / r + d[i] * d[j] / (r * r * r)) / (8.0 * std::f64::consts::PI);
        }
    }
    s
}

#[test]
fn green_matrix_is_stokeslet_plus_smooth_part() {
    let g = build_grid(3, 48, 1.0).unwrap();
    let mask = Arc::new(build_domain(&g, &MaskSpec::Box).unwrap());
    let field = Arc::new(generate_coefficients(&g, &CoefficientSpec::Identity).unwrap());
    let sys = assemble_system(&field, &mask, false).unwrap();
    let h = g.h();
    let y = g.locate(&[0.5, 0.5, 0.5]);
    let yc = g.cell_center(y);
    let d_y = mask.distance_to_boundary(y).unwrap();
    let opts = SolveOptions::with_tol(1e-10);
    let cols: Vec<GreenColumn> = (0..3).map(|k| averaged_green_column(&sys, y, k, 2.0 * h, &opts).unwrap()).collect();
    let cell_vel: Vec<Vec<f64>> = cols.iter().map(|c| sys.cell_velocity(&c.velocity)).collect();

    let mut samples = Vec::new();
    for (slot, &c) in sys.layout().pressure_cells().iter().enumerate() {
        let x = g.cell_center(c);
        let d = [x[0] - yc[0], x[1] - yc[1], x[2] - yc[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r < 4.0 * h || r > 0.5 * d_y {
            continue;
        }
        let mut gm = [[0.0; 3]; 3];
        for (k, cv) in cell_vel.iter().enumerate() {
            for i in 0..3 {
                gm[i][k] = cv[slot * 3 + i];
            }
        }
        samples.push((gm, stokeslet(d)));
    }
    assert!(samples.len() > 1000, "{}", samples.len());

    let mut hmean = [[0.0; 3]; 3];
    for (gm, s) in &samples {
        for i in 0..3 {
            for j in 0..3 {
                hmean[i][j] += (gm[i][j] - s[i][j]) / samples.len() as f64;
            }
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (gm, s) in &samples {
        for i in 0..3 {
            for j in 0..3 {
                num += (gm[i][j] - s[i][j] - hmean[i][j]).powi(2);
                den += s[i][j].powi(2);
            }
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 0.15, "relative deviation from Stokeslet + constant: {rel:.4}");
    // the regular part of the cube is nearly isotropic and negative
    let trace = hmean[0][0] + hmean[1][1] + hmean[2][2];
    assert!(trace < 0.0, "{hmean:?}");
    for i in 0..3 {
        assert!((hmean[i][i] - trace / 3.0).abs() <= 0.1 * trace.abs(), "{hmean:?}");
    }
    eprintln!("Stokeslet deviation {rel:.4}, regular part diag {:.4} {:.4} {:.4}", hmean[0][0], hmean[1][1], hmean[2][2]);
}
