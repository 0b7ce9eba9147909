//! Smoothed-aggregation algebraic multigrid for SPD matrices.
//!
//! Used as a fixed (linear, symmetric) preconditioner: one V-cycle with
//! symmetric Gauss-Seidel smoothing and a dense Cholesky coarse solve.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy)]
pub struct AmgOptions {
    pub strength_threshold: f64,
    pub max_coarse: usize,
    pub max_levels: usize,
    pub smoothing_sweeps: usize,
}

impl Default for AmgOptions {
    fn default() -> Self {
        Self {
            strength_threshold: 0.08,
            max_coarse: 400,
            max_levels: 12,
            smoothing_sweeps: 1,
        }
    }
}

struct Level {
    a: CsrMatrix,
    diag: Vec<f64>,
    /// Prolongation from the next coarser level.
    p: CsrMatrix,
    r: CsrMatrix,
}

pub struct Amg {
    levels: Vec<Level>,
    coarse_a: CsrMatrix,
    coarse: Option<Cholesky<f64, Dyn>>,
    sweeps: usize,
}

impl Amg {
    pub fn new(a: &CsrMatrix, opts: AmgOptions) -> Self {
        let mut levels = Vec::new();
        let mut current = a.clone();
        while current.nrows() > opts.max_coarse && levels.len() + 1 < opts.max_levels {
            // Galerkin operators spread their couplings; relax the threshold with depth
            let theta = opts.strength_threshold * 0.5f64.powi(levels.len() as i32);
            let agg = aggregate(&current, theta);
            let ncoarse = agg.iter().copied().max().map_or(0, |m| m + 1);
            if ncoarse == 0 || ncoarse as f64 > 0.9 * current.nrows() as f64 {
                break;
            }
            let p = smoothed_prolongator(&current, &agg, ncoarse);
            let r = p.transpose();
            let coarse = r.matmul(&current).matmul(&p);
            let diag = current.diagonal();
            levels.push(Level {
                a: current,
                diag,
                p,
                r,
            });
            current = coarse;
        }
        let dense = current.to_dense();
        let coarse = Cholesky::new(dense);
        Self {
            levels,
            coarse_a: current,
            coarse,
            sweeps: opts.smoothing_sweeps,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    /// Unknowns per level, finest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nrows()).chain(std::iter::once(self.coarse_a.nrows())).collect()
    }

    /// Approximates `A⁻¹ b`.
    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(0, b, x);
    }

    fn vcycle(&self, lvl: usize, b: &[f64], x: &mut [f64]) {
        if lvl == self.levels.len() {
            match &self.coarse {
                Some(ch) => {
                    let sol = ch.solve(&DVector::from_row_slice(b));
                    x.copy_from_slice(sol.as_slice());
                }
                None => {
                    // semidefinite coarse operator: a few Gauss-Seidel sweeps instead
                    let d = self.coarse_a.diagonal();
                    for _ in 0..20 {
                        gauss_seidel(&self.coarse_a, &d, b, x, true);
                        gauss_seidel(&self.coarse_a, &d, b, x, false);
                    }
                }
            }
            return;
        }
        let level = &self.levels[lvl];
        for _ in 0..self.sweeps {
            gauss_seidel(&level.a, &level.diag, b, x, true);
        }
        let ax = level.a.mul(x);
        let resid: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rc = level.r.mul(&resid);
        let mut xc = vec![0.0; rc.len()];
        self.vcycle(lvl + 1, &rc, &mut xc);
        let corr = level.p.mul(&xc);
        x.iter_mut().zip(&corr).for_each(|(xi, ci)| *xi += ci);
        for _ in 0..self.sweeps {
            gauss_seidel(&level.a, &level.diag, b, x, false);
        }
    }
}

fn gauss_seidel(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
    let n = a.nrows();
    let mut sweep = |r: usize| {
        let (idx, val) = a.row(r);
        let mut s = b[r];
        for (&c, &v) in idx.iter().zip(val) {
            if c as usize != r {
                s -= v * x[c as usize];
            }
        }
        if diag[r] != 0.0 {
            x[r] = s / diag[r];
        }
    };
    if forward {
        (0..n).for_each(&mut sweep);
    } else {
        (0..n).rev().for_each(&mut sweep);
    }
}

/// Standard three-pass greedy aggregation on the strength graph.
fn aggregate(a: &CsrMatrix, theta: f64) -> Vec<usize> {
    let n = a.nrows();
    let diag = a.diagonal();
    let strong: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let (idx, val) = a.row(i);
            idx.iter()
                .zip(val)
                .filter(|(&j, &v)| {
                    let j = j as usize;
                    j != i && v.abs() >= theta * (diag[i] * diag[j]).abs().sqrt()
                })
                .map(|(&j, _)| j as usize)
                .collect()
        })
        .collect();
    const NONE: usize = usize::MAX;
    let mut agg = vec![NONE; n];
    let mut count = 0;
    // pass 1: roots whose whole strong neighborhood is free
    for i in 0..n {
        if agg[i] != NONE || strong[i].is_empty() {
            continue;
        }
        if strong[i].iter().all(|&j| agg[j] == NONE) {
            agg[i] = count;
            for &j in &strong[i] {
                agg[j] = count;
            }
            count += 1;
        }
    }
    // pass 2: attach leftovers to a neighboring aggregate
    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        if let Some(&j) = strong[i].iter().find(|&&j| snapshot[j] != NONE) {
            agg[i] = snapshot[j];
        }
    }
    // pass 3: whatever remains becomes its own aggregate
    for i in 0..n {
        if agg[i] == NONE {
            agg[i] = count;
            for &j in &strong[i] {
                if agg[j] == NONE {
                    agg[j] = count;
                }
            }
            count += 1;
        }
    }
    agg
}

fn smoothed_prolongator(a: &CsrMatrix, agg: &[usize], ncoarse: usize) -> CsrMatrix {
    let n = a.nrows();
    let mut sizes = vec![0usize; ncoarse];
    for &g in agg {
        sizes[g] += 1;
    }
    let tentative = CsrMatrix::from_triplets(
        n,
        ncoarse,
        (0..n)
            .map(|i| (i as u32, agg[i] as u32, 1.0 / (sizes[agg[i]] as f64).sqrt()))
            .collect(),
    );
    let diag = a.diagonal();
    let rho = spectral_radius_dinv_a(a, &diag);
    let omega = 4.0 / (3.0 * rho);
    // P = (I - ω D⁻¹ A) P₀
    let mut trip = Vec::with_capacity(a.nnz());
    for r in 0..n {
        let (idx, val) = a.row(r);
        for (&c, &v) in idx.iter().zip(val) {
            let mut s = -omega * v / diag[r];
            if c as usize == r {
                s += 1.0;
            }
            trip.push((r as u32, c, s));
        }
    }
    let smoother = CsrMatrix::from_triplets(n, n, trip);
    smoother.matmul(&tentative)
}

fn spectral_radius_dinv_a(a: &CsrMatrix, diag: &[f64]) -> f64 {
    let n = a.nrows();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut rho = 1.0;
    for _ in 0..15 {
        let w = a.mul(&v);
        let w: Vec<f64> = w.iter().zip(diag).map(|(x, d)| x / d).collect();
        let nw = crate::sparse::norm2(&w);
        rho = nw / crate::sparse::norm2(&v);
        v = w.iter().map(|x| x / nw).collect();
    }
    // power iteration underestimates; pad a little
    1.1 * rho
}
