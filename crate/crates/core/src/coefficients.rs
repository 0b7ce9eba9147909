//! Coefficient tensors `a^{ij}_{αβ}`, their ellipticity, and mean oscillation.
//!
//! Per cell the tensor is stored as an `n² × n²` matrix `M` with
//! `M[(i,α), (j,β)] = a^{ij}_{αβ}`, where the gradient entry `(j,β)` is the
//! derivative along `β` of velocity component `j` and flattens to `j·n + β`.
//! The bilinear form is `Σ M[(i,α),(j,β)] D_β u^j D_α φ^i`, so the adjoint
//! arrangement `A*_{αβ} = A_{βα}^tr` is simply `Mᵀ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainMask;
use crate::error::{Error, Result};
use crate::grid::StaggeredGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    /// Laplace: `a^{ij}_{αβ} = δ_{αβ} δ_{ij}`.
    Identity,
    /// `I + amplitude · φ(x) · P` with a fixed non-symmetric `P` of unit
    /// spectral norm and a smooth `|φ| <= 1`.
    Smooth { amplitude: f64 },
    /// Blocks of `scale` cells alternate between `I` and `contrast · I + skew · K`,
    /// with `K` skew-symmetric.
    Checkerboard {
        scale: usize,
        contrast: f64,
        #[serde(default = "default_skew")]
        skew: f64,
    },
    /// `I + oscillation · R_c` with `R_c` cellwise uniform in `[-1,1]/n²`.
    Random { oscillation: f64, seed: u64 },
}

fn default_skew() -> f64 {
    0.5
}

impl CoefficientSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            CoefficientSpec::Random { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: StaggeredGrid,
    /// `n⁴` entries per cell, cell-major, `M` row-major.
    tensor: Vec<f64>,
    lambda_nominal: f64,
    symmetric: bool,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub lambda_eff: f64,
    pub upper_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub rho_values: Vec<f64>,
    pub omega: Vec<f64>,
    /// (center cell, radius) achieving the sup for each ρ.
    pub sup_location: Vec<(usize, f64)>,
    pub note: String,
}

/// Skew-symmetric coupling between the gradient entries `(i,α)` and `(α,i)`.
fn skew_pattern(n: usize) -> DMatrix<f64> {
    let m = n * n;
    let mut k = DMatrix::zeros(m, m);
    for i in 0..n {
        for a in 0..n {
            if i < a {
                k[(i * n + a, a * n + i)] = 1.0;
                k[(a * n + i, i * n + a)] = -1.0;
            }
        }
    }
    k
}

fn smooth_profile(grid: &StaggeredGrid, cell: usize) -> f64 {
    let x = grid.cell_center(cell);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = 1.0;
    for a in 0..grid.dim() {
        let t = two_pi * (x[a] - grid.origin()[a]) / grid.length(a);
        v *= if a == 0 { t.sin() } else { t.cos() };
    }
    v
}

pub fn generate_coefficients(grid: &StaggeredGrid, spec: &CoefficientSpec) -> Result<CoefficientField> {
    let n = grid.dim();
    let m = n * n;
    let ncell = grid.num_cells();
    let ident = DMatrix::<f64>::identity(m, m);
    let skew = skew_pattern(n);
    let mut tensor = Vec::with_capacity(ncell * m * m);
    let push = |tensor: &mut Vec<f64>, mat: &DMatrix<f64>| {
        for r in 0..m {
            for c in 0..m {
                tensor.push(mat[(r, c)]);
            }
        }
    };
    let lambda_nominal = match spec {
        CoefficientSpec::Identity => {
            for _ in 0..ncell {
                push(&mut tensor, &ident);
            }
            1.0
        }
        CoefficientSpec::Smooth { amplitude } => {
            if !(0.0..0.5).contains(amplitude) {
                return Err(Error::Coefficients(format!(
                    "smooth amplitude must lie in [0, 0.5), got {amplitude}"
                )));
            }
            // P = (I + K)/√2 has unit spectral norm and symmetric part I/√2.
            let p = (&ident + &skew) / std::f64::consts::SQRT_2;
            for c in 0..ncell {
                let mat = &ident + &p * (amplitude * smooth_profile(grid, c));
                push(&mut tensor, &mat);
            }
            1.0 - amplitude
        }
        CoefficientSpec::Checkerboard { scale, contrast, skew: s } => {
            if *scale == 0 || !(*contrast > 0.0) || !s.is_finite() {
                return Err(Error::Coefficients("checkerboard needs scale >= 1 and contrast > 0".into()));
            }
            let odd = &ident * *contrast + &skew * *s;
            for c in 0..ncell {
                let idx = grid.cell_coords(c);
                let parity: usize = (0..n).map(|a| idx[a] / scale).sum::<usize>() % 2;
                push(&mut tensor, if parity == 1 { &odd } else { &ident });
            }
            let upper = (contrast * contrast + s * s).sqrt().max(1.0).max(*contrast);
            contrast.min(1.0).min(1.0 / upper)
        }
        CoefficientSpec::Random { oscillation, seed } => {
            if !(0.0..1.0).contains(oscillation) {
                return Err(Error::Coefficients(format!(
                    "random oscillation must lie in [0, 1), got {oscillation}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let scale = oscillation / m as f64;
            for _ in 0..ncell {
                let mut mat = ident.clone();
                for r in 0..m {
                    for c in 0..m {
                        mat[(r, c)] += scale * rng.gen_range(-1.0..=1.0);
                    }
                }
                push(&mut tensor, &mat);
            }
            // ‖R‖₂ <= ‖R‖_F <= oscillation
            (1.0 - oscillation).min(1.0 / (1.0 + oscillation))
        }
    };
    let field = CoefficientField::from_tensor(grid.clone(), tensor, lambda_nominal, spec.seed())?;
    let e = field.check_ellipticity()?;
    if e.lambda_eff < lambda_nominal * (1.0 - 1e-12) || e.upper_eff > (1.0 + 1e-12) / lambda_nominal {
        return Err(Error::Coefficients(format!(
            "generated field violates ellipticity: lambda_eff {} upper_eff {} nominal {}",
            e.lambda_eff, e.upper_eff, lambda_nominal
        )));
    }
    Ok(field)
}

impl CoefficientField {
    pub fn from_tensor(
        grid: StaggeredGrid,
        tensor: Vec<f64>,
        lambda_nominal: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n = grid.dim();
        let per = n * n * n * n;
        if tensor.len() != per * grid.num_cells() {
            return Err(Error::Coefficients(format!(
                "tensor length {} does not match {} cells x {per}",
                tensor.len(),
                grid.num_cells()
            )));
        }
        if !(lambda_nominal > 0.0 && lambda_nominal <= 1.0) {
            return Err(Error::Coefficients(format!(
                "lambda_nominal must lie in (0, 1], got {lambda_nominal}"
            )));
        }
        let m = n * n;
        let symmetric = tensor.chunks(per).all(|blk| {
            (0..m).all(|r| (0..r).all(|c| blk[r * m + c] == blk[c * m + r]))
        });
        Ok(Self {
            grid,
            tensor,
            lambda_nominal,
            symmetric,
            seed,
        })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn lambda_nominal(&self) -> f64 {
        self.lambda_nominal
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn raw(&self) -> &[f64] {
        &self.tensor
    }

    /// `n² × n²` block of one cell, row-major.
    #[inline]
    pub fn cell_matrix(&self, cell: usize) -> &[f64] {
        let m = self.grid.dim() * self.grid.dim();
        &self.tensor[cell * m * m..(cell + 1) * m * m]
    }

    /// `a^{ij}_{αβ}` at a cell.
    #[inline]
    pub fn entry(&self, cell: usize, alpha: usize, beta: usize, i: usize, j: usize) -> f64 {
        let n = self.grid.dim();
        self.cell_matrix(cell)[(i * n + alpha) * n * n + j * n + beta]
    }

    /// Coefficients of the adjoint operator, `A*_{αβ} = A_{βα}^tr`.
    pub fn adjoint(&self) -> Self {
        let m = self.grid.dim() * self.grid.dim();
        let mut t = self.tensor.clone();
        for blk in t.chunks_mut(m * m) {
            for r in 0..m {
                for c in 0..r {
                    blk.swap(r * m + c, c * m + r);
                }
            }
        }
        Self { tensor: t, ..self.clone() }
    }

    /// Field multiplied by `s`; `lambda_nominal` tracks the lower bound when `s <= 1`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            tensor: self.tensor.iter().map(|v| v * s).collect(),
            lambda_nominal: (self.lambda_nominal * s).min(1.0),
            ..self.clone()
        }
    }

    pub fn check_ellipticity(&self) -> Result<Ellipticity> {
        if let Some(pos) = self.tensor.iter().position(|v| !v.is_finite()) {
            return Err(Error::Coefficients(format!("non-finite coefficient at flat index {pos}")));
        }
        let m = self.grid.dim() * self.grid.dim();
        let (lo, hi) = self
            .tensor
            .par_chunks(m * m)
            .map(|blk| block_ellipticity(blk, m))
            .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
        Ok(Ellipticity {
            lambda_eff: lo,
            upper_eff: hi,
        })
    }

    /// Mean-oscillation modulus over balls centered at mask cells, restricted
    /// to the bounding box.
    pub fn bmo_modulus(&self, mask: &DomainMask, rho_list: &[f64]) -> Result<OscillationReport> {
        bmo_modulus(self, mask, rho_list)
    }
}

/// (smallest eigenvalue of the symmetric part, spectral norm) of one block.
pub fn block_ellipticity(blk: &[f64], m: usize) -> (f64, f64) {
    let mat = DMatrix::from_row_slice(m, m, blk);
    let sym = (&mat + mat.transpose()) * 0.5;
    let lo = SymmetricEigen::new(sym).eigenvalues.min();
    let gram = mat.transpose() * &mat;
    let hi = SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt();
    (lo, hi)
}

/// Radii probed inside the sup: multiples of h from 2h up to ρ, plus ρ itself.
fn probe_radii(h: f64, rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 2;
    while (k as f64) * h < rho * (1.0 - 1e-12) {
        out.push(k as f64 * h);
        k += 1;
    }
    out.push(rho);
    out
}

/// Max over entries of the ball-mean absolute deviation from the ball mean.
pub(crate) fn ball_oscillation(field: &CoefficientField, ball: &[usize]) -> f64 {
    let per = field.cell_matrix(0).len();
    let inv = 1.0 / ball.len() as f64;
    let mut worst: f64 = 0.0;
    for e in 0..per {
        // shifted by the first value so constant entries give exactly zero
        let base = field.cell_matrix(ball[0])[e];
        let mean: f64 = base + ball.iter().map(|&c| field.cell_matrix(c)[e] - base).sum::<f64>() * inv;
        let dev: f64 = ball.iter().map(|&c| (field.cell_matrix(c)[e] - mean).abs()).sum::<f64>() * inv;
        worst = worst.max(dev);
    }
    worst
}

pub fn bmo_modulus(field: &CoefficientField, mask: &DomainMask, rho_list: &[f64]) -> Result<OscillationReport> {
    let g = field.grid();
    if g != mask.grid() {
        return Err(Error::Coefficients("field and mask live on different grids".into()));
    }
    let h = g.h();
    let max_len = (0..g.dim()).map(|a| g.length(a)).fold(0.0, f64::max);
    for &rho in rho_list {
        if rho < 2.0 * h * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!("rho {rho} below grid resolution 2h = {}", 2.0 * h)));
        }
        if rho > 0.5 * max_len * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!("rho {rho} exceeds half the box extent")));
        }
    }
    let mut sorted: Vec<f64> = rho_list.to_vec();
    sorted.sort_by(f64::total_cmp);
    let all_radii: Vec<f64> = {
        let mut r: Vec<f64> = sorted.iter().flat_map(|&rho| probe_radii(h, rho)).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    };
    // per radius: the worst ball
    let per_radius: Vec<(f64, usize)> = all_radii
        .iter()
        .map(|&s| {
            mask.interior_cells()
                .par_iter()
                .map(|&c| {
                    let ball = g.cells_in_ball(&g.cell_center(c), s);
                    (ball_oscillation(field, &ball), c)
                })
                .reduce(|| (0.0, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        })
        .collect();
    let mut omega = Vec::with_capacity(rho_list.len());
    let mut sup_location = Vec::with_capacity(rho_list.len());
    for &rho in rho_list {
        let mut best = (0.0, (mask.interior_cells()[0], all_radii[0]));
        for (k, &s) in all_radii.iter().enumerate() {
            if s <= rho * (1.0 + 1e-12) && per_radius[k].0 > best.0 {
                best = (per_radius[k].0, (per_radius[k].1, s));
            }
        }
        omega.push(best.0);
        sup_location.push(best.1);
    }
    Ok(OscillationReport {
        rho_values: rho_list.to_vec(),
        omega,
        sup_location,
        note: "sup restricted to the bounding box".into(),
    })
}
