//! Saddle-point solves, the dense verification oracle, the Bogovskii right
//! inverse of the divergence and the discrete inf-sup constant.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, RhsData, SaddleSystem};
use crate::coefficients::{generate_coefficients, CoefficientSpec};
use crate::domain::DomainMask;
use crate::error::{Error, Result};
use crate::krylov::{gmres, KrylovOptions};
use crate::sparse::{dot, norm2};

/// Largest saddle system the dense oracle will factor.
pub const DENSE_DOF_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Restarted GMRES with a block-triangular AMG preconditioner.
    #[default]
    Gmres,
    /// Dense LU of the bordered system (small problems only).
    Dense,
}

impl SolveMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SolveMethod::Gmres => "gmres-blocktri-amg",
            SolveMethod::Dense => "dense-lu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 3000,
            restart: 40,
            method: SolveMethod::Gmres,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Velocity on dof faces and mean-zero pressure on interior cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesField {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl StokesField {
    pub fn zeros(sys: &SaddleSystem) -> Self {
        Self {
            u: vec![0.0; sys.velocity_dofs()],
            p: vec![0.0; sys.pressure_dofs()],
        }
    }

    pub fn pressure_mean(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub wall_time: f64,
    pub method: String,
    /// `(‖p‖ + ‖Du‖) / (‖f‖ + ‖f_α‖ + ‖g‖)`; tracked, never asserted.
    pub energy_ratio: Option<f64>,
}

fn project_mean_zero(p: &mut [f64]) {
    if p.is_empty() {
        return;
    }
    let m = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= m);
}

/// Relative residual of `[u; p]` against the assembled right-hand side.
pub fn relative_residual(sys: &SaddleSystem, field: &StokesField, b: &[f64]) -> f64 {
    let mut x = field.u.clone();
    x.extend_from_slice(&field.p);
    let mut y = vec![0.0; x.len()];
    sys.apply(&x, &mut y);
    let r: Vec<f64> = y.iter().zip(b).map(|(a, c)| a - c).collect();
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

fn energy_ratio(sys: &SaddleSystem, rhs: &RhsData, field: &StokesField) -> Option<f64> {
    let vol = sys.grid().cell_volume();
    let l2 = |v: &[f64]| (vol * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let data = l2(&rhs.f) + l2(&rhs.f_alpha) + l2(&rhs.g);
    if data == 0.0 {
        return None;
    }
    Some((l2(&field.p) + sys.gradient_norm_sq(&field.u).sqrt()) / data)
}

/// Solves `[L Bᵀ; B 0][u; p] = [F; −|cell| g]` with mean-zero pressure.
pub fn solve_stokes(sys: &SaddleSystem, rhs: &RhsData, opts: &SolveOptions) -> Result<(StokesField, SolveStats)> {
    if !(1e-14..=1e-4).contains(&opts.tol) {
        return Err(Error::Precondition(format!("tolerance {} outside [1e-14, 1e-4]", opts.tol)));
    }
    let start = Instant::now();
    let b = sys.rhs_vector(rhs)?;
    if b.iter().all(|&v| v == 0.0) {
        return Ok((
            StokesField::zeros(sys),
            SolveStats {
                iterations: 0,
                final_relative_residual: 0.0,
                wall_time: start.elapsed().as_secs_f64(),
                method: opts.method.tag().into(),
                energy_ratio: None,
            },
        ));
    }
    let (field, iterations) = match opts.method {
        SolveMethod::Dense => (dense_solve(sys, &b)?, 1),
        SolveMethod::Gmres => gmres_solve(sys, &b, opts)?,
    };
    let rel = relative_residual(sys, &field, &b);
    if opts.method == SolveMethod::Gmres && rel > opts.tol {
        return Err(Error::solver("true residual above tolerance after projection", iterations, rel));
    }
    let stats = SolveStats {
        iterations,
        final_relative_residual: rel,
        wall_time: start.elapsed().as_secs_f64(),
        method: opts.method.tag().into(),
        energy_ratio: energy_ratio(sys, rhs, &field),
    };
    Ok((field, stats))
}

fn gmres_solve(sys: &SaddleSystem, b: &[f64], opts: &SolveOptions) -> Result<(StokesField, usize)> {
    let nv = sys.velocity_dofs();
    let amg = sys.velocity_preconditioner();
    let schur_scale = sys.viscosity_scale() / sys.grid().cell_volume();
    let bt = sys.bt_block();
    let prec = |r: &[f64], z: &mut [f64]| {
        let (ru, rp) = r.split_at(nv);
        let (zu, zp) = z.split_at_mut(nv);
        for (zi, ri) in zp.iter_mut().zip(rp) {
            *zi = -schur_scale * ri;
        }
        project_mean_zero(zp);
        let btp = bt.mul(zp);
        let shifted: Vec<f64> = ru.iter().zip(&btp).map(|(a, c)| a - c).collect();
        amg.apply(&shifted, zu);
    };
    let op = |x: &[f64], y: &mut [f64]| sys.apply(x, y);
    let mut x = vec![0.0; b.len()];
    let kopts = KrylovOptions {
        // leave headroom for the pressure projection
        tol: opts.tol * 0.5,
        max_iter: opts.max_iter,
    };
    let out = gmres(op, prec, b, &mut x, opts.restart, &kopts)?;
    let p = x.split_off(nv);
    let mut field = StokesField { u: x, p };
    project_mean_zero(&mut field.p);
    Ok((field, out.iterations))
}

fn dense_solve(sys: &SaddleSystem, b: &[f64]) -> Result<StokesField> {
    let nv = sys.velocity_dofs();
    let np = sys.pressure_dofs();
    let total = nv + np;
    if total > DENSE_DOF_CAP {
        return Err(Error::Precondition(format!(
            "dense oracle limited to {DENSE_DOF_CAP} unknowns, system has {total}"
        )));
    }
    let vol = sys.grid().cell_volume();
    let dim = total + 1;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    for (r, c, v) in sys.l_block().triplets() {
        k[(r as usize, c as usize)] += v;
    }
    for (r, c, v) in sys.b_block().triplets() {
        k[(nv + r as usize, c as usize)] += v;
        k[(c as usize, nv + r as usize)] += v;
    }
    for i in 0..np {
        k[(total, nv + i)] = vol;
        k[(nv + i, total)] = vol;
    }
    let mut rhs = DVector::<f64>::zeros(dim);
    rhs.as_mut_slice()[..total].copy_from_slice(b);
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Invariant("dense saddle matrix is singular".into()))?;
    let s = sol.as_slice();
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::Invariant("dense saddle matrix is singular".into()));
    }
    let mut field = StokesField {
        u: s[..nv].to_vec(),
        p: s[nv..total].to_vec(),
    };
    project_mean_zero(&mut field.p);
    Ok(field)
}

/// Direct factorization of the bordered saddle matrix.
pub fn solve_dense_oracle(sys: &SaddleSystem, rhs: &RhsData) -> Result<StokesField> {
    let b = sys.rhs_vector(rhs)?;
    if b.iter().all(|&v| v == 0.0) {
        return Ok(StokesField::zeros(sys));
    }
    dense_solve(sys, &b)
}

/// Identity-coefficient system on a mask.
pub fn identity_system(mask: &Arc<DomainMask>) -> Result<SaddleSystem> {
    let field = Arc::new(generate_coefficients(mask.grid(), &CoefficientSpec::Identity)?);
    assemble_system(&field, mask, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BogovskiiResult {
    pub u: Vec<f64>,
    /// `‖D_h u‖₂ / ‖g‖₂`
    pub norm_ratio: f64,
    /// `‖div_h u − g‖₂ / ‖g‖₂`
    pub divergence_residual: f64,
    pub stats: SolveStats,
}

/// Minimum-energy right inverse of the divergence.
pub fn bogovskii_solve(mask: &Arc<DomainMask>, g: &[f64], tol: f64) -> Result<BogovskiiResult> {
    let sys = identity_system(mask)?;
    bogovskii_with(&sys, g, tol)
}

/// As [`bogovskii_solve`] with a prebuilt identity-coefficient system.
pub fn bogovskii_with(sys: &SaddleSystem, g: &[f64], tol: f64) -> Result<BogovskiiResult> {
    let n = sys.dim();
    let np = sys.pressure_dofs();
    let rhs = RhsData {
        f: vec![0.0; n * np],
        f_alpha: vec![0.0; n * n * np],
        g: g.to_vec(),
    };
    let (field, stats) = solve_stokes(sys, &rhs, &SolveOptions::with_tol(tol))?;
    let vol = sys.grid().cell_volume();
    let gnorm = (vol * dot(g, g)).sqrt();
    let div = sys.apply_divergence(&field.u);
    let dres = (vol * div.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt();
    let (norm_ratio, divergence_residual) = if gnorm == 0.0 {
        (0.0, dres)
    } else {
        (sys.gradient_norm_sq(&field.u).sqrt() / gnorm, dres / gnorm)
    };
    Ok(BogovskiiResult {
        u: field.u,
        norm_ratio,
        divergence_residual,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfSupEstimate {
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Discrete inf-sup constant
/// `β = inf_p sup_u ⟨div u, p⟩ / (‖D u‖ ‖p‖)` over mean-zero pressures,
/// with the velocity measured by the identity-coefficient energy.
///
/// Block inverse iteration on the pressure Schur complement: each step is one
/// identity-coefficient Stokes solve per block vector, followed by a
/// Rayleigh–Ritz projection.
pub fn estimate_infsup(sys: &SaddleSystem) -> Result<InfSupEstimate> {
    let id = identity_system(sys.mask())?;
    infsup_inverse_iteration(&id, 1e-10, 200)
}

pub fn infsup_inverse_iteration(id: &SaddleSystem, rel_tol: f64, max_iter: usize) -> Result<InfSupEstimate> {
    let np = id.pressure_dofs();
    let n = id.dim();
    if np < 2 {
        return Err(Error::Precondition("inf-sup needs at least two pressure cells".into()));
    }
    let block = 4.min(np - 1);
    // deterministic smooth-ish start vectors
    let cells = id.layout().pressure_cells();
    let grid = id.grid();
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|b| {
            let mut v: Vec<f64> = cells
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let xc = grid.cell_center(c);
                    let phase = (b + 1) as f64;
                    (phase * xc[0] * 3.1 + xc[1] * 1.7 + xc[2] * 0.9).sin() + 0.01 * ((k * 7919 + b * 104729) % 1009) as f64 / 1009.0
                })
                .collect();
            project_mean_zero(&mut v);
            v
        })
        .collect();
    let opts = SolveOptions::with_tol(1e-12);
    let mut prev = f64::INFINITY;
    for it in 1..=max_iter {
        orthonormalize(&mut x);
        let mut y = Vec::with_capacity(block);
        for xi in &x {
            let rhs = RhsData {
                f: vec![0.0; n * np],
                f_alpha: vec![0.0; n * n * np],
                g: xi.clone(),
            };
            let (field, _) = solve_stokes(id, &rhs, &opts)?;
            y.push(field.p);
        }
        // Ritz pair on span(Y): YᵀSY = Yᵀ X·vol, YᵀM Y = vol YᵀY
        let mut a = DMatrix::<f64>::zeros(block, block);
        let mut m = DMatrix::<f64>::zeros(block, block);
        for i in 0..block {
            for j in 0..block {
                a[(i, j)] = 0.5 * (dot(&y[i], &x[j]) + dot(&y[j], &x[i]));
                m[(i, j)] = dot(&y[i], &y[j]);
            }
        }
        let chol = nalgebra::Cholesky::new(m.clone())
            .ok_or_else(|| Error::solver("inf-sup Ritz basis collapsed", it, f64::NAN))?;
        let linv = chol.l().try_inverse().ok_or_else(|| Error::solver("inf-sup Ritz basis collapsed", it, f64::NAN))?;
        let reduced = &linv * &a * linv.transpose();
        let eig = SymmetricEigen::new(0.5 * (&reduced + reduced.transpose()));
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let coeffs = linv.transpose() * &eig.eigenvectors;
        let mut next = Vec::with_capacity(block);
        for &col in &order {
            let mut v = vec![0.0; np];
            for (r, yr) in y.iter().enumerate() {
                let c = coeffs[(r, col)];
                v.iter_mut().zip(yr).for_each(|(a, b)| *a += c * b);
            }
            project_mean_zero(&mut v);
            next.push(v);
        }
        x = next;
        let mu = eig.eigenvalues[order[0]];
        if !(mu > 0.0) {
            return Ok(InfSupEstimate { beta: 0.0, iterations: it, converged: true });
        }
        if ((mu - prev) / mu).abs() < rel_tol {
            return Ok(InfSupEstimate { beta: mu.sqrt(), iterations: it, converged: true });
        }
        prev = mu;
    }
    Err(Error::solver("inf-sup inverse iteration did not converge", max_iter, f64::NAN))
}

fn orthonormalize(x: &mut [Vec<f64>]) {
    for i in 0..x.len() {
        for j in 0..i {
            let (head, tail) = x.split_at_mut(i);
            let c = dot(&tail[0], &head[j]);
            tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= c * b);
        }
        let nrm = norm2(&x[i]);
        if nrm > 0.0 {
            x[i].iter_mut().for_each(|v| *v /= nrm);
        }
    }
}
