//! Averaged Green functions: Stokes solves with a unit force spread over a
//! discrete ball around the pole.
//!
//! Ball averages of velocities use the same face-to-cell averaging and the
//! same cell sets as the sources, so the mollified symmetry and
//! representation identities are exact discrete dualities.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::assembly::{RhsData, SaddleSystem};
use crate::error::{Error, Result};
use crate::grid::MAX_DIM;
use crate::solver::{solve_stokes, SolveOptions, SolveStats};

#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub pole_cell: usize,
    pub component: usize,
    pub epsilon: f64,
    pub adjoint: bool,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Pressure-ordered interior cells of the mollifier ball.
    pub ball: Vec<usize>,
    /// `‖Π_ε‖₂ + ‖D G_ε‖₂`
    pub energy: f64,
    /// `energy · ε^{(n−2)/2}`, bounded uniformly in ε.
    pub energy_scaled: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenMatrixSample {
    pub x_cell: usize,
    pub y_cell: usize,
    pub epsilon: f64,
    /// Row-major `n × n`: slot `(i, k)` is component `i` of column `k` at x.
    pub g: Vec<f64>,
}

impl GreenMatrixSample {
    pub fn frobenius(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Pressure indices of interior cells whose centers lie within `eps` of the
/// center of `cell`.
pub fn mollifier_ball(sys: &SaddleSystem, cell: usize, eps: f64) -> Vec<usize> {
    let g = sys.grid();
    g.cells_in_ball(&g.cell_center(cell), eps)
        .into_iter()
        .filter_map(|c| sys.layout().cell_dof(c))
        .collect()
}

/// Ball mean of the cell-averaged velocity over pressure-ordered cells.
pub fn ball_mean(sys: &SaddleSystem, velocity: &[f64], ball: &[usize]) -> [f64; MAX_DIM] {
    let g = sys.grid();
    let n = g.dim();
    let lay = sys.layout();
    let cells = lay.pressure_cells();
    let mut acc = [0.0; MAX_DIM];
    for &k in ball {
        let c = cells[k];
        for (j, a) in acc.iter_mut().enumerate().take(n) {
            for high in [false, true] {
                if let Some(d) = lay.face_dof(j, g.cell_face(c, j, high)) {
                    *a += 0.5 * velocity[d];
                }
            }
        }
    }
    let inv = 1.0 / ball.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Right-hand side `|Ω_ε(y)|⁻¹ 1_{Ω_ε(y)} e_k`.
pub fn mollified_source(sys: &SaddleSystem, ball: &[usize], k: usize) -> RhsData {
    let n = sys.dim();
    let mut rhs = RhsData::zeros(n, sys.pressure_dofs());
    let density = 1.0 / (ball.len() as f64 * sys.grid().cell_volume());
    for &c in ball {
        rhs.f[c * n + k] = density;
    }
    rhs
}

fn check_pole(sys: &SaddleSystem, y: usize, eps: f64) -> Result<f64> {
    let h = sys.grid().h();
    if y >= sys.grid().num_cells() || !sys.mask().is_interior(y) {
        return Err(Error::Precondition(format!("pole cell {y} is not interior")));
    }
    if eps < h * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("epsilon {eps} below grid spacing {h}")));
    }
    let dy = sys.mask().distance_to_boundary(y)?;
    if eps >= dy {
        return Err(Error::Precondition(format!(
            "pole {y} too close to the boundary for epsilon {eps} (d_y = {dy})"
        )));
    }
    Ok(dy)
}

/// Solves for `(G_ε^{·k}(·,y), Π_ε^k(·,y))`.
pub fn averaged_green_column(sys: &SaddleSystem, y: usize, k: usize, eps: f64, opts: &SolveOptions) -> Result<GreenColumn> {
    let n = sys.dim();
    if k >= n {
        return Err(Error::Precondition(format!("component {k} out of range for n = {n}")));
    }
    check_pole(sys, y, eps)?;
    let ball = mollifier_ball(sys, y, eps);
    if ball.is_empty() {
        return Err(Error::Precondition("mollifier ball misses the domain".into()));
    }
    let rhs = mollified_source(sys, &ball, k);
    let (field, stats) = solve_stokes(sys, &rhs, opts)?;
    let vol = sys.grid().cell_volume();
    let pnorm = (vol * field.p.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let energy = pnorm + sys.gradient_norm_sq(&field.u).sqrt();
    Ok(GreenColumn {
        pole_cell: y,
        component: k,
        epsilon: eps,
        adjoint: sys.is_adjoint(),
        velocity: field.u,
        pressure: field.p,
        ball,
        energy,
        energy_scaled: energy * eps.powf((n as f64 - 2.0) / 2.0),
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    y: usize,
    k: usize,
    eps: u64,
    adjoint: bool,
}

/// LRU cache of Green columns for one system.
pub struct GreenCache {
    system: Arc<SaddleSystem>,
    opts: SolveOptions,
    capacity: usize,
    inner: Mutex<CacheState>,
}

#[derive(Default)]
struct CacheState {
    tick: u64,
    map: HashMap<Key, (Arc<GreenColumn>, u64)>,
    hits: u64,
    misses: u64,
}

impl GreenCache {
    pub fn new(system: Arc<SaddleSystem>, opts: SolveOptions, capacity: usize) -> Self {
        Self {
            system,
            opts,
            capacity: capacity.max(1),
            inner: Mutex::new(CacheState::default()),
        }
    }

    pub fn system(&self) -> &Arc<SaddleSystem> {
        &self.system
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    /// `(hits, misses)`
    pub fn counters(&self) -> (u64, u64) {
        let s = self.inner.lock().expect("cache poisoned");
        (s.hits, s.misses)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache poisoned").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, y: usize, k: usize, eps: f64) -> Result<Arc<GreenColumn>> {
        let key = Key {
            y,
            k,
            eps: eps.to_bits(),
            adjoint: self.system.is_adjoint(),
        };
        {
            let mut s = self.inner.lock().expect("cache poisoned");
            s.tick += 1;
            let t = s.tick;
            if let Some(entry) = s.map.get_mut(&key) {
                entry.1 = t;
                let col = entry.0.clone();
                s.hits += 1;
                return Ok(col);
            }
            s.misses += 1;
        }
        // solve outside the lock; concurrent misses on one key just duplicate work
        let col = Arc::new(averaged_green_column(&self.system, y, k, eps, &self.opts)?);
        let mut s = self.inner.lock().expect("cache poisoned");
        s.tick += 1;
        let t = s.tick;
        s.map.insert(key, (col.clone(), t));
        while s.map.len() > self.capacity {
            let oldest = s.map.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| *k);
            match oldest {
                Some(k) => {
                    s.map.remove(&k);
                }
                None => break,
            }
        }
        Ok(col)
    }

    /// All `n` columns for one pole.
    pub fn columns(&self, y: usize, eps: f64) -> Result<Vec<Arc<GreenColumn>>> {
        (0..self.system.dim()).map(|k| self.column(y, k, eps)).collect()
    }
}

/// `G(x, y)` read off the cell-averaged velocities at `x`.
pub fn green_matrix(cache: &GreenCache, x: usize, y: usize, eps: f64) -> Result<GreenMatrixSample> {
    if x == y {
        return Err(Error::Precondition("x and y must differ".into()));
    }
    let sys = cache.system();
    let xk = sys
        .layout()
        .cell_dof(x)
        .ok_or_else(|| Error::Precondition(format!("cell {x} is not interior")))?;
    let n = sys.dim();
    let cols = cache.columns(y, eps)?;
    let mut g = vec![0.0; n * n];
    for (k, col) in cols.iter().enumerate() {
        let v = ball_mean(sys, &col.velocity, &[xk]);
        for i in 0..n {
            g[i * n + k] = v[i];
        }
    }
    Ok(GreenMatrixSample {
        x_cell: x,
        y_cell: y,
        epsilon: eps,
        g,
    })
}

/// `max |⨍_{B_ε(x)} G^{lk}_ε(·,y) − ⨍_{B_ε(y)} (G*_ε)^{kl}(·,x)| / max |·|`.
pub fn symmetry_defect(primal: &GreenCache, adjoint: &GreenCache, x: usize, y: usize, eps: f64) -> Result<f64> {
    if x == y {
        return Err(Error::Precondition("x and y must differ".into()));
    }
    if primal.system().is_adjoint() || !adjoint.system().is_adjoint() {
        return Err(Error::Precondition("symmetry_defect needs a primal and an adjoint system".into()));
    }
    let sys = primal.system();
    let n = sys.dim();
    let xball = mollifier_ball(sys, x, eps);
    let yball = mollifier_ball(adjoint.system(), y, eps);
    let gy = primal.columns(y, eps)?;
    let gx = adjoint.columns(x, eps)?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..n {
        let a = ball_mean(sys, &gy[k].velocity, &xball);
        for l in 0..n {
            let b = ball_mean(adjoint.system(), &gx[l].velocity, &yball);
            // A[l][k] against B[k][l]
            worst = worst.max((a[l] - b[k]).abs());
            scale = scale.max(a[l].abs()).max(b[k].abs());
        }
    }
    Ok(if scale == 0.0 { 0.0 } else { worst / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationCheck {
    /// `⨍_{Ω_ε(y)} u^k`
    pub lhs: f64,
    /// `⟨G, f⟩ − ⟨D G, f_α⟩ − ⟨Π, g⟩`
    pub rhs: f64,
    pub defect: f64,
}

/// Solves the adjoint system with `trial` and compares both sides of the
/// representation formula for component `k`.
pub fn representation_defect(
    primal: &GreenCache,
    adjoint_system: &SaddleSystem,
    y: usize,
    k: usize,
    eps: f64,
    trial: &RhsData,
) -> Result<RepresentationCheck> {
    let sys = primal.system();
    if !adjoint_system.is_adjoint() || sys.is_adjoint() {
        return Err(Error::Precondition("representation_defect needs a primal cache and an adjoint system".into()));
    }
    adjoint_system.validate_rhs(trial)?;
    let col = primal.column(y, k, eps)?;
    let (u, _) = solve_stokes(adjoint_system, trial, primal.options())?;
    let lhs = ball_mean(adjoint_system, &u.u, &col.ball)[k];
    let load = sys.velocity_load(trial);
    let vol = sys.grid().cell_volume();
    let rhs = crate::sparse::dot(&load, &col.velocity) - vol * crate::sparse::dot(&col.pressure, &trial.g);
    let scale = lhs.abs().max(rhs.abs());
    Ok(RepresentationCheck {
        lhs,
        rhs,
        defect: if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale },
    })
}

/// One shell of the decay table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub r: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

/// Per-cell `|G(x,y)|` (Frobenius) for all interior cells, pressure ordered.
pub fn green_magnitude(sys: &SaddleSystem, cols: &[Arc<GreenColumn>]) -> Vec<f64> {
    let n = sys.dim();
    let np = sys.pressure_dofs();
    let mut sq = vec![0.0; np];
    for col in cols {
        let cv = sys.cell_velocity(&col.velocity);
        for (k, s) in sq.iter_mut().enumerate() {
            *s += (0..n).map(|i| cv[k * n + i] * cv[k * n + i]).sum::<f64>();
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Shell statistics of `|G(·,y)|` for shells of width `h` over `[r_min, r_max]`.
pub fn decay_samples(sys: &SaddleSystem, y: usize, magnitude: &[f64], r_min: f64, r_max: f64) -> Vec<DecaySample> {
    let g = sys.grid();
    let h = g.h();
    let yc = g.cell_center(y);
    let nshell = ((r_max - r_min) / h).floor() as usize + 1;
    let mut out: Vec<DecaySample> = (0..nshell)
        .map(|s| DecaySample {
            r: r_min + s as f64 * h,
            max: 0.0,
            mean: 0.0,
            count: 0,
        })
        .collect();
    for (k, &c) in sys.layout().pressure_cells().iter().enumerate() {
        let r = g.distance(&g.cell_center(c), &yc);
        let s = ((r - r_min) / h + 0.5).floor();
        if s < 0.0 || s as usize >= nshell || r < r_min - 0.5 * h || r > r_max + 0.5 * h {
            continue;
        }
        let e = &mut out[s as usize];
        e.max = e.max.max(magnitude[k]);
        e.mean += magnitude[k];
        e.count += 1;
    }
    out.retain(|e| e.count > 0);
    for e in &mut out {
        e.mean /= e.count as f64;
    }
    out
}
