//! Discrete Stokes operators on the staggered grid.
//!
//! The velocity gradient is sampled per interior cell at each of its `2^n`
//! corners. Diagonal entries `D_j u^j` are the cell-centered differences;
//! off-diagonal entries `D_β u^j` are the edge differences nearest to the
//! corner. Missing tangential neighbors are reflected (`u_ghost = −u`), and
//! normal velocities on boundary faces vanish. Every sample carries weight
//! `|cell| / 2^n`, so the viscous block is exactly
//!
//! ```text
//! ⟨L u, v⟩ = Σ_cells Σ_corners w · (D v)ᵀ M_cell (D u)
//! ```
//!
//! which makes `L(Aᵀ) = L(A)ᵀ` and `⟨Lu,u⟩ ≥ λ ‖D u‖²` hold to rounding. For
//! identity coefficients on a box the samples recover the standard
//! `2n+1`-point vector Laplacian scaled by `h^{n−2}`.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amg::{Amg, AmgOptions};
use crate::coefficients::{CoefficientField, Ellipticity};
use crate::domain::{DomainMask, FaceKind};
use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid, MAX_DIM};
use crate::sparse::{dot, norm2, CsrMatrix};

const NONE: u32 = u32::MAX;

/// What a face contributes to a difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaceRef {
    Dof(u32),
    Zero,
    Exterior,
}

/// Numbering of velocity and pressure unknowns.
#[derive(Debug, Clone)]
pub struct DofLayout {
    n: usize,
    face_dof: Vec<Vec<u32>>,
    face_exterior: Vec<Vec<bool>>,
    dof_face: Vec<(u8, u32)>,
    cell_dof: Vec<u32>,
    pressure_cells: Vec<usize>,
}

impl DofLayout {
    pub fn new(mask: &DomainMask) -> Self {
        let g = mask.grid();
        let n = g.dim();
        let mut face_dof = Vec::with_capacity(n);
        let mut face_exterior = Vec::with_capacity(n);
        let mut dof_face = Vec::new();
        for a in 0..n {
            let nf = g.num_faces(a);
            let mut map = vec![NONE; nf];
            let mut ext = vec![false; nf];
            for f in 0..nf {
                match mask.face_kind(a, f) {
                    FaceKind::Interior => {
                        map[f] = dof_face.len() as u32;
                        dof_face.push((a as u8, f as u32));
                    }
                    FaceKind::Exterior => ext[f] = true,
                    FaceKind::Boundary => {}
                }
            }
            face_dof.push(map);
            face_exterior.push(ext);
        }
        let mut cell_dof = vec![NONE; g.num_cells()];
        for (k, &c) in mask.interior_cells().iter().enumerate() {
            cell_dof[c] = k as u32;
        }
        Self {
            n,
            face_dof,
            face_exterior,
            dof_face,
            cell_dof,
            pressure_cells: mask.interior_cells().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn velocity_dofs(&self) -> usize {
        self.dof_face.len()
    }

    pub fn pressure_dofs(&self) -> usize {
        self.pressure_cells.len()
    }

    /// `(axis, face)` of a velocity unknown.
    pub fn dof_face(&self, dof: usize) -> (usize, usize) {
        let (a, f) = self.dof_face[dof];
        (a as usize, f as usize)
    }

    pub fn face_dof(&self, axis: usize, face: usize) -> Option<usize> {
        let d = self.face_dof[axis][face];
        (d != NONE).then_some(d as usize)
    }

    /// Pressure index of an interior cell.
    pub fn cell_dof(&self, cell: usize) -> Option<usize> {
        let d = self.cell_dof[cell];
        (d != NONE).then_some(d as usize)
    }

    /// Interior cells in pressure order.
    pub fn pressure_cells(&self) -> &[usize] {
        &self.pressure_cells
    }

    #[inline]
    fn face_ref(&self, axis: usize, face: usize) -> FaceRef {
        let d = self.face_dof[axis][face];
        if d != NONE {
            FaceRef::Dof(d)
        } else if self.face_exterior[axis][face] {
            FaceRef::Exterior
        } else {
            FaceRef::Zero
        }
    }
}

/// Up to two `(dof, coefficient)` terms of one gradient sample entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    pub len: u8,
    pub terms: [(u32, f64); 2],
}

impl Stencil {
    #[inline]
    fn push(&mut self, dof: u32, c: f64) {
        self.terms[self.len as usize] = (dof, c);
        self.len += 1;
    }

    #[inline]
    pub fn iter(&self) -> impl Iterator<Item = &(u32, f64)> {
        self.terms[..self.len as usize].iter()
    }

    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.iter().map(|&(d, c)| c * u[d as usize]).sum()
    }
}

/// Gradient stencils of every entry `(j, β)` at corner `corner` of `cell`.
pub fn corner_stencils(grid: &StaggeredGrid, layout: &DofLayout, cell: usize, corner: usize, out: &mut [Stencil]) {
    let n = grid.dim();
    let inv_h = 1.0 / grid.h();
    let idx = grid.cell_coords(cell);
    for j in 0..n {
        let hi = grid.cell_face(cell, j, true);
        let lo = grid.cell_face(cell, j, false);
        for beta in 0..n {
            let mut s = Stencil::default();
            if beta == j {
                if let FaceRef::Dof(d) = layout.face_ref(j, hi) {
                    s.push(d, inv_h);
                }
                if let FaceRef::Dof(d) = layout.face_ref(j, lo) {
                    s.push(d, -inv_h);
                }
            } else {
                let side_high = corner >> j & 1 == 1;
                let dir: isize = if corner >> beta & 1 == 1 { 1 } else { -1 };
                let f1 = if side_high { hi } else { lo };
                let v1 = layout.face_ref(j, f1);
                let mut fidx: [usize; MAX_DIM] = idx;
                if side_high {
                    fidx[j] += 1;
                }
                let kb = fidx[beta] as isize + dir;
                let v2 = if kb < 0 || kb >= grid.cells_per_axis()[beta] as isize {
                    FaceRef::Exterior
                } else {
                    fidx[beta] = kb as usize;
                    layout.face_ref(j, grid.face_index(j, &fidx))
                };
                let d = dir as f64 * inv_h;
                match (v1, v2) {
                    (FaceRef::Dof(a), FaceRef::Exterior) => s.push(a, -2.0 * d),
                    (v1, v2) => {
                        if let FaceRef::Dof(a) = v1 {
                            s.push(a, -d);
                        }
                        if let FaceRef::Dof(b) = v2 {
                            s.push(b, d);
                        }
                    }
                }
            }
            out[j * n + beta] = s;
        }
    }
}

/// Right-hand side `(f, f_α, g)` on interior cells (pressure ordering).
///
/// `f` holds `n` components per cell, `f_alpha` the `n × n` flux tensor
/// `f_α^i` per cell at slot `i·n + α`, `g` one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsData {
    pub f: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub g: Vec<f64>,
}

impl RhsData {
    pub fn zeros(n: usize, ncells: usize) -> Self {
        Self {
            f: vec![0.0; n * ncells],
            f_alpha: vec![0.0; n * n * ncells],
            g: vec![0.0; ncells],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            f: self.f.iter().map(|v| v * s).collect(),
            f_alpha: self.f_alpha.iter().map(|v| v * s).collect(),
            g: self.g.iter().map(|v| v * s).collect(),
        }
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &RhsData, b: f64) -> Self {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Self {
            f: mix(&self.f, &other.f),
            f_alpha: mix(&self.f_alpha, &other.f_alpha),
            g: mix(&self.g, &other.g),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.iter().chain(&self.f_alpha).chain(&self.g).all(|&v| v == 0.0)
    }

    /// Subtracts the cell mean from `g`.
    pub fn project_g(&mut self) {
        let m = self.g.iter().sum::<f64>() / self.g.len() as f64;
        self.g.iter_mut().for_each(|v| *v -= m);
    }
}

/// Assembled saddle-point system `[L Bᵀ; B 0]` with `B = −|cell| div_h`.
pub struct SaddleSystem {
    mask: Arc<DomainMask>,
    coefficients: Arc<CoefficientField>,
    adjoint: bool,
    layout: DofLayout,
    l: CsrMatrix,
    b: CsrMatrix,
    bt: CsrMatrix,
    ellipticity: Ellipticity,
    amg: OnceLock<Amg>,
    viscosity_scale: f64,
}

impl std::fmt::Debug for SaddleSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleSystem")
            .field("velocity_dof", &self.velocity_dofs())
            .field("pressure_dof", &self.pressure_dofs())
            .field("adjoint", &self.adjoint)
            .finish()
    }
}

pub fn assemble_system(
    field: &Arc<CoefficientField>,
    mask: &Arc<DomainMask>,
    adjoint: bool,
) -> Result<SaddleSystem> {
    SaddleSystem::new(field.clone(), mask.clone(), adjoint)
}

impl SaddleSystem {
    pub fn new(field: Arc<CoefficientField>, mask: Arc<DomainMask>, adjoint: bool) -> Result<Self> {
        let grid = mask.grid().clone();
        if field.grid() != &grid {
            return Err(Error::Assembly("coefficient field and mask live on different grids".into()));
        }
        let ellipticity = field.check_ellipticity()?;
        if !(ellipticity.lambda_eff > 0.0) {
            return Err(Error::Assembly(format!(
                "coefficients are not strongly elliptic (lambda_eff = {})",
                ellipticity.lambda_eff
            )));
        }
        let layout = DofLayout::new(&mask);
        let l = assemble_viscous(&grid, &mask, &layout, &field, adjoint);
        let b = assemble_divergence(&grid, &layout);
        let bt = b.transpose();
        let m = grid.dim() * grid.dim();
        let viscosity_scale = mask
            .interior_cells()
            .iter()
            .map(|&c| {
                let blk = field.cell_matrix(c);
                (0..m).map(|e| blk[e * m + e]).sum::<f64>() / m as f64
            })
            .sum::<f64>()
            / mask.interior_cells().len() as f64;
        let sys = Self {
            mask,
            coefficients: field,
            adjoint,
            layout,
            l,
            b,
            bt,
            ellipticity,
            amg: OnceLock::new(),
            viscosity_scale,
        };
        sys.spot_check()?;
        Ok(sys)
    }

    fn spot_check(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..2 {
            let u: Vec<f64> = (0..self.velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..self.pressure_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sbp = self.sbp_defect(&u, &p);
            if sbp > 1e-12 * norm2(&u) * norm2(&p) * self.grid().cell_volume() / self.grid().h() * 10.0 {
                return Err(Error::Assembly(format!("summation-by-parts defect {sbp}")));
            }
            let lu = self.l.mul(&u);
            let energy = dot(&lu, &u);
            let grad = self.gradient_norm_sq(&u);
            let lam = self.ellipticity.lambda_eff;
            if energy < (lam - 1e-10) * grad - 1e-12 * energy.abs() {
                return Err(Error::Assembly(format!("coercivity defect: {energy} < {lam} * {grad}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &StaggeredGrid {
        self.mask.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        &self.mask
    }

    pub fn coefficients(&self) -> &Arc<CoefficientField> {
        &self.coefficients
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn velocity_dofs(&self) -> usize {
        self.layout.velocity_dofs()
    }

    pub fn pressure_dofs(&self) -> usize {
        self.layout.pressure_dofs()
    }

    pub fn l_block(&self) -> &CsrMatrix {
        &self.l
    }

    /// `B = −|cell| div_h` (pressure rows, velocity columns).
    pub fn b_block(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn bt_block(&self) -> &CsrMatrix {
        &self.bt
    }

    pub fn ellipticity(&self) -> Ellipticity {
        self.ellipticity
    }

    /// Mean diagonal of the coefficient blocks, used to scale the pressure preconditioner.
    pub fn viscosity_scale(&self) -> f64 {
        self.viscosity_scale
    }

    /// AMG hierarchy of the component-decoupled symmetric part of `L`.
    pub fn velocity_preconditioner(&self) -> &Amg {
        self.amg.get_or_init(|| {
            let lt = self.l.transpose();
            let sym = self.l.add_scaled(1.0, &lt);
            let layout = &self.layout;
            let decoupled = sym.filter(|r, c| layout.dof_face[r].0 == layout.dof_face[c].0);
            let half = CsrMatrix::from_triplets(
                decoupled.nrows(),
                decoupled.ncols(),
                decoupled.triplets().into_iter().map(|(r, c, v)| (r, c, 0.5 * v)).collect(),
            );
            Amg::new(&half, AmgOptions::default())
        })
    }

    /// Cell-centered divergence `div_h u` per interior cell.
    pub fn apply_divergence(&self, u: &[f64]) -> Vec<f64> {
        let inv_vol = -1.0 / self.grid().cell_volume();
        self.b.mul(u).into_iter().map(|v| v * inv_vol).collect()
    }

    /// Discrete gradient of a cell field on velocity faces.
    pub fn apply_gradient(&self, p: &[f64]) -> Vec<f64> {
        let s = 1.0 / self.grid().cell_volume();
        self.bt.mul(p).into_iter().map(|v| v * s).collect()
    }

    /// `|⟨div u, p⟩ + ⟨u, grad p⟩|` with volume-weighted pairings.
    pub fn sbp_defect(&self, u: &[f64], p: &[f64]) -> f64 {
        let vol = self.grid().cell_volume();
        let div = self.apply_divergence(u);
        let grad = self.apply_gradient(p);
        (vol * dot(&div, p) + vol * dot(u, &grad)).abs()
    }

    /// Visits every gradient sample of `u` on the given cells:
    /// `visit(cell, weight, sample)` with `sample[j·n + β] = D_β u^j`.
    pub fn for_each_gradient_sample(&self, u: &[f64], cells: &[usize], mut visit: impl FnMut(usize, f64, &[f64])) {
        let g = self.grid();
        let n = g.dim();
        let corners = 1usize << n;
        let w = g.cell_volume() / corners as f64;
        let mut st = [Stencil::default(); MAX_DIM * MAX_DIM];
        let mut sample = [0.0; MAX_DIM * MAX_DIM];
        for &c in cells {
            for corner in 0..corners {
                corner_stencils(g, &self.layout, c, corner, &mut st[..n * n]);
                for e in 0..n * n {
                    sample[e] = st[e].eval(u);
                }
                visit(c, w, &sample[..n * n]);
            }
        }
    }

    /// `‖D_h u‖²` over the whole domain.
    pub fn gradient_norm_sq(&self, u: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_gradient_sample(u, self.mask.interior_cells(), |_, w, s| {
            acc += w * s.iter().map(|v| v * v).sum::<f64>();
        });
        acc
    }

    /// Velocity averaged to cell centers: `n` values per interior cell.
    pub fn cell_velocity(&self, u: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let n = g.dim();
        let mut out = vec![0.0; n * self.pressure_dofs()];
        for (k, &c) in self.layout.pressure_cells.iter().enumerate() {
            for j in 0..n {
                let mut v = 0.0;
                for high in [false, true] {
                    if let FaceRef::Dof(d) = self.layout.face_ref(j, g.cell_face(c, j, high)) {
                        v += 0.5 * u[d as usize];
                    }
                }
                out[k * n + j] = v;
            }
        }
        out
    }

    /// Adjoint of [`Self::cell_velocity`]: spreads cell vectors onto faces.
    pub fn cell_velocity_transpose(&self, cellvec: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let n = g.dim();
        let mut out = vec![0.0; self.velocity_dofs()];
        for (k, &c) in self.layout.pressure_cells.iter().enumerate() {
            for j in 0..n {
                let v = cellvec[k * n + j];
                if v == 0.0 {
                    continue;
                }
                for high in [false, true] {
                    if let FaceRef::Dof(d) = self.layout.face_ref(j, g.cell_face(c, j, high)) {
                        out[d as usize] += 0.5 * v;
                    }
                }
            }
        }
        out
    }

    /// Velocity load vector `⟨f, φ⟩ − ⟨f_α, D_α φ⟩`.
    pub fn velocity_load(&self, rhs: &RhsData) -> Vec<f64> {
        let g = self.grid();
        let n = g.dim();
        let vol = g.cell_volume();
        let mut load = self.cell_velocity_transpose(&rhs.f);
        load.iter_mut().for_each(|v| *v *= vol);
        if rhs.f_alpha.iter().any(|&v| v != 0.0) {
            let corners = 1usize << n;
            let w = vol / corners as f64;
            let mut st = [Stencil::default(); MAX_DIM * MAX_DIM];
            for (k, &c) in self.layout.pressure_cells.iter().enumerate() {
                let flux = &rhs.f_alpha[k * n * n..(k + 1) * n * n];
                for corner in 0..corners {
                    corner_stencils(g, &self.layout, c, corner, &mut st[..n * n]);
                    for e in 0..n * n {
                        for &(d, coef) in st[e].iter() {
                            load[d as usize] -= w * flux[e] * coef;
                        }
                    }
                }
            }
        }
        load
    }

    /// Full right-hand side vector `[load; −|cell| g]`.
    pub fn rhs_vector(&self, rhs: &RhsData) -> Result<Vec<f64>> {
        self.validate_rhs(rhs)?;
        let vol = self.grid().cell_volume();
        let mut out = self.velocity_load(rhs);
        out.extend(rhs.g.iter().map(|v| -vol * v));
        Ok(out)
    }

    pub fn validate_rhs(&self, rhs: &RhsData) -> Result<()> {
        let n = self.dim();
        let np = self.pressure_dofs();
        if rhs.f.len() != n * np || rhs.f_alpha.len() != n * n * np || rhs.g.len() != np {
            return Err(Error::Rhs(format!(
                "expected lengths f={} f_alpha={} g={}, got {} {} {}",
                n * np,
                n * n * np,
                np,
                rhs.f.len(),
                rhs.f_alpha.len(),
                rhs.g.len()
            )));
        }
        if let Some(v) = rhs.f.iter().chain(&rhs.f_alpha).chain(&rhs.g).find(|v| !v.is_finite()) {
            return Err(Error::Rhs(format!("non-finite right-hand side entry {v}")));
        }
        let vol = self.grid().cell_volume();
        let mean: f64 = rhs.g.iter().sum::<f64>() * vol;
        let gnorm = (rhs.g.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
        if mean.abs() > 1e-12 * gnorm.max(f64::MIN_POSITIVE) && mean != 0.0 {
            return Err(Error::Rhs(format!("g is not mean-zero: ∫g = {mean:e}")));
        }
        Ok(())
    }

    /// Applies the full saddle operator to `[u; p]`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nv = self.velocity_dofs();
        let (xu, xp) = x.split_at(nv);
        let (yu, yp) = y.split_at_mut(nv);
        self.l.matvec(xu, yu);
        let bp = self.bt.mul(xp);
        yu.iter_mut().zip(&bp).for_each(|(a, b)| *a += b);
        self.b.matvec(xu, yp);
    }

    /// Interpolates a velocity field given per component at face centers.
    pub fn interpolate_velocity(&self, f: impl Fn(&[f64; MAX_DIM], usize) -> f64) -> Vec<f64> {
        let g = self.grid();
        (0..self.velocity_dofs())
            .map(|d| {
                let (a, face) = self.layout.dof_face(d);
                f(&g.face_center(a, face), a)
            })
            .collect()
    }
}

fn assemble_viscous(
    grid: &StaggeredGrid,
    mask: &DomainMask,
    layout: &DofLayout,
    field: &CoefficientField,
    adjoint: bool,
) -> CsrMatrix {
    let n = grid.dim();
    let m = n * n;
    let corners = 1usize << n;
    let w = grid.cell_volume() / corners as f64;
    let nv = layout.velocity_dofs();
    let mut acc = CsrMatrix::from_triplets(nv, nv, Vec::new());
    let mut trip: Vec<(u32, u32, f64)> = Vec::new();
    let mut st = [Stencil::default(); MAX_DIM * MAX_DIM];
    let mut local_dofs: Vec<u32> = Vec::with_capacity(64);
    let mut local = vec![0.0f64; 64 * 64];
    let flush_at = 4_000_000;
    for &c in mask.interior_cells() {
        let blk = field.cell_matrix(c);
        local_dofs.clear();
        let slot_of = |d: u32, local_dofs: &mut Vec<u32>| -> usize {
            match local_dofs.iter().position(|&x| x == d) {
                Some(p) => p,
                None => {
                    local_dofs.push(d);
                    local_dofs.len() - 1
                }
            }
        };
        local.iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..corners {
            corner_stencils(grid, layout, c, corner, &mut st[..m]);
            for e in 0..m {
                for e2 in 0..m {
                    let coef = if adjoint { blk[e2 * m + e] } else { blk[e * m + e2] };
                    if coef == 0.0 {
                        continue;
                    }
                    for &(ra, ca) in st[e].iter() {
                        let i = slot_of(ra, &mut local_dofs);
                        for &(rb, cb) in st[e2].iter() {
                            let k = slot_of(rb, &mut local_dofs);
                            local[i * 64 + k] += w * coef * ca * cb;
                        }
                    }
                }
            }
        }
        for (i, &ri) in local_dofs.iter().enumerate() {
            for (k, &rk) in local_dofs.iter().enumerate() {
                let v = local[i * 64 + k];
                if v != 0.0 {
                    trip.push((ri, rk, v));
                }
            }
        }
        if trip.len() > flush_at {
            let part = CsrMatrix::from_triplets(nv, nv, std::mem::take(&mut trip));
            acc = acc.add_scaled(1.0, &part);
        }
    }
    let part = CsrMatrix::from_triplets(nv, nv, trip);
    if acc.nnz() == 0 {
        part
    } else {
        acc.add_scaled(1.0, &part)
    }
}

fn assemble_divergence(grid: &StaggeredGrid, layout: &DofLayout) -> CsrMatrix {
    let n = grid.dim();
    let s = grid.cell_volume() / grid.h();
    let mut trip = Vec::new();
    for (k, &c) in layout.pressure_cells.iter().enumerate() {
        for j in 0..n {
            if let FaceRef::Dof(d) = layout.face_ref(j, grid.cell_face(c, j, true)) {
                trip.push((k as u32, d, -s));
            }
            if let FaceRef::Dof(d) = layout.face_ref(j, grid.cell_face(c, j, false)) {
                trip.push((k as u32, d, s));
            }
        }
    }
    CsrMatrix::from_triplets(layout.pressure_dofs(), layout.velocity_dofs(), trip)
}
