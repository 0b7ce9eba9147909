//! Measurable functionals: L^q and weak-L^q quantities, Hölder seminorms,
//! Caccioppoli and reverse-Hölder ratios, decay fits and empirical-constant
//! probes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{RhsData, SaddleSystem};
use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid, MAX_DIM};
use crate::solver::{solve_stokes, SolveOptions, StokesField};

/// Cell-wise field with `ncomp` components per grid cell (full grid
/// numbering; cells outside the domain hold zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: StaggeredGrid,
    ncomp: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: &StaggeredGrid, ncomp: usize, values: Vec<f64>) -> Result<Self> {
        if ncomp == 0 || values.len() != ncomp * grid.num_cells() {
            return Err(Error::Precondition(format!(
                "field needs {} values, got {}",
                ncomp * grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self { grid: grid.clone(), ncomp, values })
    }

    pub fn scalar(grid: &StaggeredGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    /// Scatters a pressure-ordered vector with `ncomp` entries per cell.
    pub fn from_interior(sys: &SaddleSystem, ncomp: usize, data: &[f64]) -> Self {
        let grid = sys.grid();
        let mut values = vec![0.0; ncomp * grid.num_cells()];
        for (k, &c) in sys.layout().pressure_cells().iter().enumerate() {
            values[c * ncomp..(c + 1) * ncomp].copy_from_slice(&data[k * ncomp..(k + 1) * ncomp]);
        }
        Self { grid: grid.clone(), ncomp, values }
    }

    pub fn from_pressure(sys: &SaddleSystem, p: &[f64]) -> Self {
        Self::from_interior(sys, 1, p)
    }

    /// Face velocities averaged to cell centers.
    pub fn from_velocity(sys: &SaddleSystem, u: &[f64]) -> Self {
        Self::from_interior(sys, sys.dim(), &sys.cell_velocity(u))
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.ncomp..(cell + 1) * self.ncomp]
    }

    /// Euclidean magnitude at a cell.
    #[inline]
    pub fn magnitude(&self, cell: usize) -> f64 {
        let v = self.at(cell);
        if v.len() == 1 {
            v[0].abs()
        } else {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            ncomp: self.ncomp,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

fn check_region(field: &CellField, region: &[usize]) -> Result<()> {
    if region.is_empty() {
        return Err(Error::Precondition("empty region".into()));
    }
    if let Some(&c) = region.iter().find(|&&c| c >= field.grid.num_cells()) {
        return Err(Error::Precondition(format!("cell {c} outside the grid")));
    }
    Ok(())
}

/// `(Σ |v|^q · |cell|)^{1/q}`; `q = ∞` gives the max.
pub fn lq_norm(field: &CellField, q: f64, region: &[usize]) -> Result<f64> {
    check_region(field, region)?;
    if !(q >= 1.0) {
        return Err(Error::Precondition(format!("q must lie in [1, ∞], got {q}")));
    }
    if q.is_infinite() {
        return Ok(region.iter().map(|&c| field.magnitude(c)).fold(0.0, f64::max));
    }
    let vol = field.grid.cell_volume();
    let s: f64 = region.iter().map(|&c| field.magnitude(c).powf(q)).sum();
    Ok((s * vol).powf(1.0 / q))
}

/// `|{x ∈ region : |v(x)| > t}|` for each threshold.
pub fn distribution_function(field: &CellField, region: &[usize], thresholds: &[f64]) -> Result<Vec<f64>> {
    check_region(field, region)?;
    if thresholds.iter().any(|&t| !(t > 0.0)) || thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("thresholds must be positive and ascending".into()));
    }
    let mut mags: Vec<f64> = region.iter().map(|&c| field.magnitude(c)).collect();
    mags.sort_by(f64::total_cmp);
    let vol = field.grid.cell_volume();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let above = mags.len() - mags.partition_point(|&m| m <= t);
            above as f64 * vol
        })
        .collect())
}

/// Regions up to this size are scanned pair by pair.
pub const HOLDER_EXHAUSTIVE_LIMIT: usize = 4000;
pub const HOLDER_SAMPLED_PAIRS: usize = 100_000;

/// `max |v(x) − v(y)| / |x − y|^μ` over cell pairs at distance ≥ `min_sep`.
pub fn holder_seminorm(field: &CellField, mu: f64, region: &[usize], min_sep: f64, seed: u64) -> Result<f64> {
    check_region(field, region)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Precondition(format!("mu must lie in (0, 1], got {mu}")));
    }
    let g = &field.grid;
    if min_sep < 2.0 * g.h() * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("min_sep {min_sep} below 2h")));
    }
    let centers: Vec<[f64; MAX_DIM]> = region.iter().map(|&c| g.cell_center(c)).collect();
    let quotient = |a: usize, b: usize| -> Option<f64> {
        let d = g.distance(&centers[a], &centers[b]);
        if d < min_sep * (1.0 - 1e-12) {
            return None;
        }
        let va = field.at(region[a]);
        let vb = field.at(region[b]);
        let diff = if va.len() == 1 {
            (va[0] - vb[0]).abs()
        } else {
            va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        Some(diff / d.powf(mu))
    };
    let n = region.len();
    let best = if n <= HOLDER_EXHAUSTIVE_LIMIT {
        (0..n)
            .into_par_iter()
            .map(|a| ((a + 1)..n).filter_map(|b| quotient(a, b)).fold(None, |m: Option<f64>, q| Some(m.map_or(q, |m| m.max(q)))))
            .reduce(|| None, |x, y| match (x, y) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, None) => a,
                (None, b) => b,
            })
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<f64> = None;
        let mut accepted = 0;
        let mut attempts = 0usize;
        while accepted < HOLDER_SAMPLED_PAIRS && attempts < 100 * HOLDER_SAMPLED_PAIRS {
            attempts += 1;
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if let Some(q) = quotient(a, b) {
                accepted += 1;
                best = Some(best.map_or(q, |m: f64| m.max(q)));
            }
        }
        best
    };
    best.ok_or_else(|| Error::Precondition(format!("no cell pair in the region is at least {min_sep} apart")))
}

/// Ratio with an explicit degeneracy flag (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallRatio {
    pub ratio: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub degenerate: bool,
}

impl BallRatio {
    fn from_parts(numerator: f64, denominator: f64) -> Self {
        if denominator > 0.0 {
            Self {
                ratio: Some(numerator / denominator),
                numerator,
                denominator,
                degenerate: false,
            }
        } else {
            Self {
                ratio: None,
                numerator,
                denominator,
                degenerate: true,
            }
        }
    }
}

fn interior_ball(sys: &SaddleSystem, center: &[f64; MAX_DIM], radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!("ball radius must be positive, got {radius}")));
    }
    let g = sys.grid();
    for a in 0..g.dim() {
        let lo = g.origin()[a];
        let hi = lo + g.length(a);
        let tol = 1e-12 * g.length(a);
        if center[a] - radius < lo - tol || center[a] + radius > hi + tol {
            return Err(Error::Precondition(format!("ball of radius {radius} at {center:?} exits the domain")));
        }
    }
    let cells = g.cells_in_ball(center, radius);
    if cells.is_empty() {
        return Err(Error::Precondition("ball contains no cell centers".into()));
    }
    if cells.iter().any(|&c| !sys.mask().is_interior(c)) {
        return Err(Error::Precondition(format!("ball of radius {radius} at {center:?} exits the domain")));
    }
    Ok(cells)
}

/// `(Σ w |D u|^q, Σ w)` over the gradient samples of the given cells.
pub fn gradient_power_sum(sys: &SaddleSystem, u: &[f64], cells: &[usize], q: f64) -> (f64, f64) {
    let mut acc = 0.0;
    let mut weight = 0.0;
    sys.for_each_gradient_sample(u, cells, |_, w, s| {
        let m2: f64 = s.iter().map(|v| v * v).sum();
        acc += w * if q == 2.0 { m2 } else { m2.sqrt().powf(q) };
        weight += w;
    });
    (acc, weight)
}

/// `‖D_h u‖_{L^q}` over the given cells (all interior cells when `None`).
pub fn gradient_lq(sys: &SaddleSystem, u: &[f64], q: f64, cells: Option<&[usize]>) -> f64 {
    let cells = cells.unwrap_or_else(|| sys.mask().interior_cells());
    if q.is_infinite() {
        let mut m: f64 = 0.0;
        sys.for_each_gradient_sample(u, cells, |_, _, s| {
            m = m.max(s.iter().map(|v| v * v).sum::<f64>().sqrt());
        });
        return m;
    }
    gradient_power_sum(sys, u, cells, q).0.powf(1.0 / q)
}

/// `[∫_{B_{R/2}} |p − (p)_{B_{R/2}}|² + ∫_{B_{R/2}} |D u|²] / [R⁻² ∫_{B_R} |u|²]`.
pub fn caccioppoli_ratio(sys: &SaddleSystem, sol: &StokesField, center: &[f64; MAX_DIM], radius: f64) -> Result<BallRatio> {
    let outer = interior_ball(sys, center, radius)?;
    let inner = interior_ball(sys, center, 0.5 * radius)?;
    let lay = sys.layout();
    let vol = sys.grid().cell_volume();
    let n = sys.dim();
    let pin: Vec<f64> = inner.iter().map(|&c| sol.p[lay.cell_dof(c).expect("interior")]).collect();
    let pmean = pin.iter().sum::<f64>() / pin.len() as f64;
    let posc: f64 = pin.iter().map(|v| (v - pmean) * (v - pmean)).sum::<f64>() * vol;
    let (grad, _) = gradient_power_sum(sys, &sol.u, &inner, 2.0);
    let cv = sys.cell_velocity(&sol.u);
    let usq: f64 = outer
        .iter()
        .map(|&c| {
            let k = lay.cell_dof(c).expect("interior");
            (0..n).map(|i| cv[k * n + i] * cv[k * n + i]).sum::<f64>()
        })
        .sum::<f64>()
        * vol;
    Ok(BallRatio::from_parts(posc + grad, usq / (radius * radius)))
}

/// `(⨍_{B_{R/2}} |D u|^{q₀})^{1/q₀} / (⨍_{B_R} |D u|²)^{1/2}`.
pub fn reverse_holder_ratio(
    sys: &SaddleSystem,
    sol: &StokesField,
    center: &[f64; MAX_DIM],
    radius: f64,
    q0: f64,
) -> Result<BallRatio> {
    if !(q0 > 2.0) || q0.is_infinite() {
        return Err(Error::Precondition(format!("q0 must exceed 2, got {q0}")));
    }
    let outer = interior_ball(sys, center, radius)?;
    let inner = interior_ball(sys, center, 0.5 * radius)?;
    let (a, wa) = gradient_power_sum(sys, &sol.u, &inner, q0);
    let (b, wb) = gradient_power_sum(sys, &sol.u, &outer, 2.0);
    Ok(BallRatio::from_parts((a / wa).powf(1.0 / q0), (b / wb).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log m` against `log r`.
pub fn decay_exponent_fit(samples: &[(f64, f64)]) -> Result<ExponentFit> {
    if samples.len() < 5 {
        return Err(Error::Precondition(format!("need at least 5 samples, got {}", samples.len())));
    }
    if samples.iter().any(|&(r, m)| !(r > 0.0 && m > 0.0 && r.is_finite() && m.is_finite())) {
        return Err(Error::Precondition("samples must be positive and finite".into()));
    }
    let rmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let rmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if rmax < 2.0 * rmin * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("samples span less than one octave ({rmin}..{rmax})")));
    }
    let k = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy <= 1e-20 * k * (1.0 + my * my) { 1.0 } else { 1.0 - sse / syy };
    Ok(ExponentFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
    })
}

/// A ball paired with a solution that is homogeneous on it.
#[derive(Debug, Clone, Copy)]
pub struct LocalTrial<'a> {
    pub center: [f64; MAX_DIM],
    pub radius: f64,
    pub solution: &'a StokesField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub sup: f64,
    pub values: Vec<Option<f64>>,
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl ProbeResult {
    fn from_values(values: Vec<Option<f64>>, failures: Vec<String>) -> Result<Self> {
        let valid: Vec<f64> = values.iter().flatten().copied().collect();
        if valid.is_empty() {
            return Err(match failures.first() {
                Some(first) => Error::solver(format!("every trial failed ({} total); {first}", failures.len()), 0, f64::NAN),
                None => Error::Precondition("no valid trials".into()),
            });
        }
        Ok(Self {
            sup: valid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            skipped: values.len() - valid.len(),
            values,
            failures,
        })
    }
}

/// `sup R^μ [u]_{C^μ(B_{R/2})} / (⨍_{B_R} |u|²)^{1/2}`.
pub fn a1_constant_probe(sys: &SaddleSystem, mu: f64, trials: &[LocalTrial<'_>], seed: u64) -> Result<ProbeResult> {
    let vol = sys.grid().cell_volume();
    let min_sep = 2.0 * sys.grid().h();
    let mut values = Vec::with_capacity(trials.len());
    for t in trials {
        let outer = interior_ball(sys, &t.center, t.radius)?;
        let inner = interior_ball(sys, &t.center, 0.5 * t.radius)?;
        let field = CellField::from_velocity(sys, &t.solution.u);
        let mean_sq = lq_norm(&field, 2.0, &outer)?.powi(2) / (outer.len() as f64 * vol);
        if mean_sq == 0.0 {
            values.push(None);
            continue;
        }
        let semi = match holder_seminorm(&field, mu, &inner, min_sep, seed) {
            Ok(s) => s,
            Err(_) => {
                values.push(None);
                continue;
            }
        };
        values.push(Some(t.radius.powf(mu) * semi / mean_sq.sqrt()));
    }
    ProbeResult::from_values(values, Vec::new())
}

/// Ball and data for one (A2) trial.
#[derive(Debug, Clone)]
pub struct A2Trial {
    pub center: [f64; MAX_DIM],
    pub radius: f64,
    pub rhs: RhsData,
}

/// `sup ‖u‖_{L^∞(Ω_{R/2})} / (R^{−n/2}‖u‖_{L²(Ω_R)} + R^{1−n+n/t}‖p‖_{L^{t/(t−1)}(Ω_R)}
/// + R²‖f‖_{L^∞(Ω_R)} + R^{1−n/t}‖g‖_{L^t(Ω_R)})`.
pub fn a2_bound_probe(sys: &SaddleSystem, t_exp: f64, trials: &[A2Trial], opts: &SolveOptions) -> Result<ProbeResult> {
    let n = sys.dim() as f64;
    if !(t_exp > n) {
        return Err(Error::Precondition(format!("t must exceed n = {n}, got {t_exp}")));
    }
    let mut values = Vec::with_capacity(trials.len());
    let mut failures = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        if t.rhs.is_zero() {
            values.push(None);
            continue;
        }
        let (sol, _) = match solve_stokes(sys, &t.rhs, opts) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("trial {i}: {e}"));
                values.push(None);
                continue;
            }
        };
        let domain_ball = |r: f64| -> Vec<usize> {
            sys.grid()
                .cells_in_ball(&t.center, r)
                .into_iter()
                .filter(|&c| sys.mask().is_interior(c))
                .collect()
        };
        let outer = domain_ball(t.radius);
        let inner = domain_ball(0.5 * t.radius);
        if inner.is_empty() {
            values.push(None);
            continue;
        }
        let u = CellField::from_velocity(sys, &sol.u);
        let p = CellField::from_pressure(sys, &sol.p);
        let f = CellField::from_interior(sys, sys.dim(), &t.rhs.f);
        let g = CellField::from_interior(sys, 1, &t.rhs.g);
        let r = t.radius;
        let num = lq_norm(&u, f64::INFINITY, &inner)?;
        let den = r.powf(-n / 2.0) * lq_norm(&u, 2.0, &outer)?
            + r.powf(1.0 - n + n / t_exp) * lq_norm(&p, t_exp / (t_exp - 1.0), &outer)?
            + r * r * lq_norm(&f, f64::INFINITY, &outer)?
            + r.powf(1.0 - n / t_exp) * lq_norm(&g, t_exp, &outer)?;
        values.push(if den > 0.0 { Some(num / den) } else { None });
    }
    ProbeResult::from_values(values, failures)
}

/// `(‖p‖_q + ‖D u‖_q) / (‖f‖_q + ‖f_α‖_q + ‖g‖_q)` for one solve.
pub fn lq_ratio(sys: &SaddleSystem, rhs: &RhsData, sol: &StokesField, q: f64) -> Option<f64> {
    let all = sys.mask().interior_cells();
    let n = sys.dim();
    let norm = |ncomp: usize, data: &[f64]| lq_norm(&CellField::from_interior(sys, ncomp, data), q, all).unwrap_or(0.0);
    let data = norm(n, &rhs.f) + norm(n * n, &rhs.f_alpha) + norm(1, &rhs.g);
    if data == 0.0 {
        return None;
    }
    Some((norm(1, &sol.p) + gradient_lq(sys, &sol.u, q, None)) / data)
}

/// Empirical L^q constant over a set of right-hand sides. Solver failures are
/// recorded and the sweep continues.
pub fn lq_constant_sweep(sys: &SaddleSystem, q: f64, trials: &[RhsData], opts: &SolveOptions) -> Result<ProbeResult> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Precondition(format!("q must lie in (1, ∞), got {q}")));
    }
    let mut values = Vec::with_capacity(trials.len());
    let mut failures = Vec::new();
    for (i, rhs) in trials.iter().enumerate() {
        match solve_stokes(sys, rhs, opts) {
            Ok((sol, _)) => values.push(lq_ratio(sys, rhs, &sol, q)),
            Err(e) => {
                failures.push(format!("trial {i}: {e}"));
                values.push(None);
            }
        }
    }
    ProbeResult::from_values(values, failures)
}

/// Named scalar metrics plus an optional sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EstimateReport {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    pub sweep_axis: Option<(String, Vec<f64>)>,
    pub config_hash: String,
    pub provenance: Vec<String>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    /// Rejects non-finite values.
    pub fn insert(&mut self, key: impl Into<String>, value: f64) -> Result<()> {
        let key = key.into();
        if !value.is_finite() {
            return Err(Error::Invariant(format!("metric {key} is not finite ({value})")));
        }
        self.metrics.insert(key, value);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_system;
    use crate::coefficients::{generate_coefficients, CoefficientSpec};
    use crate::domain::{build_domain, MaskSpec};
    use crate::grid::build_grid;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;
    use std::sync::Arc;

    fn grid8() -> StaggeredGrid {
        build_grid(3, 8, 1.0).unwrap()
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    fn some_region(g: &StaggeredGrid, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g.num_cells()).filter(|_| rng.gen_bool(0.6)).collect()
    }

    #[test]
    fn lq_of_constant() {
        let g = grid8();
        let f = CellField::scalar(&g, vec![3.0; g.num_cells()]).unwrap();
        let all: Vec<usize> = (0..g.num_cells()).collect();
        for q in [1.0, 1.5, 2.0, 4.0] {
            assert!((lq_norm(&f, q, &all).unwrap() - 3.0).abs() < 1e-13);
        }
        assert_eq!(lq_norm(&f, f64::INFINITY, &all).unwrap(), 3.0);
        assert!(matches!(lq_norm(&f, 2.0, &[]), Err(Error::Precondition(_))));
        assert!(lq_norm(&f, 0.5, &all).is_err());
    }

    #[test]
    fn norms_match_brute_force_scan() {
        let g = grid8();
        for seed in 0..5 {
            let ncomp = 1 + (seed as usize % 3);
            let f = CellField::new(&g, ncomp, noise(ncomp * g.num_cells(), seed)).unwrap();
            let region = some_region(&g, 100 + seed);
            let set: HashSet<usize> = region.iter().copied().collect();
            let vol = g.cell_volume();
            for q in [1.0, 2.0, 3.5] {
                // oracle: full scan with membership test
                let mut s = 0.0;
                for c in 0..g.num_cells() {
                    if set.contains(&c) {
                        let m: f64 = (0..ncomp).map(|i| f.values()[c * ncomp + i].powi(2)).sum::<f64>().sqrt();
                        s += m.powf(q) * vol;
                    }
                }
                let oracle = s.powf(1.0 / q);
                assert!((lq_norm(&f, q, &region).unwrap() - oracle).abs() <= 1e-12 * oracle);
            }
            let th = [0.1, 0.5, 1.0, 1.7, 2.5];
            let table = distribution_function(&f, &region, &th).unwrap();
            for (t, m) in th.iter().zip(&table) {
                let mut count = 0;
                for c in 0..g.num_cells() {
                    if set.contains(&c) && f.magnitude(c) > *t {
                        count += 1;
                    }
                }
                assert!((m - count as f64 * vol).abs() <= 1e-12 * m.max(vol));
            }
            assert!(table.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn distribution_of_one() {
        let g = grid8();
        let f = CellField::scalar(&g, vec![1.0; g.num_cells()]).unwrap();
        let all: Vec<usize> = (0..g.num_cells()).collect();
        assert_eq!(distribution_function(&f, &all, &[0.5, 2.0]).unwrap(), vec![1.0, 0.0]);
        assert!(distribution_function(&f, &all, &[2.0, 0.5]).is_err());
        assert!(distribution_function(&f, &all, &[0.0]).is_err());
    }

    #[test]
    fn holder_cases() {
        let g = grid8();
        let all: Vec<usize> = (0..g.num_cells()).collect();
        let c = CellField::scalar(&g, vec![4.0; g.num_cells()]).unwrap();
        assert_eq!(holder_seminorm(&c, 0.5, &all, 0.25, 1).unwrap(), 0.0);
        let lin = CellField::scalar(&g, (0..g.num_cells()).map(|k| g.cell_center(k)[0]).collect()).unwrap();
        assert_eq!(holder_seminorm(&lin, 1.0, &all, 0.25, 1).unwrap(), 1.0);
        assert!(holder_seminorm(&lin, 1.0, &all, 0.1, 1).is_err());
        assert!(holder_seminorm(&lin, 1.0, &all[..2], 0.25, 1).is_err());
    }

    #[test]
    fn holder_matches_exhaustive_scan() {
        let g = grid8();
        for seed in 0..3 {
            let f = CellField::new(&g, 2, noise(2 * g.num_cells(), seed)).unwrap();
            let region = some_region(&g, 7 + seed);
            let mu = 0.25 + 0.25 * seed as f64;
            let sep = 2.0 * g.h();
            let mut best: f64 = 0.0;
            for &a in &region {
                for &b in &region {
                    let xa = g.cell_center(a);
                    let xb = g.cell_center(b);
                    let d = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2) + (xa[2] - xb[2]).powi(2)).sqrt();
                    if d >= sep * (1.0 - 1e-12) {
                        let dv = ((f.at(a)[0] - f.at(b)[0]).powi(2) + (f.at(a)[1] - f.at(b)[1]).powi(2)).sqrt();
                        best = best.max(dv / d.powf(mu));
                    }
                }
            }
            let got = holder_seminorm(&f, mu, &region, sep, 0).unwrap();
            assert!((got - best).abs() <= 1e-12 * best);
        }
    }

    #[test]
    fn exponent_fit_recovers_power_laws() {
        for planted in [-1.0, -0.5, 0.0, 1.3] {
            let s: Vec<(f64, f64)> = (0..9).map(|k| {
                let r = 0.1 * 1.2f64.powi(k);
                (r, 2.5 * r.powf(planted))
            }).collect();
            let fit = decay_exponent_fit(&s).unwrap();
            assert!((fit.exponent - planted).abs() < 1e-10);
            assert!((fit.r_squared - 1.0).abs() < 1e-10);
        }
        let few: Vec<(f64, f64)> = (1..5).map(|k| (k as f64, 1.0)).collect();
        assert!(decay_exponent_fit(&few).is_err());
        let narrow: Vec<(f64, f64)> = (0..6).map(|k| (1.0 + 0.1 * k as f64, 1.0)).collect();
        assert!(decay_exponent_fit(&narrow).is_err());
    }

    fn box_system(cells: usize, spec: CoefficientSpec) -> SaddleSystem {
        let g = build_grid(3, cells, 1.0).unwrap();
        let m = Arc::new(build_domain(&g, &MaskSpec::Box).unwrap());
        let f = Arc::new(generate_coefficients(&g, &spec).unwrap());
        assemble_system(&f, &m, false).unwrap()
    }

    #[test]
    fn caccioppoli_degenerate_and_linear() {
        let s = box_system(12, CoefficientSpec::Identity);
        let zero = StokesField::zeros(&s);
        let c = [0.5, 0.5, 0.5];
        let r = caccioppoli_ratio(&s, &zero, &c, 0.3).unwrap();
        assert!(r.degenerate && r.ratio.is_none());
        // u = (x₂ − ½, 0, 0): divergence free, constant gradient
        let u = s.interpolate_velocity(|x, a| if a == 0 { x[1] - 0.5 } else { 0.0 });
        let sol = StokesField { u, p: vec![1.0; s.pressure_dofs()] };
        let got = caccioppoli_ratio(&s, &sol, &c, 0.3).unwrap().ratio.unwrap();
        let g = s.grid();
        let vol = g.cell_volume();
        let inner = g.cells_in_ball(&c, 0.15);
        let outer = g.cells_in_ball(&c, 0.3);
        let num = inner.len() as f64 * vol;
        let den: f64 = outer.iter().map(|&k| (g.cell_center(k)[1] - 0.5).powi(2) * vol).sum::<f64>() / 0.09;
        assert!((got - num / den).abs() <= 1e-12 * got);
        assert!(caccioppoli_ratio(&s, &sol, &[0.1, 0.5, 0.5], 0.3).is_err());
    }

    #[test]
    fn reverse_holder_constant_gradient_is_one() {
        let s = box_system(12, CoefficientSpec::Identity);
        let u = s.interpolate_velocity(|x, a| if a == 0 { x[1] - 0.5 } else { 0.0 });
        let sol = StokesField { u, p: vec![0.0; s.pressure_dofs()] };
        let r = reverse_holder_ratio(&s, &sol, &[0.5, 0.5, 0.5], 0.3, 2.5).unwrap();
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-13);
        assert!(reverse_holder_ratio(&s, &sol, &[0.5, 0.5, 0.5], 0.3, 2.0).is_err());
    }

    #[test]
    fn reverse_holder_matches_quadrature() {
        let s = box_system(8, CoefficientSpec::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..s.velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = StokesField { u: u.clone(), p: vec![0.0; s.pressure_dofs()] };
        let c = [0.5, 0.5, 0.5];
        let got = reverse_holder_ratio(&s, &sol, &c, 0.3, 3.0).unwrap().ratio.unwrap();
        // oracle: per-cell sample lists, averaged by hand
        let g = s.grid();
        let avg = |r: f64, q: f64| {
            let cells = g.cells_in_ball(&c, r);
            let mut vals = Vec::new();
            s.for_each_gradient_sample(&u, &cells, |_, _, smp| vals.push(smp.iter().map(|v| v * v).sum::<f64>().sqrt()));
            (vals.iter().map(|v| v.powf(q)).sum::<f64>() / vals.len() as f64).powf(1.0 / q)
        };
        let oracle = avg(0.15, 3.0) / avg(0.3, 2.0);
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn q2_sweep_matches_energy_ratio() {
        let s = box_system(8, CoefficientSpec::Smooth { amplitude: 0.2 });
        let mut rhs = RhsData::zeros(3, s.pressure_dofs());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        rhs.f.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        rhs.g.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        rhs.project_g();
        let o = SolveOptions::with_tol(1e-10);
        let (_, st) = solve_stokes(&s, &rhs, &o).unwrap();
        let sweep = lq_constant_sweep(&s, 2.0, &[rhs], &o).unwrap();
        assert!((sweep.sup - st.energy_ratio.unwrap()).abs() <= 1e-12 * sweep.sup);
    }

    #[test]
    fn a2_rejects_small_t() {
        let s = box_system(8, CoefficientSpec::Identity);
        assert!(a2_bound_probe(&s, 3.0, &[], &SolveOptions::default()).is_err());
        let zero = A2Trial { center: [0.5; 3], radius: 0.25, rhs: RhsData::zeros(3, s.pressure_dofs()) };
        // a lone degenerate trial leaves nothing to report
        assert!(a2_bound_probe(&s, 4.0, &[zero], &SolveOptions::default()).is_err());
    }

    #[test]
    fn a1_is_homogeneous_and_scale_free() {
        let s = box_system(12, CoefficientSpec::Identity);
        let mut rhs = RhsData::zeros(3, s.pressure_dofs());
        let y = s.layout().cell_dof(s.grid().locate(&[0.3, 0.3, 0.3])).unwrap();
        rhs.f[3 * y] = 1.0;
        let o = SolveOptions::with_tol(1e-11);
        let (sol, _) = solve_stokes(&s, &rhs, &o).unwrap();
        let trial = LocalTrial { center: [0.6, 0.6, 0.6], radius: 0.3, solution: &sol };
        let base = a1_constant_probe(&s, 0.5, &[trial], 3).unwrap().sup;
        let scaled = StokesField { u: sol.u.iter().map(|v| 7.0 * v).collect(), p: sol.p.clone() };
        let t7 = LocalTrial { solution: &scaled, ..trial };
        let got = a1_constant_probe(&s, 0.5, &[t7], 3).unwrap().sup;
        assert!((got - base).abs() <= 1e-12 * base);
        // halved coefficients double the solution
        let g = s.grid().clone();
        let m = s.mask().clone();
        let f = Arc::new(generate_coefficients(&g, &CoefficientSpec::Identity).unwrap().scaled(0.5));
        let s2 = assemble_system(&f, &m, false).unwrap();
        let (sol2, _) = solve_stokes(&s2, &rhs, &o).unwrap();
        let t2 = LocalTrial { solution: &sol2, ..trial };
        let got2 = a1_constant_probe(&s2, 0.5, &[t2], 3).unwrap().sup;
        assert!((got2 - base).abs() <= 1e-8 * base);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ratios_are_scale_invariant(seed in 0u64..1000) {
            let s = box_system(8, CoefficientSpec::Identity);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..s.velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..s.pressure_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = StokesField { u: u.clone(), p: p.clone() };
            let b = StokesField { u: u.iter().map(|v| 7.0 * v).collect(), p: p.iter().map(|v| 7.0 * v).collect() };
            let c = [0.5, 0.5, 0.5];
            let ca = caccioppoli_ratio(&s, &a, &c, 0.3).unwrap().ratio.unwrap();
            let cb = caccioppoli_ratio(&s, &b, &c, 0.3).unwrap().ratio.unwrap();
            prop_assert!((ca - cb).abs() <= 1e-12 * ca);
            let ra = reverse_holder_ratio(&s, &a, &c, 0.3, 2.5).unwrap().ratio.unwrap();
            let rb = reverse_holder_ratio(&s, &b, &c, 0.3, 2.5).unwrap().ratio.unwrap();
            prop_assert!((ra - rb).abs() <= 1e-12 * ra);
        }

        #[test]
        fn lq_grows_with_region(seed in 0u64..1000, q in 1.0f64..6.0) {
            let g = grid8();
            let f = CellField::scalar(&g, noise(g.num_cells(), seed)).unwrap();
            let big = some_region(&g, seed + 1);
            prop_assume!(big.len() > 2);
            let small: Vec<usize> = big.iter().copied().step_by(2).collect();
            prop_assert!(lq_norm(&f, q, &small).unwrap() <= lq_norm(&f, q, &big).unwrap() * (1.0 + 1e-14));
        }

        #[test]
        fn distribution_is_monotone(seed in 0u64..1000) {
            let g = grid8();
            let f = CellField::scalar(&g, noise(g.num_cells(), seed)).unwrap();
            let all: Vec<usize> = (0..g.num_cells()).collect();
            let th: Vec<f64> = (1..20).map(|k| 0.1 * k as f64).collect();
            let t = distribution_function(&f, &all, &th).unwrap();
            prop_assert!(t.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
