//! Seeded trial data: smooth random right-hand sides defined in the
//! continuum (so refinements see the same data) and admissible balls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assembly::{RhsData, SaddleSystem};
use crate::domain::{DomainMask, MaskSpec};
use crate::error::{Error, Result};
use crate::grid::MAX_DIM;

/// Gaussian coefficients are clamped to this many standard deviations.
const CLAMP: f64 = 2.5;

/// `Σ_m a_m Π_d b(m_d π (x_d − o_d) / L_d) / |m|²` with `b = sin` or `cos`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    origin: [f64; MAX_DIM],
    lengths: [f64; MAX_DIM],
    cosine: bool,
    modes: Vec<([u32; MAX_DIM], f64)>,
}

impl FourierField {
    pub fn random(rng: &mut impl Rng, n: usize, origin: &[f64], lengths: &[f64], max_mode: u32, cosine: bool) -> Self {
        let lo = if cosine { 0 } else { 1 };
        let mut modes = Vec::new();
        let range = |d: usize| if d < n { lo..=max_mode } else { 0..=0 };
        for m2 in range(2) {
            for m1 in range(1) {
                for m0 in range(0) {
                    let m = [m0, m1, m2];
                    if cosine && m.iter().all(|&k| k == 0) {
                        continue;
                    }
                    let norm2: f64 = m.iter().map(|&k| (k * k) as f64).sum();
                    let z: f64 = rng.sample::<f64, _>(StandardNormal).clamp(-CLAMP, CLAMP);
                    modes.push((m, z / norm2));
                }
            }
        }
        let mut o = [0.0; MAX_DIM];
        let mut l = [1.0; MAX_DIM];
        o[..n].copy_from_slice(&origin[..n]);
        l[..n].copy_from_slice(&lengths[..n]);
        Self {
            origin: o,
            lengths: l,
            cosine,
            modes,
        }
    }

    pub fn eval(&self, x: &[f64; MAX_DIM]) -> f64 {
        let pi = std::f64::consts::PI;
        self.modes
            .iter()
            .map(|(m, a)| {
                let mut v = *a;
                for d in 0..MAX_DIM {
                    let arg = m[d] as f64 * pi * (x[d] - self.origin[d]) / self.lengths[d];
                    v *= if self.cosine { arg.cos() } else if m[d] == 0 { 1.0 } else { arg.sin() };
                }
                v
            })
            .sum()
    }
}

/// Which parts of the data are populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhsParts {
    pub f: bool,
    pub f_alpha: bool,
    pub g: bool,
}

impl Default for RhsParts {
    fn default() -> Self {
        Self {
            f: true,
            f_alpha: true,
            g: true,
        }
    }
}

/// Smooth random data sampled at cell centers; `g` is projected to mean zero.
pub fn random_rhs(sys: &SaddleSystem, seed: u64, parts: RhsParts, max_mode: u32) -> RhsData {
    let g = sys.grid();
    let n = g.dim();
    let lengths: Vec<f64> = (0..n).map(|a| g.length(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // every field is drawn whether used or not, so parts do not shift the stream
    let f_fields: Vec<FourierField> = (0..n).map(|_| FourierField::random(&mut rng, n, g.origin(), &lengths, max_mode, false)).collect();
    let fa_fields: Vec<FourierField> = (0..n * n).map(|_| FourierField::random(&mut rng, n, g.origin(), &lengths, max_mode, false)).collect();
    let g_field = FourierField::random(&mut rng, n, g.origin(), &lengths, max_mode, true);
    let cells = sys.layout().pressure_cells();
    let mut rhs = RhsData::zeros(n, cells.len());
    for (k, &c) in cells.iter().enumerate() {
        let x = g.cell_center(c);
        if parts.f {
            for i in 0..n {
                rhs.f[k * n + i] = f_fields[i].eval(&x);
            }
        }
        if parts.f_alpha {
            for e in 0..n * n {
                rhs.f_alpha[k * n * n + e] = fa_fields[e].eval(&x);
            }
        }
        if parts.g {
            rhs.g[k] = g_field.eval(&x);
        }
    }
    rhs.project_g();
    rhs
}

/// Smooth mean-zero cell field (pressure ordering).
pub fn smooth_divergence_data(sys: &SaddleSystem, seed: u64, max_mode: u32) -> Vec<f64> {
    random_rhs(sys, seed, RhsParts { f: false, f_alpha: false, g: true }, max_mode).g
}

/// Distance from a point to the domain boundary: exact for boxes, cell based
/// otherwise.
pub fn point_distance_to_boundary(mask: &DomainMask, x: &[f64; MAX_DIM]) -> Result<f64> {
    let g = mask.grid();
    let n = g.dim();
    let inside_box = (0..n).all(|a| x[a] >= g.origin()[a] && x[a] <= g.origin()[a] + g.length(a));
    if !inside_box {
        return Ok(0.0);
    }
    let box_dist = (0..n)
        .map(|a| (x[a] - g.origin()[a]).min(g.origin()[a] + g.length(a) - x[a]))
        .fold(f64::INFINITY, f64::min);
    match mask.spec() {
        MaskSpec::Box => Ok(box_dist),
        _ => {
            let c = g.locate(&x[..n]);
            if !mask.is_interior(c) {
                return Ok(0.0);
            }
            let d = mask.distance_to_boundary(c)? - 0.5 * g.h() * (n as f64).sqrt();
            Ok(d.max(0.0).min(box_dist))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; MAX_DIM],
    pub radius: f64,
}

/// Seeded balls with `d(center) ≥ radius`, disjoint from every `avoid` ball.
/// Centers and radii are drawn in physical coordinates, so the same seed
/// gives the same balls on every resolution of a box.
pub fn admissible_balls(
    mask: &DomainMask,
    seed: u64,
    count: usize,
    radius: (f64, f64),
    avoid: &[Ball],
) -> Result<Vec<Ball>> {
    let g = mask.grid();
    let n = g.dim();
    if !(radius.0 > 0.0 && radius.1 >= radius.0) {
        return Err(Error::Precondition(format!("invalid radius range {radius:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let max_attempts = 10_000 * count.max(1);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Precondition(format!(
                "found only {} of {count} admissible balls",
                out.len()
            )));
        }
        let mut c = [0.0; MAX_DIM];
        for a in 0..n {
            c[a] = g.origin()[a] + rng.gen::<f64>() * g.length(a);
        }
        let r = if radius.1 > radius.0 { rng.gen_range(radius.0..radius.1) } else { radius.0 };
        if point_distance_to_boundary(mask, &c)? < r {
            continue;
        }
        if avoid.iter().any(|b| g.distance(&c, &b.center) < r + b.radius) {
            continue;
        }
        let cells = g.cells_in_ball(&c, r);
        if cells.is_empty() || cells.iter().any(|&k| !mask.is_interior(k)) {
            continue;
        }
        out.push(Ball { center: c, radius: r });
    }
    Ok(out)
}
