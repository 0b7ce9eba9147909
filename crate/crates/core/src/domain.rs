//! Domain masks carved out of the bounding box of a [`StaggeredGrid`].

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StaggeredGrid, MAX_DIM};

/// How a mask was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Box,
    HalfSpaceGraph,
    StaircaseLipschitz,
    ReifenbergPerturbed,
}

/// Mask recipes. Graph-type masks keep the cells with `x_0 > φ(x')`, where
/// `x'` is the axis-1 coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSpec {
    Box,
    /// Cell-index box `lo <= idx < hi`.
    SubBox { lo: Vec<usize>, hi: Vec<usize> },
    /// `φ(x') = offset + lipschitz · |x' − mid|`; flat when `lipschitz == 0`.
    HalfSpace {
        offset: f64,
        #[serde(default)]
        lipschitz: f64,
    },
    /// `φ(x') = offset + amplitude · sin(2π x' / wavelength)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFace {
    /// The interior cell owning the face.
    pub cell: usize,
    pub axis: usize,
    /// Face on the high side of `cell` along `axis`.
    pub high: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Both adjacent cells interior: carries a velocity unknown.
    Interior,
    /// Exactly one adjacent cell interior: the normal velocity vanishes.
    Boundary,
    /// Outside the domain.
    Exterior,
}

/// Discrete flatness defect of the curved part of the boundary.
///
/// This is a heuristic surrogate for Reifenberg flatness: for every cell
/// touching the non-box part of the boundary and every dyadic radius, wall
/// face centroids in the ball are fitted with a total-least-squares plane and
/// the worst deviation is divided by the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub radii: Vec<f64>,
    /// Sup of deviation / R per radius.
    pub defect_per_radius: Vec<f64>,
    pub defect: f64,
    pub label: String,
}

/// Lower measure density `|Ω_R(x)| >= c R^n` over boundary cells and dyadic R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub radii: Vec<f64>,
    pub constant: f64,
}

#[derive(Debug, Clone)]
pub struct DomainMask {
    grid: StaggeredGrid,
    interior: Vec<bool>,
    interior_cells: Vec<usize>,
    boundary_faces: Vec<BoundaryFace>,
    /// Boundary faces grouped by owning cell (CSR-style offsets).
    faces_by_cell_ptr: Vec<usize>,
    faces_by_cell: Vec<usize>,
    kind: MaskKind,
    spec: MaskSpec,
    flatness: Option<FlatnessReport>,
    measure: OnceLock<Option<MeasureReport>>,
}

pub fn build_domain(grid: &StaggeredGrid, spec: &MaskSpec) -> Result<DomainMask> {
    DomainMask::new(grid.clone(), spec.clone())
}

impl DomainMask {
    pub fn new(grid: StaggeredGrid, spec: MaskSpec) -> Result<Self> {
        let n = grid.dim();
        let ncell = grid.num_cells();
        let len0 = grid.length(0);
        let origin0 = grid.origin()[0];
        let mid1 = grid.origin()[1] + 0.5 * grid.length(1);

        let (interior, kind): (Vec<bool>, MaskKind) = match &spec {
            MaskSpec::Box => (vec![true; ncell], MaskKind::Box),
            MaskSpec::SubBox { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(Error::Domain("sub_box bounds must have one entry per axis".into()));
                }
                for a in 0..n {
                    if lo[a] >= hi[a] || hi[a] > grid.cells_per_axis()[a] {
                        return Err(Error::Domain(format!("sub_box bounds invalid on axis {a}")));
                    }
                }
                let inside = (0..ncell)
                    .map(|c| {
                        let idx = grid.cell_coords(c);
                        (0..n).all(|a| idx[a] >= lo[a] && idx[a] < hi[a])
                    })
                    .collect();
                (inside, MaskKind::Box)
            }
            MaskSpec::HalfSpace { offset, lipschitz } => {
                if *lipschitz < 0.0 || !lipschitz.is_finite() {
                    return Err(Error::Domain("Lipschitz constant must be non-negative".into()));
                }
                let half = 0.5 * grid.length(1);
                let (lo, hi) = (*offset, offset + lipschitz * half);
                if lo <= 0.0 || hi >= len0 {
                    return Err(Error::Domain(format!(
                        "graph range [{lo}, {hi}] exceeds the box (0, {len0})"
                    )));
                }
                let phi = |xp: f64| offset + lipschitz * (xp - mid1).abs();
                let inside = (0..ncell)
                    .map(|c| {
                        let x = grid.cell_center(c);
                        x[0] - origin0 > phi(x[1])
                    })
                    .collect();
                let kind = if *lipschitz == 0.0 {
                    MaskKind::HalfSpaceGraph
                } else {
                    MaskKind::StaircaseLipschitz
                };
                (inside, kind)
            }
            MaskSpec::Sinusoid {
                offset,
                amplitude,
                wavelength,
            } => {
                if !(*wavelength > 0.0) {
                    return Err(Error::Domain("wavelength must be positive".into()));
                }
                let (lo, hi) = (offset - amplitude.abs(), offset + amplitude.abs());
                if lo <= 0.0 || hi >= len0 {
                    return Err(Error::Domain(format!(
                        "graph range [{lo}, {hi}] exceeds the box (0, {len0})"
                    )));
                }
                let y0 = grid.origin()[1];
                let phi = |xp: f64| {
                    offset + amplitude * (2.0 * std::f64::consts::PI * (xp - y0) / wavelength).sin()
                };
                let inside = (0..ncell)
                    .map(|c| {
                        let x = grid.cell_center(c);
                        x[0] - origin0 > phi(x[1])
                    })
                    .collect();
                (inside, MaskKind::ReifenbergPerturbed)
            }
        };

        let interior_cells: Vec<usize> = (0..ncell).filter(|&c| interior[c]).collect();
        if interior_cells.is_empty() {
            return Err(Error::Domain("empty interior".into()));
        }
        check_connected(&grid, &interior, &interior_cells)?;

        let mut boundary_faces = Vec::new();
        let mut faces_by_cell_ptr = vec![0usize; ncell + 1];
        for &c in &interior_cells {
            for a in 0..n {
                for (delta, high) in [(-1isize, false), (1, true)] {
                    let outside = match grid.neighbor(c, a, delta) {
                        Some(nb) => !interior[nb],
                        None => true,
                    };
                    if outside {
                        boundary_faces.push(BoundaryFace { cell: c, axis: a, high });
                        faces_by_cell_ptr[c + 1] += 1;
                    }
                }
            }
        }
        for c in 0..ncell {
            faces_by_cell_ptr[c + 1] += faces_by_cell_ptr[c];
        }
        // boundary faces were pushed in increasing cell order
        let faces_by_cell: Vec<usize> = (0..boundary_faces.len()).collect();

        let mut mask = Self {
            grid,
            interior,
            interior_cells,
            boundary_faces,
            faces_by_cell_ptr,
            faces_by_cell,
            kind,
            spec,
            flatness: None,
            measure: OnceLock::new(),
        };
        if kind != MaskKind::Box {
            mask.flatness = Some(mask.compute_flatness());
        }
        Ok(mask)
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn spec(&self) -> &MaskSpec {
        &self.spec
    }

    #[inline]
    pub fn is_interior(&self, cell: usize) -> bool {
        self.interior[cell]
    }

    pub fn interior(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_cells(&self) -> &[usize] {
        &self.interior_cells
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn flatness(&self) -> Option<&FlatnessReport> {
        self.flatness.as_ref()
    }

    /// Measure of the interior.
    pub fn volume(&self) -> f64 {
        self.interior_cells.len() as f64 * self.grid.cell_volume()
    }

    pub fn face_kind(&self, axis: usize, face: usize) -> FaceKind {
        let (lo, hi) = self.grid.face_cells(axis, face);
        let lo = lo.is_some_and(|c| self.interior[c]);
        let hi = hi.is_some_and(|c| self.interior[c]);
        match (lo, hi) {
            (true, true) => FaceKind::Interior,
            (false, false) => FaceKind::Exterior,
            _ => FaceKind::Boundary,
        }
    }

    pub fn boundary_face_centroid(&self, f: &BoundaryFace) -> [f64; MAX_DIM] {
        let face = self.grid.cell_face(f.cell, f.axis, f.high);
        self.grid.face_center(f.axis, face)
    }

    /// Interior cells owning at least one boundary face.
    pub fn boundary_cells(&self) -> Vec<usize> {
        self.interior_cells
            .iter()
            .copied()
            .filter(|&c| self.faces_by_cell_ptr[c + 1] > self.faces_by_cell_ptr[c])
            .collect()
    }

    /// Euclidean distance from the cell center to the nearest boundary-face centroid.
    pub fn distance_to_boundary(&self, cell: usize) -> Result<f64> {
        if cell >= self.grid.num_cells() || !self.interior[cell] {
            return Err(Error::Domain(format!("cell {cell} is not interior")));
        }
        let g = &self.grid;
        let n = g.dim();
        let h = g.h();
        let x = g.cell_center(cell);
        let home = g.cell_coords(cell);
        let max_ring = *g.cells_per_axis().iter().max().unwrap();
        let mut best = f64::INFINITY;
        // Faces owned by a cell at Chebyshev ring m are at least (m - 1/2) h away.
        for m in 0..=max_ring {
            if best <= (m as f64 - 0.5) * h {
                break;
            }
            self.for_each_ring_cell(&home, m, |c| {
                for &fi in &self.faces_by_cell[self.faces_by_cell_ptr[c]..self.faces_by_cell_ptr[c + 1]] {
                    let y = self.boundary_face_centroid(&self.boundary_faces[fi]);
                    let d: f64 = (0..n).map(|a| (x[a] - y[a]).powi(2)).sum::<f64>().sqrt();
                    if d < best {
                        best = d;
                    }
                }
            });
        }
        Ok(best)
    }

    fn for_each_ring_cell(&self, home: &[usize; MAX_DIM], m: usize, mut f: impl FnMut(usize)) {
        let g = &self.grid;
        let n = g.dim();
        let m = m as isize;
        let mut lo = [0isize; MAX_DIM];
        let mut hi = [0isize; MAX_DIM];
        for a in 0..n {
            lo[a] = (home[a] as isize - m).max(0);
            hi[a] = (home[a] as isize + m).min(g.cells_per_axis()[a] as isize - 1);
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let idx = [i, j, k];
                    let cheb = (0..n)
                        .map(|a| (idx[a] - home[a] as isize).abs())
                        .max()
                        .unwrap();
                    if cheb == m {
                        f(g.cell_index(&[i as usize, j as usize, k as usize]));
                    }
                }
            }
        }
    }

    /// Dyadic radii `4h, 8h, ...` up to `R_0 = extent / 4` (at least one radius).
    pub fn dyadic_radii(&self) -> Vec<f64> {
        let h = self.grid.h();
        let r0 = self.grid.length(0) / 4.0;
        let mut radii = Vec::new();
        let mut r = 4.0 * h;
        while r <= r0 * (1.0 + 1e-12) {
            radii.push(r);
            r *= 2.0;
        }
        if radii.is_empty() {
            radii.push(4.0 * h);
        }
        radii
    }

    /// Measure-density constant over boundary cells and dyadic radii; `None`
    /// when no boundary cell exists.
    pub fn measure_report(&self) -> Option<&MeasureReport> {
        self.measure
            .get_or_init(|| {
                let radii = self.dyadic_radii();
                let cells = self.boundary_cells();
                if cells.is_empty() {
                    return None;
                }
                let vol = self.grid.cell_volume();
                let n = self.grid.dim() as i32;
                let mut c_min = f64::INFINITY;
                for &c in &cells {
                    let x = self.grid.cell_center(c);
                    for &r in &radii {
                        let count = self
                            .grid
                            .cells_in_ball(&x, r)
                            .into_iter()
                            .filter(|&b| self.interior[b])
                            .count();
                        c_min = c_min.min(count as f64 * vol / r.powi(n));
                    }
                }
                Some(MeasureReport {
                    radii,
                    constant: c_min,
                })
            })
            .as_ref()
    }

    fn on_box_wall(&self, f: &BoundaryFace) -> bool {
        let g = &self.grid;
        let idx = g.cell_coords(f.cell);
        if f.high {
            idx[f.axis] + 1 == g.cells_per_axis()[f.axis]
        } else {
            idx[f.axis] == 0
        }
    }

    fn compute_flatness(&self) -> FlatnessReport {
        let n = self.grid.dim();
        let walls: Vec<[f64; MAX_DIM]> = self
            .boundary_faces
            .iter()
            .filter(|f| !self.on_box_wall(f))
            .map(|f| self.boundary_face_centroid(f))
            .collect();
        let mut owners: Vec<usize> = self
            .boundary_faces
            .iter()
            .filter(|f| !self.on_box_wall(f))
            .map(|f| f.cell)
            .collect();
        owners.dedup();
        let radii = self.dyadic_radii();
        let mut per_radius = vec![0.0f64; radii.len()];
        for &c in &owners {
            let x = self.grid.cell_center(c);
            for (ri, &r) in radii.iter().enumerate() {
                let pts: Vec<[f64; MAX_DIM]> = walls
                    .iter()
                    .filter(|p| self.grid.distance(p, &x) <= r)
                    .copied()
                    .collect();
                if pts.len() < n {
                    continue;
                }
                let dev = plane_fit_deviation(&pts, n);
                per_radius[ri] = per_radius[ri].max(dev / r);
            }
        }
        let defect = per_radius.iter().copied().fold(0.0, f64::max);
        FlatnessReport {
            radii,
            defect_per_radius: per_radius,
            defect,
            label: "heuristic discrete flatness surrogate".into(),
        }
    }
}

/// Max distance of the points to their total-least-squares plane.
pub fn plane_fit_deviation(points: &[[f64; MAX_DIM]], n: usize) -> f64 {
    let m = points.len() as f64;
    let mut mean = [0.0; MAX_DIM];
    for p in points {
        for a in 0..n {
            mean[a] += p[a] / m;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        for a in 0..n {
            for b in 0..n {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    if n == 2 {
        // keep the unused axis out of the minimum
        cov[(2, 2)] = f64::MAX;
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let normal = eig.eigenvectors.column(imin);
    points
        .iter()
        .map(|p| (0..n).map(|a| (p[a] - mean[a]) * normal[a]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

fn check_connected(grid: &StaggeredGrid, interior: &[bool], cells: &[usize]) -> Result<()> {
    let mut seen = vec![false; interior.len()];
    let mut queue = VecDeque::from([cells[0]]);
    seen[cells[0]] = true;
    let mut count = 1;
    while let Some(c) = queue.pop_front() {
        for a in 0..grid.dim() {
            for d in [-1isize, 1] {
                if let Some(nb) = grid.neighbor(c, a, d) {
                    if interior[nb] && !seen[nb] {
                        seen[nb] = true;
                        count += 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    if count != cells.len() {
        return Err(Error::Domain(format!(
            "interior is disconnected: component of {count} cells out of {}",
            cells.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn brute_distance(mask: &DomainMask, cell: usize) -> f64 {
        let x = mask.grid().cell_center(cell);
        mask.boundary_faces()
            .iter()
            .map(|f| mask.grid().distance(&x, &mask.boundary_face_centroid(f)))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn full_box_counts() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let m = build_domain(&g, &MaskSpec::Box).unwrap();
        assert_eq!(m.interior_cells().len(), 512);
        assert_eq!(m.boundary_faces().len(), 6 * 64);
        assert_eq!(m.volume(), 1.0);
    }

    #[test]
    fn boundary_faces_unique() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let m = build_domain(
            &g,
            &MaskSpec::Sinusoid {
                offset: 0.5,
                amplitude: 0.2,
                wavelength: 0.5,
            },
        )
        .unwrap();
        let mut keys: Vec<(usize, usize)> = m
            .boundary_faces()
            .iter()
            .map(|f| (f.axis, g.cell_face(f.cell, f.axis, f.high)))
            .collect();
        let total = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), total);
        // every interior/exterior interface is listed
        let mut expected = 0;
        for a in 0..3 {
            for f in 0..g.num_faces(a) {
                if m.face_kind(a, f) == FaceKind::Boundary {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, total);
    }

    #[test]
    fn half_space_is_half_box() {
        let g = build_grid(3, 16, 1.0).unwrap();
        let m = build_domain(
            &g,
            &MaskSpec::HalfSpace {
                offset: 0.5,
                lipschitz: 0.0,
            },
        )
        .unwrap();
        assert_eq!(m.interior_cells().len(), 16 * 16 * 8);
        assert_eq!(m.kind(), MaskKind::HalfSpaceGraph);
        assert!(m.flatness().unwrap().defect < 1e-12);
    }

    #[test]
    fn graph_exceeding_box_rejected() {
        let g = build_grid(3, 8, 1.0).unwrap();
        assert!(build_domain(
            &g,
            &MaskSpec::HalfSpace {
                offset: 0.9,
                lipschitz: 1.0
            }
        )
        .is_err());
        assert!(build_domain(
            &g,
            &MaskSpec::Sinusoid {
                offset: 0.1,
                amplitude: 0.2,
                wavelength: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn disconnected_and_empty_rejected() {
        let g = build_grid(2, 8, 1.0).unwrap();
        // a thin wedge that pinches off nothing is fine, a sub box is connected
        assert!(build_domain(&g, &MaskSpec::SubBox { lo: vec![0, 0], hi: vec![1, 8] }).is_ok());
        let err = DomainMask::new(g.clone(), MaskSpec::SubBox { lo: vec![3, 3], hi: vec![3, 5] });
        assert!(err.is_err());
    }

    #[test]
    fn distances_center_and_adjacent() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let m = build_domain(&g, &MaskSpec::Box).unwrap();
        let center = g.cell_index(&[3, 3, 3]);
        assert!((m.distance_to_boundary(center).unwrap() - 0.4375).abs() < 1e-15);
        let edge = g.cell_index(&[0, 3, 4]);
        assert!((m.distance_to_boundary(edge).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_brute_force_on_all_cells() {
        let g = build_grid(3, 8, 1.0).unwrap();
        for spec in [
            MaskSpec::Box,
            MaskSpec::HalfSpace { offset: 0.3, lipschitz: 0.8 },
            MaskSpec::Sinusoid { offset: 0.5, amplitude: 0.2, wavelength: 0.5 },
        ] {
            let m = build_domain(&g, &spec).unwrap();
            for &c in m.interior_cells() {
                assert_eq!(m.distance_to_boundary(c).unwrap(), brute_distance(&m, c));
            }
        }
    }

    #[test]
    fn distance_of_exterior_cell_is_error() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let m = build_domain(&g, &MaskSpec::HalfSpace { offset: 0.5, lipschitz: 0.0 }).unwrap();
        assert!(m.distance_to_boundary(0).is_err());
    }

    #[test]
    fn measure_constant_bounds_direct_counts() {
        let g = build_grid(3, 16, 1.0).unwrap();
        let m = build_domain(&g, &MaskSpec::Sinusoid { offset: 0.5, amplitude: 0.2, wavelength: 0.5 }).unwrap();
        let rep = m.measure_report().unwrap().clone();
        assert!(rep.constant > 0.0);
        let vol = g.cell_volume();
        for c in m.boundary_cells() {
            for &r in &rep.radii {
                let x = g.cell_center(c);
                let count = (0..g.num_cells())
                    .filter(|&b| m.is_interior(b) && g.distance(&g.cell_center(b), &x) <= r)
                    .count();
                assert!(count as f64 * vol >= rep.constant * r.powi(3) * (1.0 - 1e-12));
            }
        }
    }

    /// Brute-force TLS: coarse scan of unit normals for the least sum of
    /// squared distances, refined by local pattern search, then the max
    /// deviation from that plane.
    fn scan_plane_deviation(points: &[[f64; 3]]) -> f64 {
        let m = points.len() as f64;
        let mut mean = [0.0; 3];
        for p in points {
            for a in 0..3 {
                mean[a] += p[a] / m;
            }
        }
        let normal = |t: f64, ph: f64| [t.sin() * ph.cos(), t.sin() * ph.sin(), t.cos()];
        let cost = |t: f64, ph: f64| {
            let nrm = normal(t, ph);
            points
                .iter()
                .map(|p| (0..3).map(|a| (p[a] - mean[a]) * nrm[a]).sum::<f64>().powi(2))
                .sum::<f64>()
        };
        let steps = 60;
        let pi = std::f64::consts::PI;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for it in 0..=steps {
            for ip in 0..(2 * steps) {
                let (t, ph) = (pi * it as f64 / steps as f64, pi * ip as f64 / steps as f64);
                let c = cost(t, ph);
                if c < best.0 {
                    best = (c, t, ph);
                }
            }
        }
        let mut step = pi / steps as f64;
        for _ in 0..60 {
            let mut improved = best;
            for dt in [-1.0, 0.0, 1.0] {
                for dp in [-1.0, 0.0, 1.0] {
                    let (t, ph) = (best.1 + dt * step, best.2 + dp * step);
                    let c = cost(t, ph);
                    if c < improved.0 {
                        improved = (c, t, ph);
                    }
                }
            }
            if improved.0 < best.0 {
                best = improved;
            } else {
                step *= 0.5;
            }
        }
        let nrm = normal(best.1, best.2);
        points
            .iter()
            .map(|p| (0..3).map(|a| (p[a] - mean[a]) * nrm[a]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sinusoid_flatness_matches_scan() {
        let g = build_grid(3, 16, 1.0).unwrap();
        let m = build_domain(&g, &MaskSpec::Sinusoid { offset: 0.5, amplitude: 0.2, wavelength: 1.0 }).unwrap();
        let rep = m.flatness().unwrap();
        assert_eq!(rep.radii, vec![0.25]);
        let walls: Vec<[f64; 3]> = m
            .boundary_faces()
            .iter()
            .filter(|f| !m.on_box_wall(f))
            .map(|f| m.boundary_face_centroid(f))
            .collect();
        let mut owners: Vec<usize> = m
            .boundary_faces()
            .iter()
            .filter(|f| !m.on_box_wall(f))
            .map(|f| f.cell)
            .collect();
        owners.sort();
        owners.dedup();
        let mut sup: f64 = 0.0;
        for c in &owners {
            let x = g.cell_center(*c);
            let pts: Vec<[f64; 3]> = walls.iter().filter(|p| g.distance(p, &x) <= 0.25).copied().collect();
            if pts.len() >= 3 {
                sup = sup.max(scan_plane_deviation(&pts) / 0.25);
            }
        }
        assert!(rep.defect > 0.05, "defect {}", rep.defect);
        assert!((sup - rep.defect).abs() <= 1e-6 * rep.defect, "scan {sup} vs {}", rep.defect);
    }
}
