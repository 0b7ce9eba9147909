//! Uniform staggered (MAC) grids.
//!
//! Cells are indexed with axis 0 varying fastest. Velocity component `a`
//! lives on the faces normal to axis `a`; a face is addressed by the integer
//! position `k ∈ 0..=cells[a]` along `a` plus the cell indices on the other
//! axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

pub type Index = [usize; MAX_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredGrid {
    n: usize,
    cells: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
}

/// Isotropic grid of `cells` per axis covering `[0, extent]^n`.
pub fn build_grid(n: usize, cells: usize, extent: f64) -> Result<StaggeredGrid> {
    StaggeredGrid::new(n, &vec![cells; n.clamp(1, MAX_DIM)], extent)
}

impl StaggeredGrid {
    /// `extent` is the physical length along axis 0; spacing is isotropic.
    pub fn new(n: usize, cells: &[usize], extent: f64) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {n}")));
        }
        if cells.len() != n {
            return Err(Error::Grid(format!(
                "expected {n} per-axis cell counts, got {}",
                cells.len()
            )));
        }
        if let Some(c) = cells.iter().find(|&&c| c < 4) {
            return Err(Error::Grid(format!("at least 4 cells per axis required, got {c}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Grid(format!("extent must be positive, got {extent}")));
        }
        Ok(Self {
            n,
            cells: cells.to_vec(),
            h: extent / cells[0] as f64,
            origin: vec![0.0; n],
        })
    }

    pub fn with_origin(mut self, origin: &[f64]) -> Result<Self> {
        if origin.len() != self.n {
            return Err(Error::Grid("origin length must equal dimension".into()));
        }
        self.origin = origin.to_vec();
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Physical length along `axis`.
    pub fn length(&self, axis: usize) -> f64 {
        self.cells[axis] as f64 * self.h
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    #[inline]
    pub fn cell_index(&self, idx: &Index) -> usize {
        let mut lin = 0;
        for a in (0..self.n).rev() {
            lin = lin * self.cells[a] + idx[a];
        }
        lin
    }

    #[inline]
    pub fn cell_coords(&self, mut lin: usize) -> Index {
        let mut idx = [0; MAX_DIM];
        for a in 0..self.n {
            idx[a] = lin % self.cells[a];
            lin /= self.cells[a];
        }
        idx
    }

    /// Neighbor of `cell` shifted by `delta` along `axis`, if inside the box.
    #[inline]
    pub fn neighbor(&self, cell: usize, axis: usize, delta: isize) -> Option<usize> {
        let mut idx = self.cell_coords(cell);
        let k = idx[axis] as isize + delta;
        if k < 0 || k >= self.cells[axis] as isize {
            return None;
        }
        idx[axis] = k as usize;
        Some(self.cell_index(&idx))
    }

    pub fn cell_center(&self, cell: usize) -> [f64; MAX_DIM] {
        let idx = self.cell_coords(cell);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.n {
            x[a] = self.origin[a] + (idx[a] as f64 + 0.5) * self.h;
        }
        x
    }

    /// Number of faces normal to `axis`.
    pub fn num_faces(&self, axis: usize) -> usize {
        (0..self.n)
            .map(|a| if a == axis { self.cells[a] + 1 } else { self.cells[a] })
            .product()
    }

    #[inline]
    pub fn face_index(&self, axis: usize, idx: &Index) -> usize {
        let mut lin = 0;
        for a in (0..self.n).rev() {
            let extent = if a == axis { self.cells[a] + 1 } else { self.cells[a] };
            lin = lin * extent + idx[a];
        }
        lin
    }

    #[inline]
    pub fn face_coords(&self, axis: usize, mut lin: usize) -> Index {
        let mut idx = [0; MAX_DIM];
        for a in 0..self.n {
            let extent = if a == axis { self.cells[a] + 1 } else { self.cells[a] };
            idx[a] = lin % extent;
            lin /= extent;
        }
        idx
    }

    pub fn face_center(&self, axis: usize, face: usize) -> [f64; MAX_DIM] {
        let idx = self.face_coords(axis, face);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.n {
            let off = if a == axis { 0.0 } else { 0.5 };
            x[a] = self.origin[a] + (idx[a] as f64 + off) * self.h;
        }
        x
    }

    /// Cells on the low and high side of a face (either may lie outside the box).
    pub fn face_cells(&self, axis: usize, face: usize) -> (Option<usize>, Option<usize>) {
        let idx = self.face_coords(axis, face);
        let k = idx[axis];
        let mut lo = idx;
        let low = if k >= 1 {
            lo[axis] = k - 1;
            Some(self.cell_index(&lo))
        } else {
            None
        };
        let high = if k < self.cells[axis] {
            Some(self.cell_index(&idx))
        } else {
            None
        };
        (low, high)
    }

    /// Face of `cell` normal to `axis` on the low (`high == false`) or high side.
    #[inline]
    pub fn cell_face(&self, cell: usize, axis: usize, high: bool) -> usize {
        let mut idx = self.cell_coords(cell);
        if high {
            idx[axis] += 1;
        }
        self.face_index(axis, &idx)
    }

    pub fn distance(&self, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
        (0..self.n).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Cell containing the physical point, clamped into the box.
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut idx = [0; MAX_DIM];
        for a in 0..self.n {
            let k = ((x[a] - self.origin[a]) / self.h).floor();
            idx[a] = (k.max(0.0) as usize).min(self.cells[a] - 1);
        }
        self.cell_index(&idx)
    }

    /// Cells whose centers lie within `radius` of `center` (inclusive).
    pub fn cells_in_ball(&self, center: &[f64; MAX_DIM], radius: f64) -> Vec<usize> {
        let mut lo = [0isize; MAX_DIM];
        let mut hi = [0isize; MAX_DIM];
        for a in 0..self.n {
            let l = ((center[a] - radius - self.origin[a]) / self.h - 0.5).ceil() as isize;
            let u = ((center[a] + radius - self.origin[a]) / self.h - 0.5).floor() as isize;
            lo[a] = l.max(0);
            hi[a] = u.min(self.cells[a] as isize - 1);
            if lo[a] > hi[a] {
                return Vec::new();
            }
        }
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = self.cell_index(&[i as usize, j as usize, k as usize]);
                    let x = self.cell_center(c);
                    let d2: f64 = (0..self.n).map(|a| (x[a] - center[a]).powi(2)).sum();
                    if d2 <= r2 {
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_d_spacing_and_count() {
        let g = build_grid(3, 8, 1.0).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_eq!(g.num_cells(), 512);
    }

    #[test]
    fn two_d_spacing_and_count() {
        let g = build_grid(2, 16, 2.0).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_eq!(g.num_cells(), 256);
    }

    #[test]
    fn rejects_coarse_and_bad_dims() {
        assert!(build_grid(3, 3, 1.0).is_err());
        assert!(build_grid(4, 8, 1.0).is_err());
        assert!(build_grid(1, 8, 1.0).is_err());
        assert!(build_grid(3, 8, 0.0).is_err());
        assert!(build_grid(3, 8, -1.0).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = StaggeredGrid::new(3, &[4, 5, 6], 1.0).unwrap();
        for c in 0..g.num_cells() {
            assert_eq!(g.cell_index(&g.cell_coords(c)), c);
        }
        for a in 0..3 {
            for f in 0..g.num_faces(a) {
                assert_eq!(g.face_index(a, &g.face_coords(a, f)), f);
            }
        }
    }

    #[test]
    fn cell_centers_offset_by_half_spacing() {
        let g = build_grid(2, 4, 1.0).unwrap().with_origin(&[1.0, -1.0]).unwrap();
        let x = g.cell_center(g.cell_index(&[2, 1, 0]));
        assert!((x[0] - 1.625).abs() < 1e-15);
        assert!((x[1] + 0.625).abs() < 1e-15);
    }

    #[test]
    fn ball_matches_scan() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let center = [0.31, 0.5, 0.77];
        let r = 0.27;
        let ball = g.cells_in_ball(&center, r);
        let scan: Vec<usize> = (0..g.num_cells())
            .filter(|&c| g.distance(&g.cell_center(c), &center) <= r)
            .collect();
        assert_eq!(ball, scan);
    }
}
