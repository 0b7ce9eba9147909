//! Binary field dumps with JSON sidecars.
//!
//! All binaries are little-endian and cell-major with axis 0 fastest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::SaddleSystem;
use crate::coefficients::CoefficientField;
use crate::domain::{DomainMask, MaskKind, MaskSpec};
use crate::error::{Error, Result};
use crate::green::GreenColumn;
use crate::solver::SolveStats;

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f64(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Serde(format!("{}: length not a multiple of 8", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub n: usize,
    pub cells_per_axis: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    pub kind: MaskKind,
    pub spec: MaskSpec,
    pub layout: String,
}

/// `uint8` per cell (1 = interior) plus metadata.
pub fn write_mask(mask: &DomainMask, path: &Path) -> Result<PathBuf> {
    let g = mask.grid();
    let bytes: Vec<u8> = mask.interior().iter().map(|&b| b as u8).collect();
    write_bytes(path, &bytes)?;
    let meta = MaskMeta {
        n: g.dim(),
        cells_per_axis: g.cells_per_axis().to_vec(),
        h: g.h(),
        origin: g.origin().to_vec(),
        kind: mask.kind(),
        spec: mask.spec().clone(),
        layout: "cell, axis 0 fastest".into(),
    };
    let side = sidecar(path);
    write_json(&side, &meta)?;
    Ok(side)
}

pub fn read_mask(path: &Path) -> Result<(MaskMeta, Vec<bool>)> {
    let meta: MaskMeta = read_json(&sidecar(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((meta, bytes.into_iter().map(|b| b != 0).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMeta {
    pub n: usize,
    pub cells_per_axis: Vec<usize>,
    pub layout: String,
    pub lambda_nominal: f64,
    pub seed: Option<u64>,
}

/// `f64` per cell per entry, entries ordered `(α, β, i, j)` with `j` fastest.
pub fn write_coefficients(field: &CoefficientField, path: &Path) -> Result<PathBuf> {
    let g = field.grid();
    let n = g.dim();
    let mut out = Vec::with_capacity(g.num_cells() * n.pow(4));
    for c in 0..g.num_cells() {
        for alpha in 0..n {
            for beta in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        out.push(field.entry(c, alpha, beta, i, j));
                    }
                }
            }
        }
    }
    write_bytes(path, &f64_bytes(&out))?;
    let meta = CoefficientMeta {
        n,
        cells_per_axis: g.cells_per_axis().to_vec(),
        layout: "alpha,beta,i,j".into(),
        lambda_nominal: field.lambda_nominal(),
        seed: field.seed(),
    };
    let side = sidecar(path);
    write_json(&side, &meta)?;
    Ok(side)
}

pub fn read_coefficients(path: &Path) -> Result<(CoefficientMeta, Vec<f64>)> {
    Ok((read_json(&sidecar(path))?, read_f64(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub n: usize,
    pub cells_per_axis: Vec<usize>,
    /// Number of faces per velocity component, then the pressure cells.
    pub segments: Vec<usize>,
    pub layout: String,
    pub pole: Option<usize>,
    pub component: Option<usize>,
    pub epsilon: Option<f64>,
    pub adjoint: Option<bool>,
    pub iterations: Option<usize>,
    pub final_relative_residual: Option<f64>,
    pub method: Option<String>,
}

/// Velocity on every face (zeros off the unknowns) followed by pressure on
/// every cell (zeros outside the domain).
pub fn expand_solution(sys: &SaddleSystem, u: &[f64], p: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let g = sys.grid();
    let n = g.dim();
    let lay = sys.layout();
    let mut segments = Vec::with_capacity(n + 1);
    let mut out = Vec::new();
    for a in 0..n {
        segments.push(g.num_faces(a));
        out.extend((0..g.num_faces(a)).map(|f| lay.face_dof(a, f).map_or(0.0, |d| u[d])));
    }
    segments.push(g.num_cells());
    out.extend((0..g.num_cells()).map(|c| lay.cell_dof(c).map_or(0.0, |k| p[k])));
    (segments, out)
}

pub fn write_solution(sys: &SaddleSystem, u: &[f64], p: &[f64], stats: Option<&SolveStats>, path: &Path) -> Result<PathBuf> {
    let (segments, data) = expand_solution(sys, u, p);
    write_bytes(path, &f64_bytes(&data))?;
    let g = sys.grid();
    let meta = FieldMeta {
        n: g.dim(),
        cells_per_axis: g.cells_per_axis().to_vec(),
        segments,
        layout: "velocity faces per axis, then pressure cells".into(),
        pole: None,
        component: None,
        epsilon: None,
        adjoint: Some(sys.is_adjoint()),
        iterations: stats.map(|s| s.iterations),
        final_relative_residual: stats.map(|s| s.final_relative_residual),
        method: stats.map(|s| s.method.clone()),
    };
    let side = sidecar(path);
    write_json(&side, &meta)?;
    Ok(side)
}

pub fn write_green_column(sys: &SaddleSystem, col: &GreenColumn, path: &Path) -> Result<PathBuf> {
    write_solution(sys, &col.velocity, &col.pressure, Some(&col.stats), path)?;
    let side = sidecar(path);
    let mut meta: FieldMeta = read_json(&side)?;
    meta.pole = Some(col.pole_cell);
    meta.component = Some(col.component);
    meta.epsilon = Some(col.epsilon);
    meta.adjoint = Some(col.adjoint);
    write_json(&side, &meta)?;
    Ok(side)
}

pub fn read_field(path: &Path) -> Result<(FieldMeta, Vec<f64>)> {
    Ok((read_json(&sidecar(path))?, read_f64(path)?))
}

/// `L` and `B` in 1-based coordinate format.
pub fn export_matrices(sys: &SaddleSystem, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let l = dir.join(format!("{stem}.L.coo"));
    let b = dir.join(format!("{stem}.B.coo"));
    for (path, m) in [(&l, sys.l_block()), (&b, sys.b_block())] {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        m.write_coo(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
    }
    Ok((l, b))
}
