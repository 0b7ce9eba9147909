//! Experiment configuration: TOML (or JSON) files mapped onto typed blocks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientSpec;
use crate::domain::MaskSpec;
use crate::error::{Error, Result};
use crate::sampling::RhsParts;
use crate::solver::{SolveMethod, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    GreenDecay,
    Symmetry,
    Representation,
    Caccioppoli,
    ReverseHolder,
    Bogovskii,
    Infsup,
    VmoModulus,
    A1Probe,
    A2Probe,
    LqSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        Self::Solve,
        Self::GreenDecay,
        Self::Symmetry,
        Self::Representation,
        Self::Caccioppoli,
        Self::ReverseHolder,
        Self::Bogovskii,
        Self::Infsup,
        Self::VmoModulus,
        Self::A1Probe,
        Self::A2Probe,
        Self::LqSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::GreenDecay => "green-decay",
            Self::Symmetry => "symmetry",
            Self::Representation => "representation",
            Self::Caccioppoli => "caccioppoli",
            Self::ReverseHolder => "reverse-holder",
            Self::Bogovskii => "bogovskii",
            Self::Infsup => "infsup",
            Self::VmoModulus => "vmo-modulus",
            Self::A1Probe => "a1-probe",
            Self::A2Probe => "a2-probe",
            Self::LqSweep => "lq-sweep",
        }
    }

    /// Operator-only experiments work on the Laplacian and need no coefficients.
    pub fn needs_coefficients(self) -> bool {
        !matches!(self, Self::Bogovskii | Self::Infsup)
    }

    pub fn uses_green(self) -> bool {
        matches!(
            self,
            Self::GreenDecay | Self::Symmetry | Self::Representation | Self::Caccioppoli | Self::ReverseHolder | Self::A1Probe
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown experiment '{s}'")]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub n: usize,
    pub cells: usize,
    #[serde(default = "default_extent")]
    pub extent: f64,
}

fn default_dim() -> usize {
    3
}

fn default_extent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self { tol: o.tol, max_iter: o.max_iter, restart: o.restart, method: o.method }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter, restart: self.restart, method: self.method }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenConfig {
    /// Physical pole location; defaults to the domain's bounding-box center.
    pub pole: Option<Vec<f64>>,
    /// Mollifier radius; overrides `epsilon_h` when present.
    pub epsilon: Option<f64>,
    /// Mollifier radius in units of `h`.
    pub epsilon_h: f64,
    /// Source components; all of them by default.
    pub components: Option<Vec<usize>>,
    /// Inner shell radius in units of `h`.
    pub r_min_h: f64,
    /// Outer shell radius as a fraction of `d_y`.
    pub r_max_fraction: f64,
    /// Asserted window for the fitted decay exponent.
    pub expect_exponent: Option<[f64; 2]>,
    /// LRU bound of the column cache.
    pub cache_capacity: usize,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            pole: None,
            epsilon: None,
            epsilon_h: 2.0,
            components: None,
            r_min_h: 4.0,
            r_max_fraction: 0.5,
            expect_exponent: None,
            cache_capacity: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub trials: usize,
    pub balls: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub q: Vec<f64>,
    pub q0: f64,
    pub mu: Vec<f64>,
    pub t_exp: f64,
    /// Radii for the oscillation modulus; dyadic radii of the mask when empty.
    pub rho: Vec<f64>,
    /// Asserted bound for duality defects.
    pub tolerance: f64,
    /// Highest Fourier mode of random data.
    pub modes: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            balls: 30,
            radius_min: 0.15,
            radius_max: 0.25,
            q: vec![2.0, 3.0, 4.0],
            q0: 2.5,
            mu: vec![0.25, 0.5],
            t_exp: 4.0,
            rho: Vec::new(),
            tolerance: 1e-6,
            modes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    Zero,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhsConfig {
    pub kind: RhsKind,
    pub modes: u32,
    pub f: bool,
    pub f_alpha: bool,
    pub g: bool,
}

impl Default for RhsConfig {
    fn default() -> Self {
        Self { kind: RhsKind::Random, modes: 3, f: true, f_alpha: true, g: true }
    }
}

impl RhsConfig {
    pub fn parts(&self) -> RhsParts {
        RhsParts { f: self.f, f_alpha: self.f_alpha, g: self.g }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be omitted when the experiment is given on the command line.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    pub domain: Option<MaskSpec>,
    pub coefficients: Option<CoefficientSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub green: GreenConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub rhs: RhsConfig,
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid JSON config: {e}")]))
        } else {
            toml::from_str(text).map_err(|e| Error::Config(vec![format!("invalid TOML config: {}", e.message().trim())]))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment
            .ok_or_else(|| Error::Config(vec!["missing field 'experiment'".into()]))
    }

    /// Every violated field, or `Ok` when the config can run.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let kind = match self.experiment {
            Some(k) => Some(k),
            None => {
                errs.push("missing field 'experiment'".to_string());
                None
            }
        };
        match &self.grid {
            None => errs.push("missing [grid] block".into()),
            Some(g) => {
                if !(g.n == 2 || g.n == 3) {
                    errs.push(format!("grid.n must be 2 or 3, got {}", g.n));
                }
                if g.cells < 2 {
                    errs.push(format!("grid.cells must be at least 2, got {}", g.cells));
                }
                if !(g.extent > 0.0 && g.extent.is_finite()) {
                    errs.push(format!("grid.extent must be positive, got {}", g.extent));
                }
            }
        }
        if self.domain.is_none() {
            errs.push("missing [domain] block".into());
        }
        if let Some(k) = kind {
            if k.needs_coefficients() && self.coefficients.is_none() {
                errs.push(format!("missing [coefficients] block (required by experiment '{k}')"));
            }
        }
        let s = &self.solver;
        if !(1e-14..=1e-4).contains(&s.tol) {
            errs.push(format!("solver.tol must lie in [1e-14, 1e-4], got {}", s.tol));
        }
        if s.max_iter == 0 {
            errs.push("solver.max_iter must be positive".into());
        }
        if s.restart == 0 {
            errs.push("solver.restart must be positive".into());
        }
        let g = &self.green;
        if let Some(e) = g.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                errs.push(format!("green.epsilon must be positive, got {e}"));
            }
        }
        if !(g.epsilon_h >= 1.0) {
            errs.push(format!("green.epsilon_h must be at least 1, got {}", g.epsilon_h));
        }
        if let (Some(p), Some(gr)) = (&g.pole, &self.grid) {
            if p.len() != gr.n {
                errs.push(format!("green.pole must have {} coordinates, got {}", gr.n, p.len()));
            }
        }
        if let (Some(c), Some(gr)) = (&g.components, &self.grid) {
            if c.is_empty() || c.iter().any(|&k| k >= gr.n) {
                errs.push(format!("green.components must be nonempty and below {}", gr.n));
            }
        }
        if !(g.r_min_h > 0.0) {
            errs.push("green.r_min_h must be positive".into());
        }
        if !(g.r_max_fraction > 0.0 && g.r_max_fraction <= 1.0) {
            errs.push("green.r_max_fraction must lie in (0, 1]".into());
        }
        if let Some([lo, hi]) = g.expect_exponent {
            if !(lo < hi) {
                errs.push("green.expect_exponent must be an increasing pair".into());
            }
        }
        if g.cache_capacity == 0 {
            errs.push("green.cache_capacity must be positive".into());
        }
        let w = &self.sweep;
        if w.trials == 0 {
            errs.push("sweep.trials must be positive".into());
        }
        if w.balls == 0 {
            errs.push("sweep.balls must be positive".into());
        }
        if !(w.radius_min > 0.0 && w.radius_max >= w.radius_min) {
            errs.push(format!("sweep radii must satisfy 0 < radius_min <= radius_max, got {} and {}", w.radius_min, w.radius_max));
        }
        if w.q.is_empty() || w.q.iter().any(|&q| !(q > 1.0 && q.is_finite())) {
            errs.push("sweep.q must be a nonempty list of finite exponents > 1".into());
        }
        if !(w.q0 > 2.0 && w.q0.is_finite()) {
            errs.push(format!("sweep.q0 must exceed 2, got {}", w.q0));
        }
        if w.mu.is_empty() || w.mu.iter().any(|&m| !(m > 0.0 && m <= 1.0)) {
            errs.push("sweep.mu must be a nonempty list in (0, 1]".into());
        }
        if let Some(gr) = &self.grid {
            if !(w.t_exp > gr.n as f64) {
                errs.push(format!("sweep.t_exp must exceed n = {}, got {}", gr.n, w.t_exp));
            }
        }
        if w.rho.iter().any(|&r| !(r > 0.0)) {
            errs.push("sweep.rho entries must be positive".into());
        }
        if !(w.tolerance > 0.0) {
            errs.push("sweep.tolerance must be positive".into());
        }
        if w.modes == 0 {
            errs.push("sweep.modes must be positive".into());
        }
        if self.rhs.modes == 0 {
            errs.push("rhs.modes must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Canonical JSON (sorted keys, output directory dropped).
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The part of the hash used in file names.
    pub fn short_hash(&self) -> String {
        self.config_hash()[..16].to_string()
    }
}
