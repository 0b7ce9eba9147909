//! C ABI over the greenlab core.
//!
//! Every function returns a [`GreenlabStatus`]; on failure a message is kept
//! per thread and read back with [`greenlab_last_error`]. Problems are opaque
//! handles created from a TOML/JSON config holding `grid`, `domain` and
//! `coefficients` blocks.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use greenlab::assembly::{assemble_system, RhsData, SaddleSystem};
use greenlab::config::{ExperimentConfig, ExperimentKind};
use greenlab::experiment::{error_exit_code, run_experiment};
use greenlab::green::{green_matrix, symmetry_defect, GreenCache};
use greenlab::solver::{estimate_infsup, identity_system, solve_stokes, SolveOptions};
use greenlab::{build_domain, generate_coefficients, CoefficientField, DomainMask, Error, StaggeredGrid};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenlabStatus {
    Ok = 0,
    /// Null pointer, wrong buffer length or malformed string.
    InvalidArgument = 1,
    Config = 2,
    Solver = 3,
    Invariant = 4,
    Precondition = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Statistics of the last solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GreenlabSolveStats {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub wall_time: f64,
}

/// Opaque problem handle.
pub struct GreenlabProblem {
    mask: Arc<DomainMask>,
    field: Arc<CoefficientField>,
    opts: SolveOptions,
    primal: OnceLock<Arc<SaddleSystem>>,
    adjoint: OnceLock<Arc<SaddleSystem>>,
    primal_cache: OnceLock<GreenCache>,
    adjoint_cache: OnceLock<GreenCache>,
}

impl GreenlabProblem {
    fn system(&self, adjoint: bool) -> Result<&Arc<SaddleSystem>, Error> {
        let slot = if adjoint { &self.adjoint } else { &self.primal };
        if let Some(s) = slot.get() {
            return Ok(s);
        }
        let sys = Arc::new(assemble_system(&self.field, &self.mask, adjoint)?);
        Ok(slot.get_or_init(|| sys))
    }

    fn cache(&self, adjoint: bool) -> Result<&GreenCache, Error> {
        let sys = self.system(adjoint)?.clone();
        let slot = if adjoint { &self.adjoint_cache } else { &self.primal_cache };
        Ok(slot.get_or_init(|| GreenCache::new(sys, self.opts, 32)))
    }

    fn grid(&self) -> &StaggeredGrid {
        self.mask.grid()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GreenlabStatus {
    match e {
        Error::Config(_) | Error::Grid(_) | Error::Domain(_) | Error::Coefficients(_) | Error::Rhs(_) | Error::Serde(_) => {
            GreenlabStatus::Config
        }
        Error::Solver { .. } => GreenlabStatus::Solver,
        Error::Invariant(_) | Error::Assembly(_) => GreenlabStatus::Invariant,
        Error::Precondition(_) => GreenlabStatus::Precondition,
        Error::Io { .. } => GreenlabStatus::Io,
    }
}

struct Fail(GreenlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GreenlabStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GreenlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GreenlabStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GreenlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn problem<'a>(p: *const GreenlabProblem) -> Result<&'a GreenlabProblem, Fail> {
    p.as_ref().ok_or_else(|| invalid("problem handle is null"))
}

/// Reads `len` values; a null pointer with `len == 0` means "all zeros".
unsafe fn input(p: *const f64, len: usize, want: usize, name: &str) -> Result<Vec<f64>, Fail> {
    if p.is_null() {
        return if len == 0 { Ok(vec![0.0; want]) } else { Err(invalid(format!("{name} is null"))) };
    }
    if len != want {
        return Err(invalid(format!("{name} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len).to_vec())
}

unsafe fn output<'a>(p: *mut f64, len: usize, want: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    if len != want {
        return Err(invalid(format!("{name} has length {len}, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn greenlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static, nul-terminated version string.
#[no_mangle]
pub extern "C" fn greenlab_version() -> *const c_char {
    static V: OnceLock<CString> = OnceLock::new();
    V.get_or_init(|| CString::new(greenlab::report::VERSION).expect("no nul")).as_ptr()
}

/// Builds a problem from config text (TOML or JSON). Only the `grid`,
/// `domain`, `coefficients` and `solver` blocks are used.
///
/// # Safety
/// `config` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn greenlab_problem_new(config: *const c_char, out: *mut *mut GreenlabProblem) -> GreenlabStatus {
    guard(|| {
        let text = str_arg(config, "config")?;
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let mut cfg = ExperimentConfig::parse(text)?;
        if cfg.experiment.is_none() {
            cfg.experiment = Some(ExperimentKind::Solve);
        }
        cfg.validate()?;
        let g = cfg.grid.as_ref().expect("validated");
        let grid = StaggeredGrid::new(g.n, &vec![g.cells; g.n], g.extent)?;
        let mask = Arc::new(build_domain(&grid, cfg.domain.as_ref().expect("validated"))?);
        let spec = cfg
            .coefficients
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["missing [coefficients] block".into()]))?;
        let field = Arc::new(generate_coefficients(&grid, spec)?);
        let p = GreenlabProblem {
            mask,
            field,
            opts: cfg.solver.options(),
            primal: OnceLock::new(),
            adjoint: OnceLock::new(),
            primal_cache: OnceLock::new(),
            adjoint_cache: OnceLock::new(),
        };
        *out = Box::into_raw(Box::new(p));
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `p` must come from [`greenlab_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn greenlab_problem_free(p: *mut GreenlabProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Spatial dimension, cells in the grid and interior (pressure) cells.
///
/// # Safety
/// Pointers must be valid; outputs may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn greenlab_problem_shape(
    p: *const GreenlabProblem,
    dim: *mut usize,
    grid_cells: *mut usize,
    interior_cells: *mut usize,
) -> GreenlabStatus {
    guard(|| {
        let p = problem(p)?;
        if let Some(d) = dim.as_mut() {
            *d = p.grid().dim();
        }
        if let Some(c) = grid_cells.as_mut() {
            *c = p.grid().num_cells();
        }
        if let Some(c) = interior_cells.as_mut() {
            *c = p.mask.interior_cells().len();
        }
        Ok(())
    })
}

/// Unknown counts of the saddle system (assembles it on first use).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greenlab_problem_dofs(p: *const GreenlabProblem, velocity: *mut usize, pressure: *mut usize) -> GreenlabStatus {
    guard(|| {
        let p = problem(p)?;
        let sys = p.system(false)?;
        *out_arg(velocity, "velocity")? = sys.velocity_dofs();
        *out_arg(pressure, "pressure")? = sys.pressure_dofs();
        Ok(())
    })
}

/// Effective ellipticity bounds of the coefficient field.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greenlab_problem_ellipticity(p: *const GreenlabProblem, lambda: *mut f64, upper: *mut f64) -> GreenlabStatus {
    guard(|| {
        let p = problem(p)?;
        let e = p.field.check_ellipticity()?;
        *out_arg(lambda, "lambda")? = e.lambda_eff;
        *out_arg(upper, "upper")? = e.upper_eff;
        Ok(())
    })
}

/// Cell containing the physical point `x[0..dim]`.
///
/// # Safety
/// `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn greenlab_locate_cell(p: *const GreenlabProblem, x: *const f64, dim: usize, cell: *mut usize) -> GreenlabStatus {
    guard(|| {
        let p = problem(p)?;
        let n = p.grid().dim();
        let x = input(x, dim, n, "x")?;
        *out_arg(cell, "cell")? = p.grid().locate(&x);
        Ok(())
    })
}

/// Solves the Stokes system. Data live on interior cells in pressure order:
/// `f` has `dim` values per cell, `f_alpha` has `dim²` (slot `i·dim + α`),
/// `g` one value (mean zero). Null inputs with zero length are zero fields.
///
/// # Safety
/// Buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn greenlab_solve(
    p: *const GreenlabProblem,
    f: *const f64,
    f_len: usize,
    f_alpha: *const f64,
    f_alpha_len: usize,
    g: *const f64,
    g_len: usize,
    u_out: *mut f64,
    u_len: usize,
    p_out: *mut f64,
    p_len: usize,
    stats: *mut GreenlabSolveStats,
) -> GreenlabStatus {
    guard(|| {
        let prob = problem(p)?;
        let sys = prob.system(false)?;
        let n = sys.dim();
        let np = sys.pressure_dofs();
        let rhs = RhsData {
            f: input(f, f_len, n * np, "f")?,
            f_alpha: input(f_alpha, f_alpha_len, n * n * np, "f_alpha")?,
            g: input(g, g_len, np, "g")?,
        };
        let u_dst = output(u_out, u_len, sys.velocity_dofs(), "u_out")?;
        let p_dst = output(p_out, p_len, np, "p_out")?;
        let (sol, st) = solve_stokes(sys, &rhs, &prob.opts)?;
        u_dst.copy_from_slice(&sol.u);
        p_dst.copy_from_slice(&sol.p);
        if let Some(s) = stats.as_mut() {
            *s = GreenlabSolveStats {
                iterations: st.iterations,
                final_relative_residual: st.final_relative_residual,
                wall_time: st.wall_time,
            };
        }
        Ok(())
    })
}

/// `dim × dim` averaged Green matrix between cells `x` and `y`, row-major in
/// `(i, k)`. Columns are cached per handle.
///
/// # Safety
/// `out` must hold `out_len == dim²` values.
#[no_mangle]
pub unsafe extern "C" fn greenlab_green_matrix(
    p: *const GreenlabProblem,
    x_cell: usize,
    y_cell: usize,
    epsilon: f64,
    out: *mut f64,
    out_len: usize,
) -> GreenlabStatus {
    guard(|| {
        let prob = problem(p)?;
        let n = prob.grid().dim();
        let dst = output(out, out_len, n * n, "out")?;
        let m = green_matrix(prob.cache(false)?, x_cell, y_cell, epsilon)?;
        dst.copy_from_slice(&m.g);
        Ok(())
    })
}

/// Relative defect of `G_ε(x, y) = G*_ε(y, x)ᵀ`.
///
/// # Safety
/// `defect` must be writable.
#[no_mangle]
pub unsafe extern "C" fn greenlab_symmetry_defect(
    p: *const GreenlabProblem,
    x_cell: usize,
    y_cell: usize,
    epsilon: f64,
    defect: *mut f64,
) -> GreenlabStatus {
    guard(|| {
        let prob = problem(p)?;
        let out = out_arg(defect, "defect")?;
        *out = symmetry_defect(prob.cache(false)?, prob.cache(true)?, x_cell, y_cell, epsilon)?;
        Ok(())
    })
}

/// Discrete inf-sup constant of the domain.
///
/// # Safety
/// `beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn greenlab_infsup(p: *const GreenlabProblem, beta: *mut f64) -> GreenlabStatus {
    guard(|| {
        let prob = problem(p)?;
        let out = out_arg(beta, "beta")?;
        let id = identity_system(&prob.mask)?;
        *out = estimate_infsup(&id)?.beta;
        Ok(())
    })
}

/// Runs an experiment like the command-line tool and stores its exit code
/// (0 pass, 1 invariant failure, 2 config error, 3 solver failure).
///
/// # Safety
/// Strings must be nul-terminated; `exit_code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn greenlab_run_experiment(
    experiment: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut c_int,
) -> GreenlabStatus {
    guard(|| {
        let exp = str_arg(experiment, "experiment")?;
        let path = str_arg(config_path, "config_path")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let code = out_arg(exit_code, "exit_code")?;
        let kind: ExperimentKind = exp.parse()?;
        let mut cfg = ExperimentConfig::load(Path::new(path))?;
        if cfg.experiment.is_some_and(|k| k != kind) {
            return Err(Error::Config(vec![format!("config declares a different experiment than '{kind}'")]).into());
        }
        cfg.experiment = Some(kind);
        match run_experiment(&cfg, Path::new(dir), vec![format!("config: {path}")]) {
            Ok(o) => *code = o.status().exit_code(),
            Err(e) => {
                *code = error_exit_code(&e);
                return Err(e.into());
            }
        }
        Ok(())
    })
}
