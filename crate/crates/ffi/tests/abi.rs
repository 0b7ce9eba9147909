use std::ffi::{CStr, CString};
use std::ptr;

use greenlab_ffi::*;

const CONFIG: &str = r#"
[grid]
cells = 6
[domain]
kind = "box"
[coefficients]
kind = "random"
oscillation = 0.3
seed = 8
"#;

fn new_problem(text: &str) -> (GreenlabStatus, *mut GreenlabProblem) {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { greenlab_problem_new(c.as_ptr(), &mut p) };
    (s, p)
}

fn last_error() -> String {
    let e = greenlab_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_string_lossy().into_owned()
}

#[test]
fn solve_round_trip() {
    let (s, p) = new_problem(CONFIG);
    assert_eq!(s, GreenlabStatus::Ok);
    assert!(greenlab_last_error().is_null());
    let (mut nv, mut np) = (0usize, 0usize);
    unsafe {
        assert_eq!(greenlab_problem_dofs(p, &mut nv, &mut np), GreenlabStatus::Ok);
    }
    assert_eq!(np, 216);
    assert_eq!(nv, 3 * 5 * 36);
    let f: Vec<f64> = (0..3 * np).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let mut u = vec![0.0; nv];
    let mut pr = vec![0.0; np];
    let mut st = GreenlabSolveStats::default();
    let s = unsafe {
        greenlab_solve(p, f.as_ptr(), f.len(), ptr::null(), 0, ptr::null(), 0, u.as_mut_ptr(), nv, pr.as_mut_ptr(), np, &mut st)
    };
    assert_eq!(s, GreenlabStatus::Ok);
    assert!(st.iterations > 0 && st.final_relative_residual <= 1e-10);
    assert!(u.iter().any(|&v| v != 0.0));
    assert!(pr.iter().sum::<f64>().abs() < 1e-9);
    // a short output buffer is rejected before any work
    let s = unsafe {
        greenlab_solve(p, f.as_ptr(), f.len(), ptr::null(), 0, ptr::null(), 0, u.as_mut_ptr(), nv - 1, pr.as_mut_ptr(), np, ptr::null_mut())
    };
    assert_eq!(s, GreenlabStatus::InvalidArgument);
    assert!(last_error().contains("u_out"));
    // non-mean-zero divergence data
    let g = vec![1.0; np];
    let s = unsafe {
        greenlab_solve(p, ptr::null(), 0, ptr::null(), 0, g.as_ptr(), np, u.as_mut_ptr(), nv, pr.as_mut_ptr(), np, ptr::null_mut())
    };
    assert_eq!(s, GreenlabStatus::Config);
    unsafe { greenlab_problem_free(p) };
}

#[test]
fn green_and_symmetry() {
    let (_, p) = new_problem(&CONFIG.replace("cells = 6", "cells = 8"));
    let x = [0.3, 0.4, 0.5];
    let y = [0.6, 0.55, 0.45];
    let (mut cx, mut cy) = (0usize, 0usize);
    unsafe {
        assert_eq!(greenlab_locate_cell(p, x.as_ptr(), 3, &mut cx), GreenlabStatus::Ok);
        assert_eq!(greenlab_locate_cell(p, y.as_ptr(), 3, &mut cy), GreenlabStatus::Ok);
    }
    let mut g = [0.0; 9];
    let s = unsafe { greenlab_green_matrix(p, cx, cy, 0.125, g.as_mut_ptr(), 9) };
    assert_eq!(s, GreenlabStatus::Ok, "{}", last_error());
    assert!(g[0] > 0.0);
    let mut d = 1.0;
    assert_eq!(unsafe { greenlab_symmetry_defect(p, cx, cy, 0.125, &mut d) }, GreenlabStatus::Ok);
    assert!(d < 1e-6, "{d}");
    // epsilon below h violates a precondition
    let s = unsafe { greenlab_green_matrix(p, cx, cy, 0.01, g.as_mut_ptr(), 9) };
    assert_eq!(s, GreenlabStatus::Precondition);
    let (mut lam, mut up) = (0.0, 0.0);
    assert_eq!(unsafe { greenlab_problem_ellipticity(p, &mut lam, &mut up) }, GreenlabStatus::Ok);
    assert!(0.0 < lam && lam <= 1.0 && up >= 1.0);
    let mut beta = 0.0;
    assert_eq!(unsafe { greenlab_infsup(p, &mut beta) }, GreenlabStatus::Ok);
    assert!(beta > 0.1 && beta < 1.0);
    unsafe { greenlab_problem_free(p) };
}

#[test]
fn errors_are_codes_not_crashes() {
    let (s, p) = new_problem("[grid]\ncells = 6\n[domain]\nkind = \"box\"\n");
    assert_eq!(s, GreenlabStatus::Config);
    assert!(p.is_null());
    assert!(last_error().contains("[coefficients]"));
    let (s, _) = new_problem("not = [valid");
    assert_eq!(s, GreenlabStatus::Config);
    let s = unsafe { greenlab_problem_new(ptr::null(), ptr::null_mut()) };
    assert_eq!(s, GreenlabStatus::InvalidArgument);
    let mut nv = 0;
    let s = unsafe { greenlab_problem_dofs(ptr::null(), &mut nv, &mut nv) };
    assert_eq!(s, GreenlabStatus::InvalidArgument);
    unsafe { greenlab_problem_free(ptr::null_mut()) };
    let v = unsafe { CStr::from_ptr(greenlab_version()) }.to_str().unwrap();
    assert!(v.starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn run_experiment_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[grid]\ncells = 4\n[domain]\nkind = \"box\"\n").unwrap();
    let cfg_c = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let mut code = -1;
    let exp = CString::new("infsup").unwrap();
    let s = unsafe { greenlab_run_experiment(exp.as_ptr(), cfg_c.as_ptr(), out.as_ptr(), &mut code) };
    assert_eq!((s, code), (GreenlabStatus::Ok, 0));
    let exp = CString::new("solve").unwrap();
    let s = unsafe { greenlab_run_experiment(exp.as_ptr(), cfg_c.as_ptr(), out.as_ptr(), &mut code) };
    assert_eq!((s, code), (GreenlabStatus::Config, 2));
}
