//! Krylov solvers: preconditioned CG and restarted right-preconditioned GMRES.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn pcg(
    a: &CsrMatrix,
    prec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = a.mul(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..opts.max_iter {
        let rel = norm2(&r) / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovOutcome { iterations: it, relative_residual: rel });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::solver("CG breakdown: operator not positive definite", it, rel));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let rel = norm2(&r) / bnorm;
    if rel <= opts.tol {
        Ok(KrylovOutcome { iterations: opts.max_iter, relative_residual: rel })
    } else {
        Err(Error::solver("CG did not reach tolerance", opts.max_iter, rel))
    }
}

/// Restarted GMRES with right preconditioning; `x` holds the initial guess.
pub fn gmres(
    op: impl Fn(&[f64], &mut [f64]),
    prec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let m = restart.max(1);
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        op(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovOutcome { iterations: total, relative_residual: rel });
        }
        if total >= opts.max_iter {
            return Err(Error::solver("GMRES did not reach tolerance", total, rel));
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < opts.max_iter {
            prec(&basis[k], &mut z);
            op(&z, &mut w);
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                hess[i][k] = hik;
                axpy(-hik, &basis[i], &mut w);
            }
            let hnext = norm2(&w);
            hess[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::solver("GMRES breakdown", total, g[k].abs() / bnorm));
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            if g[k].abs() / bnorm <= opts.tol * 0.5 || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // back substitution
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut vy = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &basis[i], &mut vy);
        }
        prec(&vy, &mut z);
        axpy(1.0, &z, x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nonsym(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, 4.0));
            if i > 0 {
                t.push((i as u32, (i - 1) as u32, -1.5));
            }
            if i + 1 < n {
                t.push((i as u32, (i + 1) as u32, -0.5));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let a = nonsym(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 200];
        let d = a.diagonal();
        let out = gmres(
            |v, y| a.matvec(v, y),
            |v, y| y.iter_mut().zip(v).zip(&d).for_each(|((yi, vi), di)| *yi = vi / di),
            &b,
            &mut x,
            10,
            &KrylovOptions { tol: 1e-12, max_iter: 500 },
        )
        .unwrap();
        let r = a.mul(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-11 * norm2(&b), "{err} after {}", out.iterations);
    }

    #[test]
    fn zero_rhs_returns_zero_without_iterations() {
        let a = nonsym(10);
        let mut x = vec![1.0; 10];
        let out = gmres(|v, y| a.matvec(v, y), |v, y| y.copy_from_slice(v), &[0.0; 10], &mut x, 5,
            &KrylovOptions { tol: 1e-10, max_iter: 10 }).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iteration_cap_reported() {
        let a = nonsym(100);
        let b = vec![1.0; 100];
        let mut x = vec![0.0; 100];
        let err = gmres(|v, y| a.matvec(v, y), |v, y| y.copy_from_slice(v), &b, &mut x, 2,
            &KrylovOptions { tol: 1e-14, max_iter: 3 }).unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 3, .. }));
    }
}
