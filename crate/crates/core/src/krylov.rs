//! Restarted GMRES and Arnoldi iterations on flat complex vectors.

use faer::Mat;
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};

const ZERO: c64 = c64::new(0.0, 0.0);

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: c64, x: &[c64], y: &mut [c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(alpha: c64, x: &mut [c64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Orthogonalizes `w` against `basis` with two passes of modified Gram-Schmidt,
/// returning the accumulated projection coefficients.
fn orthogonalize(basis: &[Vec<c64>], w: &mut [c64]) -> Vec<c64> {
    let mut h = vec![ZERO; basis.len()];
    for _ in 0..2 {
        for (k, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            axpy(-c, v, w);
            h[k] += c;
        }
    }
    h
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    /// Relative residual target `‖b - A x‖ / ‖b‖`.
    pub tol: f64,
    pub restart: usize,
    /// Total inner iterations across restarts.
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            restart: 40,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<c64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b`; `precond` applies `M⁻¹`.
pub fn gmres<A, P>(apply: A, precond: P, b: &[c64], x0: Option<&[c64]>, opts: &GmresOptions) -> Result<GmresOutcome>
where
    A: Fn(&[c64]) -> Vec<c64>,
    P: Fn(&[c64]) -> Vec<c64>,
{
    let n = b.len();
    let b_norm = norm(b);
    if !b_norm.is_finite() {
        return Err(Error::Linalg("GMRES right-hand side is not finite".into()));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![ZERO; n]);
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![ZERO; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0usize;
    let mut best = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut stalled = 0;
    loop {
        let ax = apply(&x);
        let mut r: Vec<c64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / b_norm;
        best = best.min(rel);
        if rel <= opts.tol {
            return Ok(GmresOutcome {
                x,
                iterations: total,
                relative_residual: rel,
            });
        }
        // Restarts that no longer reduce the true residual mean the rounding
        // floor `ε‖A‖‖x‖/‖b‖` lies above `tol`; accept if that floor is small.
        stalled = if rel > 0.5 * prev { stalled + 1 } else { 0 };
        prev = rel;
        if stalled >= 3 && rel <= opts.tol.sqrt() {
            return Ok(GmresOutcome {
                x,
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: total,
                residual: best,
            });
        }
        scale(c64::new(1.0 / beta, 0.0), &mut r);
        let mut basis = vec![r];
        let mut hess: Vec<Vec<c64>> = Vec::with_capacity(m);
        let mut cs = Vec::with_capacity(m);
        let mut sn = Vec::with_capacity(m);
        let mut g = vec![ZERO; m + 1];
        g[0] = c64::new(beta, 0.0);
        let mut k_done = 0;
        for j in 0..m {
            let z = precond(&basis[j]);
            let mut w = apply(&z);
            let mut h = orthogonalize(&basis, &mut w);
            let h_next = norm(&w);
            h.push(c64::new(h_next, 0.0));
            // apply the previous rotations to the new column
            for i in 0..j {
                let (c, s): (f64, c64) = (cs[i], sn[i]);
                let t = c * h[i] + s * h[i + 1];
                h[i + 1] = -s.conj() * h[i] + c * h[i + 1];
                h[i] = t;
            }
            let (c, s) = givens(h[j], h[j + 1]);
            h[j] = c * h[j] + s * h[j + 1];
            h[j + 1] = ZERO;
            g[j + 1] = -s.conj() * g[j];
            g[j] = c * g[j];
            cs.push(c);
            sn.push(s);
            hess.push(h);
            total += 1;
            k_done = j + 1;
            best = best.min(g[j + 1].norm() / b_norm);
            if g[j + 1].norm() / b_norm <= opts.tol || h_next <= 1e-300 || total >= opts.max_iter {
                break;
            }
            scale(c64::new(1.0 / h_next, 0.0), &mut w);
            basis.push(w);
        }
        // back substitution on the rotated Hessenberg system
        let mut y = vec![ZERO; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= hess[l][i] * yl;
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![ZERO; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &basis[i], &mut update);
        }
        let dx = precond(&update);
        axpy(c64::new(1.0, 0.0), &dx, &mut x);
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Linalg("GMRES produced non-finite iterates".into()));
        }
    }
}

/// Complex Givens rotation `(c, s)` zeroing `b` in `(a, b)`.
fn givens(a: c64, b: c64) -> (f64, c64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let r = (na * na + nb * nb).sqrt();
    let phase = a / na;
    (na / r, phase * b.conj() / r)
}

/// Ritz pair from an Arnoldi factorization.
#[derive(Clone, Debug)]
pub struct RitzPair {
    pub value: c64,
    pub vector: Vec<c64>,
    /// `|h_{k+1,k}| · |e_kᵀ z|`, the residual norm of the pair for the iterated operator.
    pub residual: f64,
}

/// `k`-step Arnoldi on `apply` from `start`; returns Ritz pairs sorted by
/// decreasing modulus.
pub fn arnoldi<A>(apply: A, start: &[c64], k: usize) -> Result<Vec<RitzPair>>
where
    A: Fn(&[c64]) -> Result<Vec<c64>>,
{
    let n = start.len();
    let k = k.min(n).max(1);
    let s_norm = norm(start);
    if s_norm == 0.0 {
        return Err(Error::InvalidInput("Arnoldi start vector is zero".into()));
    }
    let mut v0 = start.to_vec();
    scale(c64::new(1.0 / s_norm, 0.0), &mut v0);
    let mut basis = vec![v0];
    let mut hess = Mat::<c64>::zeros(k + 1, k);
    let mut steps = 0;
    for j in 0..k {
        let mut w = apply(&basis[j])?;
        let w_norm = norm(&w);
        let h = orthogonalize(&basis, &mut w);
        for (i, hi) in h.iter().enumerate() {
            hess[(i, j)] = *hi;
        }
        let h_next = norm(&w);
        hess[(j + 1, j)] = c64::new(h_next, 0.0);
        steps = j + 1;
        // invariant subspace found (or the requested dimension reached)
        if h_next <= 1e-12 * w_norm || j + 1 == k {
            break;
        }
        scale(c64::new(1.0 / h_next, 0.0), &mut w);
        basis.push(w);
    }
    let hk = Mat::from_fn(steps, steps, |i, j| hess[(i, j)]);
    let evd = hk
        .eigen()
        .map_err(|e| Error::Linalg(format!("Hessenberg eigensolver: {e:?}")))?;
    let beta = hess[(steps, steps - 1)].norm();
    let mut pairs: Vec<RitzPair> = (0..steps)
        .map(|c| {
            let z = evd.U().col(c);
            let z_norm = (0..steps).map(|i| z[i].norm_sqr()).sum::<f64>().sqrt();
            let mut vector = vec![ZERO; n];
            for (i, b) in basis.iter().enumerate().take(steps) {
                axpy(z[i] / z_norm, b, &mut vector);
            }
            RitzPair {
                value: evd.S()[c],
                vector,
                residual: beta * z[steps - 1].norm() / z_norm,
            }
        })
        .collect();
    pairs.sort_by(|a, b| b.value.norm().total_cmp(&a.value.norm()));
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> impl Fn(&[c64]) -> Vec<c64> {
        move |x: &[c64]| {
            (0..n)
                .map(|i| {
                    let mut s = c64::new(4.0, 0.5 * i as f64) * x[i];
                    if i > 0 {
                        s += c64::new(-1.0, 0.3) * x[i - 1];
                    }
                    if i + 1 < n {
                        s += c64::new(-1.0, -0.2) * x[i + 1];
                    }
                    s
                })
                .collect()
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 60;
        let a = tridiag(n);
        let x_true: Vec<c64> = (0..n)
            .map(|i| c64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let b = a(&x_true);
        let opts = GmresOptions {
            tol: 1e-12,
            restart: 15,
            max_iter: 500,
        };
        let out = gmres(&a, |v: &[c64]| v.to_vec(), &b, None, &opts).unwrap();
        let err: f64 = out
            .x
            .iter()
            .zip(&x_true)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn gmres_with_exact_preconditioner_converges_immediately() {
        let d: Vec<c64> = (0..20).map(|i| c64::new(1.0 + i as f64, 2.0)).collect();
        let a = |x: &[c64]| x.iter().zip(&d).map(|(xi, di)| xi * di).collect::<Vec<_>>();
        let p = |x: &[c64]| x.iter().zip(&d).map(|(xi, di)| xi / di).collect::<Vec<_>>();
        let b = vec![c64::new(1.0, 0.0); 20];
        let out = gmres(a, p, &b, None, &GmresOptions::default()).unwrap();
        assert!(out.iterations <= 1);
    }

    #[test]
    fn arnoldi_finds_dominant_eigenvalue() {
        let d: Vec<c64> = (0..30).map(|i| c64::new(1.0 / (1.0 + i as f64), 0.1)).collect();
        let apply = |x: &[c64]| Ok(x.iter().zip(&d).map(|(xi, di)| xi * di).collect::<Vec<_>>());
        let start = vec![c64::new(1.0, 0.0); 30];
        let pairs = arnoldi(apply, &start, 30).unwrap();
        assert!((pairs[0].value - d[0]).norm() < 1e-10);
        assert!((pairs[1].value - d[1]).norm() < 1e-10);
        assert!(pairs[0].vector[0].norm() > 0.999);
    }
}
