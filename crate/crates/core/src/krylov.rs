//! Krylov-space building blocks: matrix functions by Lanczos, extreme
//! eigenvalues by Lanczos with full reorthogonalization, and CG on the
//! normal equations.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::stable_sum;

pub(crate) fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    stable_sum(a.len(), |i| b[i].conj() * a[i])
}

pub(crate) fn cnorm(a: &[Complex64]) -> f64 {
    stable_sum(a.len(), |i| a[i].norm_sqr()).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    stable_sum(a.len(), |i| a[i] * b[i])
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += c x`.
pub(crate) fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += c * x);
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, eigenvalues ascending.
pub(crate) fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    sorted_eigen(t)
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let k = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(k, k);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FunctionOptions {
    pub max_iter: usize,
    /// Relative change of the Krylov coefficients that counts as converged.
    pub tol: f64,
    pub check_every: usize,
}

impl Default for FunctionOptions {
    fn default() -> Self {
        FunctionOptions { max_iter: 2000, tol: 1e-10, check_every: 8 }
    }
}

/// Lanczos recurrence state; rerunning it from the same start reproduces the
/// same basis vectors bit for bit, which the second pass relies on.
struct Recurrence<'a, A> {
    apply: &'a A,
    prev: Vec<Complex64>,
    cur: Vec<Complex64>,
    beta_prev: f64,
}

impl<'a, A> Recurrence<'a, A>
where
    A: Fn(&[Complex64]) -> Vec<Complex64>,
{
    fn new(apply: &'a A, start: Vec<Complex64>) -> Self {
        let len = start.len();
        Recurrence { apply, prev: vec![Complex64::new(0.0, 0.0); len], cur: start, beta_prev: 0.0 }
    }

    /// Advance one step, returning `(alpha, beta)` with `cur` moved to the next basis vector.
    fn step(&mut self) -> (f64, f64) {
        let mut w = (self.apply)(&self.cur);
        let bp = self.beta_prev;
        w.par_iter_mut().zip(self.prev.par_iter()).for_each(|(w, p)| *w -= p * bp);
        let alpha = cdot(&w, &self.cur).re;
        w.par_iter_mut().zip(self.cur.par_iter()).for_each(|(w, c)| *w -= c * alpha);
        let beta = cnorm(&w);
        if beta > 0.0 {
            let inv = 1.0 / beta;
            w.par_iter_mut().for_each(|w| *w *= inv);
        }
        self.prev = std::mem::replace(&mut self.cur, w);
        self.beta_prev = beta;
        (alpha, beta)
    }
}

/// `f(A) b` for a Hermitian operator `A` by two-pass Lanczos. `f` maps the
/// ascending Ritz values to function values.
pub(crate) fn lanczos_function<A, F>(apply: &A, b: &[Complex64], f: F, opts: FunctionOptions) -> Result<Vec<Complex64>>
where
    A: Fn(&[Complex64]) -> Vec<Complex64>,
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let beta0 = cnorm(b);
    if beta0 == 0.0 {
        return Ok(b.to_vec());
    }
    let start: Vec<Complex64> = b.iter().map(|v| v / beta0).collect();

    let coefficients = |alpha: &[f64], beta: &[f64]| -> Result<Vec<f64>> {
        let (theta, s) = tridiagonal_eigen(alpha, &beta[..alpha.len() - 1]);
        let fv = f(&theta)?;
        let k = alpha.len();
        Ok((0..k).map(|i| (0..k).map(|j| s[(i, j)] * fv[j] * s[(0, j)]).sum()).collect())
    };

    let mut rec = Recurrence::new(apply, start.clone());
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut coeff = None;
    let scale = |a: &[f64]| a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for it in 0..opts.max_iter {
        let (a, bnext) = rec.step();
        alpha.push(a);
        beta.push(bnext);
        let breakdown = bnext <= 1e-14 * scale(&alpha).max(1.0);
        if breakdown || (it + 1) % opts.check_every == 0 {
            let c = coefficients(&alpha, &beta)?;
            let done = breakdown
                || previous.as_ref().is_some_and(|p| {
                    let diff: f64 = c.iter().enumerate().map(|(i, x)| (x - p.get(i).copied().unwrap_or(0.0)).powi(2)).sum();
                    let size: f64 = c.iter().map(|x| x * x).sum();
                    diff.sqrt() <= opts.tol * size.sqrt()
                });
            if done {
                coeff = Some(c);
                break;
            }
            previous = Some(c);
        }
    }
    let coeff = coeff.ok_or(Error::NonConvergence { what: "Lanczos matrix function", iterations: opts.max_iter })?;

    // Second pass: regenerate the basis and accumulate.
    let mut out: Vec<Complex64> = start.iter().map(|q| q * (beta0 * coeff[0])).collect();
    let mut rec = Recurrence::new(apply, start);
    for &c in &coeff[1..] {
        rec.step();
        let w = beta0 * c;
        out.par_iter_mut().zip(rec.cur.par_iter()).for_each(|(o, q)| *o += q * w);
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric positive semidefinite real operator by
/// Lanczos with full reorthogonalization.
pub(crate) fn smallest_eigenvalue<A>(apply: &A, start: Vec<f64>, max_dim: usize, tol: f64) -> Result<f64>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n0 = norm(&start);
    if n0 == 0.0 {
        return Err(Error::arg("start", "zero start vector"));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / n0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    for k in 0..max_dim {
        let mut w = apply(&basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        // Two rounds of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                axpy(&mut w, -c, q);
            }
        }
        let b = norm(&w);
        let (theta, s) = tridiagonal_eigen(&alpha, &beta);
        let residual = b * s[(k, 0)].abs();
        let scale = theta[theta.len() - 1].abs().max(1.0);
        if residual <= tol * scale || b <= 1e-14 * scale || (k > 8 && (last - theta[0]).abs() <= 1e-3 * tol * scale) {
            return Ok(theta[0]);
        }
        last = theta[0];
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Err(Error::NonConvergence { what: "Lanczos smallest eigenvalue", iterations: max_dim })
}

/// Conjugate gradients on `A^T A x = A^T b`. Returns the last iterate even if
/// the tolerance was not reached, together with a convergence flag.
pub(crate) fn cgnr<A, At>(apply: &A, apply_t: &At, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, bool)
where
    A: Fn(&[f64]) -> Vec<f64>,
    At: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut z = apply_t(&r);
    let mut p = z.clone();
    let mut zz = dot(&z, &z);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (x, true);
    }
    for _ in 0..max_iter {
        if norm(&r) <= tol * bnorm {
            return (x, true);
        }
        let w = apply(&p);
        let ww = dot(&w, &w);
        if ww == 0.0 {
            break;
        }
        let step = zz / ww;
        axpy(&mut x, step, &p);
        axpy(&mut r, -step, &w);
        z = apply_t(&r);
        let zz_new = dot(&z, &z);
        let ratio = zz_new / zz;
        zz = zz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + ratio * *p);
    }
    let ok = norm(&r) <= tol * bnorm;
    (x, ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[Complex64]) -> Vec<Complex64> {
        move |x: &[Complex64]| x.iter().zip(&d).map(|(x, d)| x * *d).collect()
    }

    #[test]
    fn matrix_function_on_diagonal_operator() {
        let d: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.37).collect();
        let b: Vec<Complex64> = (0..200).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let op = diag_op(d.clone());
        let out = lanczos_function(&op, &b, |t| Ok(t.iter().map(|x| x.powf(-0.75)).collect()), FunctionOptions::default())
            .unwrap();
        for i in 0..200 {
            let exact = b[i] * d[i].powf(-0.75);
            assert!((out[i] - exact).norm() < 1e-9, "{i}");
        }
    }

    #[test]
    fn eigenvector_start_terminates_immediately() {
        let d = vec![2.0, 3.0, 5.0];
        let op = diag_op(d);
        let b = vec![Complex64::new(0.0, 0.0), Complex64::new(1.5, 0.0), Complex64::new(0.0, 0.0)];
        let out = lanczos_function(&op, &b, |t| Ok(t.iter().map(|x| x.sqrt()).collect()), FunctionOptions::default()).unwrap();
        assert!((out[1].re - 1.5 * 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn smallest_eigenvalue_of_diagonal() {
        let d: Vec<f64> = (0..300).map(|i| 1e-4 + (i as f64).powi(2) * 1e-3).collect();
        let op = |x: &[f64]| x.iter().zip(&d).map(|(x, d)| x * d).collect::<Vec<f64>>();
        let start: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.5).collect();
        let lam = smallest_eigenvalue(&op, start, 300, 1e-12).unwrap();
        assert!((lam - 1e-4).abs() < 1e-9, "{lam}");
    }

    #[test]
    fn cgnr_solves_nonsymmetric_system() {
        // Upper bidiagonal, well conditioned.
        let n = 50;
        let apply = |x: &[f64]| (0..n).map(|i| 2.0 * x[i] + if i + 1 < n { 0.5 * x[i + 1] } else { 0.0 }).collect::<Vec<f64>>();
        let apply_t = |x: &[f64]| (0..n).map(|i| 2.0 * x[i] + if i > 0 { 0.5 * x[i - 1] } else { 0.0 }).collect::<Vec<f64>>();
        let truth: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let b = apply(&truth);
        let (x, ok) = cgnr(&apply, &apply_t, &b, 1e-12, 500);
        assert!(ok);
        for i in 0..n {
            assert!((x[i] - truth[i]).abs() < 1e-9);
        }
    }
}
