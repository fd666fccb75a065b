//! Block preconditioned conjugate gradient (LOBPCG) for the lowest eigenpairs
//! of a real symmetric operator.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krylov::{dot, norm, sorted_eigen};

pub(crate) type Block = Vec<Vec<f64>>;

pub(crate) struct Lobpcg {
    pub values: Vec<f64>,
    pub vectors: Block,
}

/// `sum_j S_j C[j, col]` for each column of `c`.
fn combine(s: &[&Vec<f64>], c: &DMatrix<f64>) -> Block {
    let len = s[0].len();
    (0..c.ncols())
        .map(|col| {
            let mut out = vec![0.0; len];
            out.par_chunks_mut(4096).enumerate().for_each(|(b, chunk)| {
                let off = b * 4096;
                let width = chunk.len();
                for (j, sj) in s.iter().enumerate() {
                    let w = c[(j, col)];
                    if w != 0.0 {
                        for (o, v) in chunk.iter_mut().zip(&sj[off..off + width]) {
                            *o += w * v;
                        }
                    }
                }
            });
            out
        })
        .collect()
}

fn gram(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            g[(i, j)] = dot(a[i], b[j]);
        }
    }
    g
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Coefficients `Z` with `(S Z)^T (S Z) = I`, dropping near-dependent directions.
fn orthonormalizer(s: &[&Vec<f64>]) -> DMatrix<f64> {
    let k = s.len();
    let mut g = gram(s, s);
    symmetrize(&mut g);
    let d: Vec<f64> = (0..k).map(|i| 1.0 / g[(i, i)].sqrt()).collect();
    let mut scaled = g.clone();
    for i in 0..k {
        for j in 0..k {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let (lam, u) = sorted_eigen(scaled);
    let top = lam[k - 1];
    let keep: Vec<usize> = (0..k).filter(|&i| lam[i] > 1e-10 * top).collect();
    let mut z = DMatrix::zeros(k, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let inv = 1.0 / lam[i].sqrt();
        for r in 0..k {
            z[(r, col)] = d[r] * u[(r, i)] * inv;
        }
    }
    z
}

/// Runs LOBPCG from the block `x0`. `stop(theta, residual_norms)` ends the
/// iteration; columns whose residual is below `lock_tol` no longer get search
/// directions.
pub(crate) fn lobpcg<A, P, S>(apply: A, precond: P, x0: Block, lock_tol: f64, max_iter: usize, stop: S) -> Result<Lobpcg>
where
    A: Fn(&[Vec<f64>]) -> Block,
    P: Fn(&[Vec<f64>]) -> Block,
    S: Fn(&[f64], &[f64]) -> bool,
{
    let m = x0.len();
    if m == 0 {
        return Err(Error::arg("block", "empty start block"));
    }
    // Initial Rayleigh-Ritz.
    let refs: Vec<&Vec<f64>> = x0.iter().collect();
    let z = orthonormalizer(&refs);
    if z.ncols() < m {
        return Err(Error::Breakdown("start block is rank deficient".into()));
    }
    let mut x = combine(&refs, &z);
    let mut ax = apply(&x);
    let (mut theta, c) = {
        let xr: Vec<&Vec<f64>> = x.iter().collect();
        let axr: Vec<&Vec<f64>> = ax.iter().collect();
        let mut g = gram(&xr, &axr);
        symmetrize(&mut g);
        sorted_eigen(g)
    };
    x = combine(&x.iter().collect::<Vec<_>>(), &c);
    ax = combine(&ax.iter().collect::<Vec<_>>(), &c);
    let mut p: Block = Vec::new();
    let mut ap: Block = Vec::new();

    for _ in 0..max_iter {
        let residual: Block = (0..m)
            .map(|i| {
                let t = theta[i];
                ax[i].par_iter().zip(x[i].par_iter()).map(|(a, x)| a - t * x).collect()
            })
            .collect();
        let rn: Vec<f64> = residual.iter().map(|r| norm(r)).collect();
        if stop(&theta, &rn) {
            return Ok(Lobpcg { values: theta, vectors: x });
        }
        let active: Vec<usize> = (0..m).filter(|&i| rn[i] > lock_tol).collect();
        if active.is_empty() {
            return Err(Error::Breakdown("all columns locked before the stopping rule held".into()));
        }
        let r_active: Block = active.iter().map(|&i| residual[i].clone()).collect();
        let w = precond(&r_active);
        let aw = apply(&w);

        let mut s: Vec<&Vec<f64>> = x.iter().collect();
        s.extend(w.iter());
        s.extend(p.iter());
        let mut as_: Vec<&Vec<f64>> = ax.iter().collect();
        as_.extend(aw.iter());
        as_.extend(ap.iter());

        let z = orthonormalizer(&s);
        let mut g = gram(&s, &as_);
        symmetrize(&mut g);
        let mut reduced = z.transpose() * g * &z;
        symmetrize(&mut reduced);
        if reduced.nrows() < m {
            return Err(Error::Breakdown("search space collapsed below the block size".into()));
        }
        let (vals, vecs) = sorted_eigen(reduced);
        let coeff = &z * vecs.columns(0, m);
        theta = vals[..m].to_vec();

        let new_x = combine(&s, &coeff);
        let new_ax = combine(&as_, &coeff);
        // Search directions: the part of the update outside the current X.
        let mut tail = coeff.clone();
        for r in 0..m {
            for col in 0..m {
                tail[(r, col)] = 0.0;
            }
        }
        p = combine(&s, &tail);
        ap = combine(&as_, &tail);
        x = new_x;
        ax = new_ax;
    }
    Err(Error::NonConvergence { what: "LOBPCG", iterations: max_iter })
}
