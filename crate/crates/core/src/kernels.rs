//! Free-space radial kernels applied by zero-padded FFT convolution.
//!
//! A field on an `n^3` grid is embedded in a `(2n)^3` buffer, so circular
//! convolution on the padded box equals the aperiodic lattice sum
//! `h^3 sum_y k(|x - y|) f(y)` for every pair of original grid points.
//! The coincident cell `y = x` uses the exact integral of `k` over the ball
//! of volume `h^3`, radius `r_h = (3 h^3 / 4 pi)^{1/3}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::grid::Grid;

/// Radial kernel families used by the potential and resolvent diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialKernel {
    /// `1 / rho` (Kato norm integrand).
    Newton,
    /// `1 / rho` restricted to `rho <= radius`.
    TruncatedNewton { radius: f64 },
    /// `exp(-kappa rho) / (4 pi rho)`, the kernel of `(-Delta + kappa^2)^{-1}`.
    Yukawa { kappa: f64 },
}

/// Radius of the ball with the same volume as one grid cell.
pub fn cell_radius(h: f64) -> f64 {
    (3.0 * h * h * h / (4.0 * PI)).cbrt()
}

impl RadialKernel {
    pub fn value(&self, rho: f64) -> f64 {
        match *self {
            RadialKernel::Newton => 1.0 / rho,
            RadialKernel::TruncatedNewton { radius } => {
                if rho <= radius {
                    1.0 / rho
                } else {
                    0.0
                }
            }
            RadialKernel::Yukawa { kappa } => (-kappa * rho).exp() / (4.0 * PI * rho),
        }
    }

    /// Integral of the kernel over the ball of radius `r`.
    pub fn ball_integral(&self, r: f64) -> f64 {
        match *self {
            RadialKernel::Newton => 2.0 * PI * r * r,
            RadialKernel::TruncatedNewton { radius } => {
                let r = r.min(radius);
                2.0 * PI * r * r
            }
            RadialKernel::Yukawa { kappa } => {
                let x = kappa * r;
                if x < 1e-4 {
                    // Series of (1 - e^{-x}(1 + x)) / kappa^2 avoids cancellation.
                    r * r * (0.5 - x / 3.0 + x * x / 8.0)
                } else {
                    (1.0 - (-x).exp() * (1.0 + x)) / (kappa * kappa)
                }
            }
        }
    }

    /// Weight of the coincident cell in the lattice sum.
    pub fn self_cell(&self, h: f64) -> f64 {
        self.ball_integral(cell_radius(h))
    }
}

/// Precomputed FFT of a kernel on the padded lattice.
#[derive(Clone, Debug)]
pub struct Convolver {
    grid: Grid,
    padded: Grid,
    kernel_hat: Vec<Complex64>,
}

impl Convolver {
    pub fn new(grid: &Grid, kernel: RadialKernel) -> Result<Self> {
        let n = grid.n();
        let h = grid.spacing();
        let padded = Grid::new(2 * n, 2.0 * grid.box_length())?;
        let m = 2 * n;
        let w = grid.cell_volume();
        let self_cell = kernel.self_cell(h);
        let disp = |p: usize| -> f64 {
            let d = if p < n { p as f64 } else { p as f64 - m as f64 };
            d * h
        };
        let mut kernel_hat: Vec<Complex64> = (0..padded.len())
            .into_par_iter()
            .map(|idx| {
                if idx == 0 {
                    return Complex64::new(self_cell, 0.0);
                }
                let [a, b, c] = padded.unravel(idx);
                let (x, y, z) = (disp(a), disp(b), disp(c));
                let rho = (x * x + y * y + z * z).sqrt();
                Complex64::new(w * kernel.value(rho), 0.0)
            })
            .collect();
        padded.forward(&mut kernel_hat);
        Ok(Convolver { grid: grid.clone(), padded, kernel_hat })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `out(x) = sum_y K(x, y) f(y)` over the original grid points.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let m = 2 * n;
        assert_eq!(f.len(), self.grid.len(), "input length must be n^3");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded.len()];
        buf.par_chunks_mut(m * m).take(n).enumerate().for_each(|(i, plane)| {
            for j in 0..n {
                let src = &f[(i * n + j) * n..(i * n + j + 1) * n];
                plane[j * m..j * m + n].copy_from_slice(src);
            }
        });
        self.padded.forward(&mut buf);
        buf.par_iter_mut().zip(self.kernel_hat.par_iter()).for_each(|(b, k)| *b *= k);
        self.padded.inverse(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            for j in 0..n {
                let start = (i * m + j) * m;
                plane[j * n..(j + 1) * n].copy_from_slice(&buf[start..start + n]);
            }
        });
        out
    }

    pub fn apply_real(&self, f: &[f64]) -> Vec<f64> {
        let input: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&input).into_iter().map(|c| c.re).collect()
    }

    /// Two real convolutions for the price of one, packed as real and imaginary parts.
    pub fn apply_real_pair(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let input: Vec<Complex64> = f.iter().zip(g).map(|(&a, &b)| Complex64::new(a, b)).collect();
        self.apply(&input).into_iter().map(|c| (c.re, c.im)).unzip()
    }
}
