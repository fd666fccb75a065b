//! Seeded random band-limited fields.
//!
//! Coefficients are drawn mode by mode in a fixed lexicographic order over
//! the integer wave vectors with `|xi| <= cutoff`, so the same seed produces
//! the same trigonometric polynomial on every grid that resolves the cutoff.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// `count` fields with unit `L^2` norm whose spectra are supported in `|xi| <= cutoff`.
///
/// Mode amplitudes fall off like `1 / (1 + |xi|^2)`.
pub fn band_limited_ensemble(grid: &Grid, count: usize, seed: u64, cutoff: f64) -> Result<Vec<Field>> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::arg("cutoff", format!("must be positive, got {cutoff}")));
    }
    let n = grid.n() as i64;
    let l = grid.box_length();
    let unit = 2.0 * std::f64::consts::PI / l;
    let kmax = (cutoff / unit).floor() as i64;
    if kmax >= n / 2 {
        return Err(Error::arg("cutoff", format!("cutoff {cutoff} is above the grid's Nyquist frequency {}", grid.nyquist())));
    }
    let mut modes = Vec::new();
    for a in -kmax..=kmax {
        for b in -kmax..=kmax {
            for c in -kmax..=kmax {
                let xi2 = ((a * a + b * b + c * c) as f64) * unit * unit;
                if xi2 <= cutoff * cutoff {
                    modes.push(([a, b, c], xi2));
                }
            }
        }
    }
    let wrap = |k: i64| -> usize { if k < 0 { (k + n) as usize } else { k as usize } };
    let len = grid.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
            for &([a, b, c], xi2) in &modes {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                // Points sit at (i - n/2) h, which multiplies mode k by (-1)^k.
                let parity = if (a + b + c).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let amp = parity * len / (1.0 + xi2);
                spec[grid.index(wrap(a), wrap(b), wrap(c))] = Complex64::new(re, im) * amp;
            }
            let f = Field::from_spectrum(grid, spec);
            let norm = f.norm_l2();
            Ok(f.scaled(Complex64::new(1.0 / norm, 0.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_function_on_refined_grid() {
        let coarse = Grid::new(16, 10.0).unwrap();
        let fine = Grid::new(32, 10.0).unwrap();
        let a = band_limited_ensemble(&coarse, 3, 42, 2.0).unwrap();
        let b = band_limited_ensemble(&fine, 3, 42, 2.0).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            // Coarse point (i, j, k) coincides with fine point (2i, 2j, 2k).
            for idx in [0usize, 5, 100, 1234, 4095] {
                let [i, j, k] = coarse.unravel(idx);
                let fine_idx = fine.index(2 * i, 2 * j, 2 * k);
                assert!((fa.values()[idx] - fb.values()[fine_idx]).norm() < 1e-12);
            }
            assert!((fa.norm_l2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_respects_cutoff() {
        let g = Grid::new(16, 10.0).unwrap();
        let f = band_limited_ensemble(&g, 1, 1, 1.5).unwrap().remove(0);
        let spec = f.spectrum();
        for (s, xi2) in spec.iter().zip(g.xi_sq()) {
            if *xi2 > 1.5 * 1.5 + 1e-9 {
                assert!(s.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_unresolved_cutoff() {
        let g = Grid::new(8, 10.0).unwrap();
        assert!(band_limited_ensemble(&g, 1, 1, 5.0).is_err());
    }
}
