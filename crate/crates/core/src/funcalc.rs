//! Functional calculus of `H = -Delta + V`: heat semigroup, fractional powers
//! of `1 + a + H`, distorted Sobolev norms and their comparison with the
//! standard ones.
//!
//! Fractional powers use Lanczos on `1 + a + H`: the Krylov projection turns
//! the operator into a small tridiagonal matrix whose Ritz values are fed
//! through the heat-semigroup (Bochner) representation
//!
//! ```text
//! x^{-p} = 1/Gamma(p) int_0^inf t^{p-1} e^{-t x} dt,   0 < p <= 1,
//! ```
//!
//! evaluated with `t = e^tau` and the trapezoid rule. Positive powers multiply
//! by an integer power first.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::ensemble::band_limited_ensemble;
use crate::error::{Error, Result};
use crate::grid::{lp_norm, sobolev_norm_standard, stable_max, Field};
use crate::krylov::{lanczos_function, FunctionOptions};
use crate::potentials::Potential;
use crate::spectral::{continuous_projection, SpectralData};

/// Largest Strang substep of the heat flow.
pub const HEAT_MAX_STEP: f64 = 1e-2;

/// `e^{-tH} f` by Strang splitting with substeps of at most [`HEAT_MAX_STEP`].
pub fn heat_apply(v: &Potential, t: f64, f: &Field) -> Result<Field> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::arg("t", format!("heat flow needs t >= 0, got {t}")));
    }
    f.check_grid(v.grid())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let grid = v.grid();
    let xi = grid.xi_sq();
    let mut buf = f.spectrum();
    if v.is_zero() {
        buf.par_iter_mut().zip(xi.par_iter()).for_each(|(b, k)| *b *= (-t * k).exp());
        grid.inverse(&mut buf);
        return Field::from_values(grid, buf);
    }
    // The small offset keeps exact multiples of the step from rounding up.
    let steps = ((t / HEAT_MAX_STEP - 1e-9).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let half: Vec<f64> = xi.par_iter().map(|k| (-0.5 * dt * k).exp()).collect();
    let full: Vec<f64> = half.par_iter().map(|h| h * h).collect();
    let decay: Vec<f64> = v.values().par_iter().map(|p| (-dt * p).exp()).collect();
    buf.par_iter_mut().zip(half.par_iter()).for_each(|(b, m)| *b *= m);
    for step in 0..steps {
        grid.inverse(&mut buf);
        buf.par_iter_mut().zip(decay.par_iter()).for_each(|(b, m)| *b *= m);
        grid.forward(&mut buf);
        let kin = if step + 1 == steps { &half } else { &full };
        buf.par_iter_mut().zip(kin.par_iter()).for_each(|(b, m)| *b *= m);
    }
    grid.inverse(&mut buf);
    Field::from_values(grid, buf)
}

/// Constants of the Gaussian heat-kernel bound
/// `e^{-t(1+a+H)}(x, y) <= A1 t^{-3/2} exp(-t - A2 |x - y|^2 / t)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GaussianBoundFit {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    /// RMS of the log-kernel residual of the least-squares fit (a relative error).
    pub fit_residual: f64,
    pub samples: usize,
}

/// Residual above which a Gaussian fit is rejected.
pub const GAUSSIAN_FIT_THRESHOLD: f64 = 0.5;

/// Fit the Gaussian bound to kernel columns `e^{-t(1+a+H)} delta_0` on `t_ladder`.
///
/// `A2` and `log A1` come from least squares on `log k + 3/2 log t + t`
/// against `|x|^2 / t`; `A1` is then raised to the smallest value for which
/// the bound holds at every sample.
pub fn gaussian_bound_fit(v: &Potential, a: f64, t_ladder: &[f64]) -> Result<GaussianBoundFit> {
    if t_ladder.is_empty() {
        return Err(Error::arg("t_ladder", "needs at least one time"));
    }
    if t_ladder.iter().any(|&t| !(t > 0.0) || !t.is_finite()) || t_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("t_ladder", "times must be positive and strictly increasing"));
    }
    if !(a >= 0.0) {
        return Err(Error::arg("a", "must be nonnegative"));
    }
    let grid = v.grid();
    let origin = grid.origin_index();
    let mut delta = Field::zeros(grid);
    delta.values_mut()[origin] = Complex64::new(1.0 / grid.cell_volume(), 0.0);
    let reach = grid.box_length() / 4.0;

    // Samples (|x|^2 / t, log k + 3/2 log t + t).
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for &t in t_ladder {
        let col = heat_apply(v, t, &delta)?;
        let scale = (-t * (1.0 + a)).exp();
        let peak = stable_max(col.grid().len(), |i| col.values()[i].re) * scale;
        for (i, val) in col.values().iter().enumerate() {
            let k = val.re * scale;
            let x = grid.position(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            if r2.sqrt() <= reach && k > 1e-8 * peak {
                samples.push((r2 / t, k.ln() + 1.5 * t.ln() + t));
            }
        }
    }
    if samples.len() < 2 {
        return Err(Error::PoorFit { residual: f64::INFINITY, threshold: GAUSSIAN_FIT_THRESHOLD });
    }
    let n = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = samples.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx).powi(2), b + (x - mx) * (y - my)));
    if sxx == 0.0 {
        return Err(Error::PoorFit { residual: f64::INFINITY, threshold: GAUSSIAN_FIT_THRESHOLD });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let a2 = -slope;
    let rms = (samples.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    if !(a2 > 0.0) || rms > GAUSSIAN_FIT_THRESHOLD {
        return Err(Error::PoorFit { residual: rms, threshold: GAUSSIAN_FIT_THRESHOLD });
    }
    let log_a1 = samples.iter().map(|(x, y)| y + a2 * x).fold(f64::NEG_INFINITY, f64::max);
    Ok(GaussianBoundFit { a1: log_a1.exp(), a2, fit_residual: rms, samples: samples.len() })
}

const BOCHNER_START_NODES: usize = 256;
const BOCHNER_MAX_NODES: usize = 1 << 20;
const BOCHNER_TOL: f64 = 1e-6;

/// `x^{-p}` for every `x` in `xs` (all positive) via the Bochner integral,
/// trapezoid in `tau = ln t`, doubling the node count until the relative
/// change drops below `1e-6`.
pub fn bochner_negative_power(xs: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg("p", format!("Bochner exponent must lie in (0, 1], got {p}")));
    }
    let lo_x = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_x = xs.iter().copied().fold(0.0, f64::max);
    if !(lo_x > 0.0) {
        return Err(Error::Precondition(format!("operator is not positive definite (spectral value {lo_x})")));
    }
    // Left tail int_{-inf}^{tau_lo} e^{p tau} = e^{p tau_lo} / p stays below 1e-13 x^{-p}.
    let tau_lo = (-30.0f64).min((1e-13 * p).ln() / p - hi_x.ln());
    // Right tail is below e^{-60}.
    let tau_hi = 5.0f64.max((60.0 / lo_x).ln());
    let norm = 1.0 / gamma(p);
    let eval = |nodes: usize| -> Vec<f64> {
        let step = (tau_hi - tau_lo) / (nodes - 1) as f64;
        xs.iter()
            .map(|&x| {
                let mut acc = 0.0;
                for i in 0..nodes {
                    let tau = tau_lo + i as f64 * step;
                    let w = if i == 0 || i + 1 == nodes { 0.5 } else { 1.0 };
                    acc += w * (p * tau - x * tau.exp()).exp();
                }
                acc * step * norm
            })
            .collect()
    };
    let mut nodes = BOCHNER_START_NODES;
    let mut prev = eval(nodes);
    while nodes < BOCHNER_MAX_NODES {
        nodes = 2 * nodes - 1;
        let next = eval(nodes);
        let converged = prev.iter().zip(&next).all(|(a, b)| (a - b).abs() <= BOCHNER_TOL * b.abs());
        if converged {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence { what: "Bochner quadrature", iterations: nodes })
}

/// `x^{s/2}` routed through an integer power and a Bochner negative power.
fn bochner_power(xs: &[f64], s: f64) -> Result<Vec<f64>> {
    let half = s / 2.0;
    let m = half.ceil();
    let p = m - half;
    let int_part: Vec<f64> = xs.iter().map(|x| x.powi(m as i32)).collect();
    if p == 0.0 {
        return Ok(int_part);
    }
    let frac = bochner_negative_power(xs, p)?;
    Ok(int_part.iter().zip(frac).map(|(a, b)| a * b).collect())
}

fn operator(v: &Potential, shift: f64) -> impl Fn(&[Complex64]) -> Vec<Complex64> + '_ {
    move |x: &[Complex64]| {
        let grid = v.grid();
        let mut buf = x.to_vec();
        grid.forward(&mut buf);
        let xi = grid.xi_sq();
        buf.par_iter_mut().zip(xi.par_iter()).for_each(|(b, k)| *b *= *k);
        grid.inverse(&mut buf);
        buf.par_iter_mut()
            .zip(x.par_iter().zip(v.values().par_iter()))
            .for_each(|(b, (u, p))| *b += u * (shift + p));
        buf
    }
}

fn check_s(s: f64, lo: f64, hi: f64) -> Result<()> {
    if !(s >= lo && s <= hi) {
        return Err(Error::arg("s", format!("must lie in [{lo}, {hi}], got {s}")));
    }
    Ok(())
}

/// `(1 + a + H)^{s/2} f` for `s` in `[-2, 2]`.
pub fn fractional_power_apply(v: &Potential, a: f64, s: f64, f: &Field, spec: &SpectralData) -> Result<Field> {
    check_s(s, -2.0, 2.0)?;
    f.check_grid(v.grid())?;
    if s == 0.0 {
        return Ok(f.clone());
    }
    let lowest = spec.lowest_energy().unwrap_or(0.0);
    if !(1.0 + a + lowest > 0.0) {
        return Err(Error::Precondition(format!("1 + a + lambda_1 = {} is not positive", 1.0 + a + lowest)));
    }
    let op = operator(v, 1.0 + a);
    let values = lanczos_function(&op, f.values(), |theta| bochner_power(theta, s), FunctionOptions::default())?;
    Field::from_values(v.grid(), values)
}

/// `H^{s/2} P_c f` for `s` in `[0, 2]`. Ritz values below zero (remnants of
/// the removed bound states) are clipped to zero.
pub fn homogeneous_power_apply(v: &Potential, s: f64, f: &Field, spec: &SpectralData) -> Result<Field> {
    check_s(s, 0.0, 2.0)?;
    let pc = continuous_projection(spec, f)?;
    if s == 0.0 {
        return Ok(pc);
    }
    let op = operator(v, 0.0);
    let values = lanczos_function(
        &op,
        pc.values(),
        |theta| Ok(theta.iter().map(|t| t.max(0.0).powf(s / 2.0)).collect()),
        FunctionOptions::default(),
    )?;
    Field::from_values(v.grid(), values)
}

fn check_pair(s: f64, r: f64) -> Result<()> {
    check_s(s, 0.0, 2.0)?;
    if !(r > 1.0) || !r.is_finite() || (s > 0.0 && !(r < 3.0 / s)) {
        return Err(Error::arg("r", format!("need 1 < r < 3/s, got r = {r} at s = {s}")));
    }
    Ok(())
}

/// `||(1 + a + H)^{s/2} f||_{L^r}`.
pub fn distorted_sobolev_norm(v: &Potential, a: f64, s: f64, r: f64, f: &Field, spec: &SpectralData) -> Result<f64> {
    check_pair(s, r)?;
    if s == 0.0 {
        return lp_norm(f, r);
    }
    lp_norm(&fractional_power_apply(v, a, s, f, spec)?, r)
}

/// `||H^{s/2} P_c f||_{L^r}`.
pub fn distorted_sobolev_norm_homogeneous(v: &Potential, s: f64, r: f64, f: &Field, spec: &SpectralData) -> Result<f64> {
    check_pair(s, r)?;
    lp_norm(&homogeneous_power_apply(v, s, f, spec)?, r)
}

/// Extremes of distorted over standard Sobolev norms on a random ensemble.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub s: f64,
    pub r: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ensemble_size: usize,
}

impl EquivalenceReport {
    pub fn spread(&self) -> f64 {
        self.ratio_max / self.ratio_min
    }
}

/// Ensemble settings for [`norm_equivalence_scan`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub size: usize,
    pub seed: u64,
    /// Spectral support `|xi| <= cutoff`, in physical units so that it does not change with `n`.
    pub cutoff: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { size: 50, seed: 1, cutoff: 2.5 }
    }
}

/// Measure `||u||_{W_H^{s,r}} / ||u||_{W^{s,r}}` over a seeded band-limited ensemble.
pub fn norm_equivalence_scan(
    v: &Potential,
    a: f64,
    s: f64,
    r: f64,
    ensemble: EnsembleOptions,
    spec: &SpectralData,
) -> Result<EquivalenceReport> {
    check_pair(s, r)?;
    if ensemble.size == 0 {
        return Err(Error::arg("ensemble_size", "must be at least 1"));
    }
    let fields = band_limited_ensemble(v.grid(), ensemble.size, ensemble.seed, ensemble.cutoff)?;
    let ratios: Vec<f64> = fields
        .iter()
        .map(|u| Ok(distorted_sobolev_norm(v, a, s, r, u, spec)? / sobolev_norm_standard(u, s, r, a)?))
        .collect::<Result<_>>()?;
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceReport { s, r, ratio_min, ratio_max, ensemble_size: ensemble.size })
}
