//! The Schrodinger operator `H = -Delta + V` on the periodic grid: quadratic
//! form, form-bound constant, Birman-Schwinger norm, bound states, the
//! zero-energy resonance indicator and the projection onto the continuous
//! spectral subspace.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{lobpcg, Block};
use crate::error::{Error, Result};
use crate::grid::{stable_max, stable_sum, Field, Grid};
use crate::kernels::{Convolver, RadialKernel};
use crate::krylov::{cgnr, norm, smallest_eigenvalue};
use crate::potentials::{sample_potential, Potential};

const SEED: u64 = 0x5eed_0fb5;

fn check(v: &Potential, f: &Field) -> Result<()> {
    f.check_grid(v.grid())
}

/// `H f = -Delta f + V f`.
pub fn apply_hamiltonian(v: &Potential, f: &Field) -> Result<Field> {
    check(v, f)?;
    let grid = v.grid();
    let mut spec = f.spectrum();
    let xi = grid.xi_sq();
    spec.par_iter_mut().zip(xi.par_iter()).for_each(|(s, k)| *s *= *k);
    grid.inverse(&mut spec);
    spec.par_iter_mut()
        .zip(f.values().par_iter().zip(v.values().par_iter()))
        .for_each(|(out, (u, pot))| *out += u * *pot);
    Field::from_values(grid, spec)
}

/// `H` applied to two real vectors at once, packed as real and imaginary parts.
pub(crate) fn hamiltonian_real_pair(v: &Potential, shift: f64, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grid = v.grid();
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    grid.forward(&mut buf);
    let xi = grid.xi_sq();
    buf.par_iter_mut().zip(xi.par_iter()).for_each(|(s, k)| *s *= *k);
    grid.inverse(&mut buf);
    let pot = v.values();
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let c = shift + pot[i];
            (buf[i].re + c * a[i], buf[i].im + c * b[i])
        })
        .unzip()
}

/// Apply a real, even Fourier symbol to a block of real vectors, two at a time.
fn block_multiplier(grid: &Grid, block: &[Vec<f64>], symbol: &(dyn Fn(f64) -> f64 + Sync), potential: Option<(&Potential, f64)>) -> Block {
    let zero = vec![0.0; grid.len()];
    let mut out = Vec::with_capacity(block.len());
    for pair in block.chunks(2) {
        let a = &pair[0];
        let b = pair.get(1).unwrap_or(&zero);
        let (ra, rb) = match potential {
            Some((v, shift)) => hamiltonian_real_pair(v, shift, a, b),
            None => {
                let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
                grid.forward(&mut buf);
                let xi = grid.xi_sq();
                buf.par_iter_mut().zip(xi.par_iter()).for_each(|(s, k)| *s *= symbol(*k));
                grid.inverse(&mut buf);
                buf.into_iter().map(|c| (c.re, c.im)).unzip()
            }
        };
        out.push(ra);
        if pair.len() == 2 {
            out.push(rb);
        }
    }
    out
}

/// `q(u, u) = ||grad u||^2 + int V |u|^2`.
pub fn quadratic_form(v: &Potential, u: &Field) -> Result<f64> {
    check(v, u)?;
    let pot = v.values();
    let vals = u.values();
    let potential = stable_sum(vals.len(), |i| pot[i] * vals[i].norm_sqr()) * v.grid().cell_volume();
    Ok(u.gradient_norm_sq() + potential)
}

/// `sup_x int |V(y)| exp(-sqrt(2a)|x - y|) / (4 pi |x - y|) dy`.
pub fn form_bound_value(v: &Potential, a: f64) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::arg("a", format!("must be a finite nonnegative number, got {a}")));
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    let conv = Convolver::new(v.grid(), RadialKernel::Yukawa { kappa: (2.0 * a).sqrt() })?;
    let out = conv.apply_real(&v.abs_values());
    Ok(stable_max(out.len(), |i| out[i]))
}

/// Default upper end of the form-constant search.
pub const FORM_CONSTANT_MAX: f64 = 1e6;

/// Smallest `a` (to relative precision `1e-6`) with `form_bound_value(V, a) <= 1/2`.
pub fn find_form_constant(v: &Potential) -> Result<f64> {
    find_form_constant_capped(v, FORM_CONSTANT_MAX)
}

pub fn find_form_constant_capped(v: &Potential, a_max: f64) -> Result<f64> {
    let ok = |a: f64| -> Result<bool> { Ok(form_bound_value(v, a)? <= 0.5) };
    if ok(0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0f64.min(a_max);
    while !ok(hi)? {
        if hi >= a_max {
            return Err(Error::Precondition(format!("form bound still above 1/2 at a_max = {a_max:e}")));
        }
        hi = (hi * 2.0).min(a_max);
    }
    let mut lo = hi / 2.0;
    while ok(lo)? {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-12 {
            lo = 0.0;
            break;
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { hi / 2.0 };
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub const BS_MAX_ITER: usize = 500;
pub const BS_TOL: f64 = 1e-8;

/// Norm of `|V|^{1/2} R_0(-2a) |V|^{1/2}` by power iteration on the lattice kernel.
pub fn birman_schwinger_norm(v: &Potential, a: f64) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::arg("a", format!("must be a finite nonnegative number, got {a}")));
    }
    if v.is_zero() {
        return Ok(0.0);
    }
    let conv = Convolver::new(v.grid(), RadialKernel::Yukawa { kappa: (2.0 * a).sqrt() })?;
    let root: Vec<f64> = v.values().iter().map(|x| x.abs().sqrt()).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let weighted: Vec<f64> = x.iter().zip(&root).map(|(x, s)| x * s).collect();
        conv.apply_real(&weighted).into_iter().zip(&root).map(|(y, s)| y * s).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut x: Vec<f64> = root.iter().map(|s| s * (1.0 + 0.1 * rng.random_range(-1.0..1.0))).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut last = 0.0;
    for _ in 0..BS_MAX_ITER {
        let y = apply(&x);
        let mu = norm(&y);
        if mu == 0.0 {
            return Ok(0.0);
        }
        if (mu - last).abs() <= BS_TOL * mu {
            return Ok(mu);
        }
        last = mu;
        x = y.into_iter().map(|v| v / mu).collect();
    }
    Err(Error::NonConvergence { what: "Birman-Schwinger power iteration", iterations: BS_MAX_ITER })
}

/// Threshold below which eigenvalues count as bound states.
///
/// The periodic box shifts the continuum edge to about `int V / |box|`, and a
/// potential too weak to bind still produces one eigenvalue of that size.
/// Four times this shift (and never less than `1e-6` of the box ground-state
/// scale `(2 pi / L)^2`) separates such box modes from genuine bound states.
pub fn eig_tol(v: &Potential) -> f64 {
    let g = v.grid();
    let scale = (2.0 * std::f64::consts::PI / g.box_length()).powi(2);
    (1e-6 * scale).max(4.0 * v.integral().abs() / g.volume())
}

/// One eigenpair of `H`.
#[derive(Clone, Debug)]
pub struct BoundState {
    pub energy: f64,
    pub state: Field,
    /// `||H psi - lambda psi||_2 / ||psi||_2`.
    pub residual: f64,
}

pub const EIGEN_RESIDUAL_TOL: f64 = 1e-6;
const EIGEN_MAX_ITER: usize = 1500;

/// Up to `k_max` eigenpairs with `lambda < -eig_tol`, ascending.
pub fn bound_states(v: &Potential, k_max: usize) -> Result<Vec<BoundState>> {
    if k_max == 0 {
        return Err(Error::arg("k_max", "must be at least 1"));
    }
    let grid = v.grid().clone();
    let tol = eig_tol(v);
    if v.values().iter().all(|&x| x >= 0.0) {
        // -Delta + V >= 0: nothing below zero.
        return Ok(Vec::new());
    }
    let len = grid.len();
    let block = (k_max + 2).min(len);
    let sigma0 = v.max_abs().max(1.0);
    let precond = |b: &[Vec<f64>]| block_multiplier(&grid, b, &|k| 1.0 / (k + sigma0), None);
    let apply = |b: &[Vec<f64>]| block_multiplier(&grid, b, &|k| k, Some((v, 0.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let raw: Block = (0..block).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    // Smooth the random start so it carries little high-frequency energy.
    let x0 = precond(&precond(&raw));

    // Relative residual target with a safety margin.
    let target = 0.1 * EIGEN_RESIDUAL_TOL;
    let stop = |theta: &[f64], rn: &[f64]| {
        let wanted = theta.iter().take(k_max).take_while(|&&t| t < -tol).count();
        if rn[..wanted].iter().any(|&r| r > target) {
            return false;
        }
        if wanted == k_max || wanted == theta.len() {
            return true;
        }
        // Ritz values only bound eigenvalues from above, so the first unwanted
        // one certifies nothing until its own pair has converged.
        rn[wanted] <= 0.1 * tol && theta[wanted] - rn[wanted] > -tol
    };
    let out = lobpcg(apply, precond, x0, 0.01 * target, EIGEN_MAX_ITER, stop)?;

    let h3 = grid.cell_volume();
    let mut states = Vec::new();
    for (i, &lambda) in out.values.iter().enumerate().take(k_max) {
        if lambda >= -tol {
            break;
        }
        let x = &out.vectors[i];
        let scale = 1.0 / (norm(x) * h3.sqrt());
        // Deterministic sign: the largest entry is positive.
        let (imax, _) = x.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (j, &val)| if val.abs() > bv { (j, val.abs()) } else { (bi, bv) });
        let sign = if x[imax] < 0.0 { -1.0 } else { 1.0 };
        let values: Vec<Complex64> = x.iter().map(|&val| Complex64::new(sign * scale * val, 0.0)).collect();
        let state = Field::from_values(&grid, values)?;
        let hpsi = apply_hamiltonian(v, &state)?;
        let residual = hpsi.sub(&state.scaled(Complex64::new(lambda, 0.0)))?.norm_l2() / state.norm_l2();
        if residual > EIGEN_RESIDUAL_TOL {
            return Err(Error::Breakdown(format!("eigenpair {i} residual {residual:.3e} above tolerance")));
        }
        states.push(BoundState { energy: lambda, state, residual });
    }
    Ok(states)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResonanceOptions {
    /// Points per axis of the coarse lattice.
    pub coarse_n: usize,
    /// Largest admissible number of coarse lattice points.
    pub max_points: usize,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        ResonanceOptions { coarse_n: 24, max_points: 32 * 32 * 32 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResonanceReport {
    /// Smallest singular value of `I + V R_0(0)` on the coarse lattice.
    pub sigma: f64,
    /// `1 / ||(I + V R_0(0))^{-1}||_{l1 -> l1}`, estimated.
    pub sigma_l1: f64,
    pub coarse_n: usize,
}

/// Smallest singular value of the discretized `I + V R_0(0)`.
pub fn resonance_indicator(v: &Potential) -> Result<f64> {
    Ok(resonance_report(v, ResonanceOptions::default())?.sigma)
}

fn coarse_potential(v: &Potential, opts: ResonanceOptions) -> Result<Potential> {
    let points = opts.coarse_n.saturating_pow(3);
    if points > opts.max_points {
        return Err(Error::MemoryGuard { points, cap: opts.max_points });
    }
    if v.grid().n() <= opts.coarse_n {
        return Ok(v.clone());
    }
    match v.spec() {
        Some(spec) => sample_potential(spec, &Grid::new(opts.coarse_n, v.grid().box_length())?),
        None => Err(Error::Precondition(format!(
            "a raw potential on {}^3 points cannot be coarsened to {}^3; pass its analytic spec",
            v.grid().n(),
            opts.coarse_n
        ))),
    }
}

pub fn resonance_report(v: &Potential, opts: ResonanceOptions) -> Result<ResonanceReport> {
    let coarse = coarse_potential(v, opts)?;
    let cn = coarse.grid().n();
    if coarse.is_zero() {
        return Ok(ResonanceReport { sigma: 1.0, sigma_l1: 1.0, coarse_n: cn });
    }
    let conv = Convolver::new(coarse.grid(), RadialKernel::Yukawa { kappa: 0.0 })?;
    let pot = coarse.values().to_vec();
    let a = |x: &[f64]| -> Vec<f64> { conv.apply_real(x).iter().zip(&pot).zip(x).map(|((g, p), x)| x + p * g).collect() };
    let at = |x: &[f64]| -> Vec<f64> {
        let px: Vec<f64> = x.iter().zip(&pot).map(|(x, p)| x * p).collect();
        conv.apply_real(&px).iter().zip(x).map(|(g, x)| x + g).collect()
    };
    let ata = |x: &[f64]| at(&a(x));
    let len = coarse.grid().len();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lam = smallest_eigenvalue(&ata, start, 400, 1e-10)?;
    let sigma = lam.max(0.0).sqrt();

    // Hager's estimate of ||A^{-1}||_1 with CGNR solves.
    let solve = |b: &[f64]| cgnr(&a, &at, b, 1e-10, 2000).0;
    let solve_t = |b: &[f64]| cgnr(&at, &a, b, 1e-10, 2000).0;
    let mut x = solve(&vec![1.0 / len as f64; len]);
    let mut est = x.iter().map(|v| v.abs()).sum::<f64>();
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let xi: Vec<f64> = x.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = solve_t(&xi);
        let (j, zmax) = z.iter().enumerate().fold((0, 0.0f64), |(bj, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        let mut e = vec![0.0; len];
        e[j] = 1.0;
        x = solve(&e);
        est = est.max(x.iter().map(|v| v.abs()).sum::<f64>());
    }
    Ok(ResonanceReport { sigma, sigma_l1: 1.0 / est, coarse_n: cn })
}

/// Spectral summary of `H` for one potential.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub form_constant: f64,
    pub eigenpairs: Vec<BoundState>,
    pub bs_norm: f64,
    pub resonance: Option<ResonanceReport>,
    pub eig_tol: f64,
    grid: Grid,
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub k_max: usize,
    /// `None` skips the resonance diagnostic.
    pub resonance: Option<ResonanceOptions>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { k_max: 8, resonance: Some(ResonanceOptions::default()) }
    }
}

/// JSON-friendly view of [`SpectralData`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub a: f64,
    #[serde(rename = "J")]
    pub count: usize,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub bs_norm: f64,
    pub resonance_sigma: Option<f64>,
    pub resonance_sigma_l1: Option<f64>,
    pub eig_tol: f64,
}

impl SpectralData {
    pub fn compute(v: &Potential, opts: SpectralOptions) -> Result<Self> {
        let form_constant = find_form_constant(v)?;
        let bs_norm = birman_schwinger_norm(v, form_constant)?;
        let eigenpairs = bound_states(v, opts.k_max)?;
        let resonance = opts.resonance.map(|o| resonance_report(v, o)).transpose()?;
        Ok(SpectralData { form_constant, eigenpairs, bs_norm, resonance, eig_tol: eig_tol(v), grid: v.grid().clone() })
    }

    /// Assemble from precomputed pieces, e.g. when only the eigenpairs matter.
    pub fn from_parts(grid: &Grid, form_constant: f64, eigenpairs: Vec<BoundState>) -> Result<Self> {
        for pair in &eigenpairs {
            pair.state.check_grid(grid)?;
        }
        Ok(SpectralData { form_constant, eigenpairs, bs_norm: f64::NAN, resonance: None, eig_tol: f64::NAN, grid: grid.clone() })
    }

    /// No bound states and `a = 0`.
    pub fn empty(grid: &Grid) -> Self {
        SpectralData { form_constant: 0.0, eigenpairs: Vec::new(), bs_norm: 0.0, resonance: None, eig_tol: 0.0, grid: grid.clone() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.eigenpairs.len()
    }

    pub fn lowest_energy(&self) -> Option<f64> {
        self.eigenpairs.first().map(|p| p.energy)
    }

    pub fn report(&self) -> SpectralReport {
        SpectralReport {
            a: self.form_constant,
            count: self.count(),
            eigenvalues: self.eigenpairs.iter().map(|p| p.energy).collect(),
            residuals: self.eigenpairs.iter().map(|p| p.residual).collect(),
            bs_norm: self.bs_norm,
            resonance_sigma: self.resonance.map(|r| r.sigma),
            resonance_sigma_l1: self.resonance.map(|r| r.sigma_l1),
            eig_tol: self.eig_tol,
        }
    }
}

/// `P_c f = f - sum_j <f, psi_j> psi_j`.
pub fn continuous_projection(spec: &SpectralData, f: &Field) -> Result<Field> {
    f.check_grid(spec.grid())?;
    let mut out = f.clone();
    for pair in &spec.eigenpairs {
        let c = f.inner(&pair.state)?;
        out.axpy(-c, &pair.state)?;
    }
    Ok(out)
}

/// Coefficients `<f, psi_j>` of the bound-state components.
pub fn bound_coefficients(spec: &SpectralData, f: &Field) -> Result<Vec<Complex64>> {
    f.check_grid(spec.grid())?;
    spec.eigenpairs.iter().map(|p| f.inner(&p.state)).collect()
}
