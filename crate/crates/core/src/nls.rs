//! The cubic equation `i u_t = H u - sigma |u|^2 u`: Duhamel map and Picard
//! iteration with contraction diagnostics, a split-step evolver, mass and
//! energy, and the defocusing `H^1` bound.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersive::{admissible_pairs, step_count, strichartz_slices, AdmissiblePair, Propagator, SpatialNorm, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::grid::{sobolev_norm_standard, stable_sum, Field};
use crate::potentials::Potential;
use crate::spectral::{bound_coefficients, continuous_projection, quadratic_form, SpectralData};

/// Sign of the nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// `sigma = +1`.
    Focusing,
    /// `sigma = -1`.
    Defocusing,
}

impl Sign {
    pub fn sigma(self) -> f64 {
        match self {
            Sign::Focusing => 1.0,
            Sign::Defocusing => -1.0,
        }
    }
}

fn sigma_of(sign: Option<Sign>) -> f64 {
    sign.map_or(0.0, Sign::sigma)
}

/// `sigma |f|^2 f`.
pub fn nonlinearity(f: &Field, sign: Sign) -> Field {
    let sigma = sign.sigma();
    let values = f.values().par_iter().map(|z| z * (sigma * z.norm_sqr())).collect();
    Field::from_values(f.grid(), values).expect("same grid")
}

/// `M = ||f||_2^2`.
pub fn mass(f: &Field) -> f64 {
    f.norm_sq()
}

/// `E = int |grad f|^2 / 2 + V |f|^2 / 2 - sigma |f|^4 / 4`; `None` drops the quartic term.
pub fn energy(v: &Potential, f: &Field, sign: Option<Sign>) -> Result<f64> {
    let q = quadratic_form(v, f)?;
    let vals = f.values();
    let quartic = stable_sum(vals.len(), |i| vals[i].norm_sqr().powi(2)) * f.grid().cell_volume();
    Ok(0.5 * q - 0.25 * sigma_of(sign) * quartic)
}

fn h1_norm(f: &Field) -> f64 {
    (f.gradient_norm_sq() + f.norm_sq()).sqrt()
}

/// Stored slices of a solution with their conserved quantities.
#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    /// `None` for linear evolutions.
    pub sign: Option<Sign>,
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    /// `||u||_{H^1}` per slice.
    pub sobolev_h1: Vec<f64>,
}

impl EvolutionTrace {
    pub fn new(v: &Potential, sign: Option<Sign>, times: Vec<f64>, fields: Vec<Field>) -> Result<Self> {
        if times.len() != fields.len() {
            return Err(Error::SliceMismatch(format!("{} times for {} fields", times.len(), fields.len())));
        }
        if times.first().is_some_and(|&t| t != 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::SliceMismatch("times must start at 0 and increase strictly".into()));
        }
        let mut mass_v = Vec::with_capacity(fields.len());
        let mut energy_v = Vec::with_capacity(fields.len());
        let mut h1 = Vec::with_capacity(fields.len());
        for f in &fields {
            f.check_grid(v.grid())?;
            mass_v.push(mass(f));
            energy_v.push(energy(v, f, sign)?);
            h1.push(h1_norm(f));
        }
        Ok(EvolutionTrace { sign, times, fields, mass: mass_v, energy: energy_v, sobolev_h1: h1 })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.fields.last()
    }
}

/// Largest `sup_t ||a(t) - b(t)||_2`.
pub fn sup_l2_distance(a: &EvolutionTrace, b: &EvolutionTrace) -> Result<f64> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12) {
        return Err(Error::SliceMismatch("traces are stored on different times".into()));
    }
    a.fields
        .iter()
        .zip(&b.fields)
        .map(|(x, y)| Ok(x.sub(y)?.norm_l2()))
        .try_fold(0.0, |m, d: Result<f64>| Ok(f64::max(m, d?)))
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_s() -> f64 {
    1.0
}

/// Settings of the Picard iteration on `[0, T]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PicardConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Stored time slices, including `t = 0`.
    pub n_t: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Radius of the ball in the monitored norm; `None` uses twice the norm of the linear flow.
    #[serde(default)]
    pub ball_radius: Option<f64>,
    /// Strang step of the linear propagator (ignored for `V = 0`).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Regularity of the monitored norms.
    #[serde(default = "default_s")]
    pub s: f64,
}

impl PicardConfig {
    pub fn new(t_final: f64, n_t: usize) -> Self {
        PicardConfig { t_final, n_t, tol: default_tol(), max_iter: default_max_iter(), ball_radius: None, dt: DEFAULT_DT, s: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::arg("T", format!("must be positive, got {}", self.t_final)));
        }
        if self.n_t < 8 {
            return Err(Error::arg("n_t", format!("need at least 8 slices, got {}", self.n_t)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::arg("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter", "must be at least 1"));
        }
        if let Some(r) = self.ball_radius {
            if !(r > 0.0) {
                return Err(Error::arg("ball_radius", "must be positive"));
            }
        }
        if !(self.s >= 0.0 && self.s <= 1.0) {
            return Err(Error::arg("s", format!("monitored regularity must lie in [0, 1], got {}", self.s)));
        }
        step_count(self.spacing(), self.dt)?;
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.t_final / (self.n_t - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| k as f64 * self.spacing()).collect()
    }

    /// Pairs of the monitored norm: the energy pair and one interior pair.
    pub fn monitored_pairs(&self) -> Result<Vec<AdmissiblePair>> {
        admissible_pairs(self.s, 2)
    }
}

/// `U(Delta)` between slices with the bound-state part rotated exactly.
struct SliceFlow<'a> {
    prop: Propagator<'a>,
    steps: usize,
    spec: &'a SpectralData,
    delta: f64,
}

impl<'a> SliceFlow<'a> {
    fn new(v: &'a Potential, spec: &'a SpectralData, cfg: &PicardConfig) -> Result<Self> {
        cfg.validate()?;
        if spec.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        let steps = step_count(cfg.spacing(), cfg.dt)?;
        let dt = cfg.spacing() / steps as f64;
        Ok(SliceFlow { prop: Propagator::new(v, dt)?, steps, spec, delta: cfg.spacing() })
    }

    fn apply(&self, f: &Field) -> Result<Field> {
        if self.spec.eigenpairs.is_empty() {
            return self.prop.advance(f, self.steps);
        }
        let coeffs = bound_coefficients(self.spec, f)?;
        let mut out = self.prop.advance(&continuous_projection(self.spec, f)?, self.steps)?;
        for (c, pair) in coeffs.iter().zip(&self.spec.eigenpairs) {
            let phase = Complex64::from_polar(1.0, -self.delta * pair.energy);
            out.axpy(c * phase, &pair.state)?;
        }
        Ok(out)
    }

    fn linear(&self, u0: &Field, n_t: usize) -> Result<Vec<Field>> {
        let mut out = vec![u0.clone()];
        for _ in 1..n_t {
            let next = self.apply(out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    /// `Phi(u)(t_k) = U(t_k) u0 + i int_0^{t_k} U(t_k - s) N(u(s)) ds`, trapezoid over slices.
    fn duhamel(&self, linear: &[Field], u: &[Field], sign: Sign) -> Result<Vec<Field>> {
        let half = Complex64::new(0.5 * self.delta, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let mut nonlin_prev = nonlinearity(&u[0], sign);
        let mut integral = Field::zeros(u[0].grid());
        let mut out = vec![linear[0].clone()];
        for k in 1..u.len() {
            let nonlin = nonlinearity(&u[k], sign);
            let mut carried = integral.clone();
            carried.axpy(half, &nonlin_prev)?;
            integral = self.apply(&carried)?;
            integral.axpy(half, &nonlin)?;
            let mut phi = linear[k].clone();
            phi.axpy(i, &integral)?;
            out.push(phi);
            nonlin_prev = nonlin;
        }
        Ok(out)
    }
}

fn check_slices(trace: &EvolutionTrace, cfg: &PicardConfig) -> Result<()> {
    let want = cfg.times();
    if trace.times.len() != want.len() || trace.times.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12 * cfg.t_final) {
        return Err(Error::SliceMismatch(format!("trace has {} slices, config expects {} on [0, {}]", trace.len(), cfg.n_t, cfg.t_final)));
    }
    Ok(())
}

/// One application of the Duhamel map to the stored trajectory `trace_in`.
pub fn duhamel_map(
    v: &Potential,
    spec: &SpectralData,
    u0: &Field,
    trace_in: &EvolutionTrace,
    cfg: &PicardConfig,
    sign: Sign,
) -> Result<EvolutionTrace> {
    u0.check_grid(v.grid())?;
    check_slices(trace_in, cfg)?;
    let flow = SliceFlow::new(v, spec, cfg)?;
    let linear = flow.linear(u0, cfg.n_t)?;
    let out = flow.duhamel(&linear, &trace_in.fields, sign)?;
    EvolutionTrace::new(v, Some(sign), cfg.times(), out)
}

/// Result of a converged Picard iteration.
#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub trace: EvolutionTrace,
    /// `d_{k+1} / d_k` for successive `sup_t H^s` distances.
    pub ratios: Vec<f64>,
    pub distances: Vec<f64>,
    pub iterations: usize,
    pub ball_radius: f64,
    /// Monitored norm (max over the energy pair and one interior pair) of the limit.
    pub monitored_norm: f64,
    /// Measured `c` in `||u|| <= c ||u0||_{H^s}` for the limit.
    pub contraction_constant: f64,
    /// `sup_t ||u||_{H^2}` of the limit.
    pub h2_sup: f64,
}

fn sup_hs(fields: &[Field], s: f64) -> Result<f64> {
    fields.iter().map(|f| sobolev_norm_standard(f, s, 2.0, 0.0)).try_fold(0.0, |m, x: Result<f64>| Ok(f64::max(m, x?)))
}

fn sup_hs_distance(a: &[Field], b: &[Field], s: f64) -> Result<f64> {
    let diffs: Vec<Field> = a.iter().zip(b).map(|(x, y)| x.sub(y)).collect::<Result<_>>()?;
    sup_hs(&diffs, s)
}

/// Number of consecutive non-contracting steps tolerated.
const STALL_LIMIT: usize = 3;

/// Picard iteration `u_{k+1} = Phi(u_k)` from the linear flow.
pub fn picard_solve(v: &Potential, spec: &SpectralData, u0: &Field, cfg: &PicardConfig, sign: Sign) -> Result<PicardOutcome> {
    u0.check_grid(v.grid())?;
    let flow = SliceFlow::new(v, spec, cfg)?;
    let times = cfg.times();
    let pairs = cfg.monitored_pairs()?;
    let monitored = |fields: &[Field]| -> Result<f64> {
        Ok(strichartz_slices(&times, fields, cfg.s, &pairs, SpatialNorm::Standard { a: 0.0 })?.sup_norm)
    };
    let linear = flow.linear(u0, cfg.n_t)?;
    let ball = match cfg.ball_radius {
        Some(r) => r,
        None => 2.0 * monitored(&linear)?,
    };

    let mut u = linear.clone();
    let mut ratios = Vec::new();
    let mut distances = Vec::new();
    let mut stalled = 0;
    for iteration in 1..=cfg.max_iter {
        let next = flow.duhamel(&linear, &u, sign)?;
        let d = sup_hs_distance(&next, &u, cfg.s)?;
        if !d.is_finite() || next.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonContraction { ratio: f64::NAN, iterations: iteration });
        }
        if let Some(&prev) = distances.last() {
            let ratio: f64 = d / prev;
            ratios.push(ratio);
            stalled = if ratio >= 1.0 { stalled + 1 } else { 0 };
        }
        distances.push(d);
        let norm = monitored(&next)?;
        if norm > ball {
            return Err(Error::LeftBall { norm, radius: ball });
        }
        u = next;
        if d < cfg.tol {
            let h0 = sobolev_norm_standard(u0, cfg.s, 2.0, 0.0)?;
            let trace = EvolutionTrace::new(v, Some(sign), times.clone(), u)?;
            return Ok(PicardOutcome {
                ratios,
                distances,
                iterations: iteration,
                ball_radius: ball,
                monitored_norm: norm,
                contraction_constant: if h0 > 0.0 { norm / h0 } else { 0.0 },
                h2_sup: sup_hs(&trace.fields, 2.0)?,
                trace,
            });
        }
        if stalled >= STALL_LIMIT {
            return Err(Error::NonContraction { ratio: *ratios.last().unwrap(), iterations: iteration });
        }
    }
    Err(Error::NonContraction { ratio: ratios.last().copied().unwrap_or(f64::NAN), iterations: cfg.max_iter })
}

/// Blow-up guard: abort once `||u||_inf` exceeds this multiple of its initial value.
pub const BLOW_UP_FACTOR: f64 = 1e6;

/// Split-step solution on `[0, t_final]` stored at `slices` equally spaced times.
///
/// Each step is `e^{-i(dt/2)|xi|^2}`, the pointwise rotation
/// `e^{-i dt (V - sigma |u|^2)}`, and another kinetic half step.
pub fn evolve(v: &Potential, u0: &Field, t_final: f64, dt: f64, slices: usize, sign: Sign) -> Result<EvolutionTrace> {
    u0.check_grid(v.grid())?;
    if slices < 2 {
        return Err(Error::arg("slices", "need at least two stored times"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::arg("T", format!("must be positive, got {t_final}")));
    }
    let spacing = t_final / (slices - 1) as f64;
    let steps = step_count(spacing, dt)?;
    if steps == 0 {
        return Err(Error::arg("dt", "longer than the slice spacing"));
    }
    let grid = v.grid();
    let sigma = sign.sigma();
    let half: Vec<Complex64> = grid.xi_sq().par_iter().map(|k| Complex64::from_polar(1.0, -0.5 * dt * k)).collect();
    let full: Vec<Complex64> = half.par_iter().map(|h| h * h).collect();
    let pot = v.values();
    let sup0 = u0.max_abs();

    let mut fields = vec![u0.clone()];
    let mut times = vec![0.0];
    let mut buf = u0.values().to_vec();
    for slice in 1..slices {
        grid.forward(&mut buf);
        buf.par_iter_mut().zip(half.par_iter()).for_each(|(b, m)| *b *= m);
        for step in 0..steps {
            grid.inverse(&mut buf);
            buf.par_iter_mut().zip(pot.par_iter()).for_each(|(b, p)| {
                *b *= Complex64::from_polar(1.0, -dt * (p - sigma * b.norm_sqr()));
            });
            grid.forward(&mut buf);
            let kin = if step + 1 == steps { &half } else { &full };
            buf.par_iter_mut().zip(kin.par_iter()).for_each(|(b, m)| *b *= m);
        }
        grid.inverse(&mut buf);
        let u = Field::from_values(grid, buf.clone())?;
        let t = slice as f64 * spacing;
        let sup = u.max_abs();
        if !sup.is_finite() || (sup0 > 0.0 && sup > BLOW_UP_FACTOR * sup0) {
            return Err(Error::BlowUp { time: t, sup });
        }
        fields.push(u);
        times.push(t);
    }
    EvolutionTrace::new(v, Some(sign), times, fields)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConservationReport {
    pub mass_drift: f64,
    pub energy_drift: f64,
}

/// Relative sup drifts of mass and energy along a trace.
pub fn conservation_report(trace: &EvolutionTrace) -> Result<ConservationReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let drift = |xs: &[f64]| {
        let scale = xs[0].abs().max(f64::MIN_POSITIVE);
        xs.iter().map(|x| (x - xs[0]).abs() / scale).fold(0.0, f64::max)
    };
    Ok(ConservationReport { mass_drift: drift(&trace.mass), energy_drift: drift(&trace.energy) })
}

/// Relative slack of the `H^1` bound.
pub const H1_BOUND_TOL: f64 = 1e-4;

/// Whether `q(u, u) + (1 + a) M[u] <= 2 E0 + (1 + a) M0` (up to a relative
/// `1e-4`) at every slice of a defocusing trace. The left side is
/// `||(1 + a + H)^{1/2} u||_2^2`.
pub fn h1_bound_check(trace: &EvolutionTrace, v: &Potential, a: f64, m0: f64, e0: f64) -> Result<bool> {
    if trace.sign != Some(Sign::Defocusing) {
        return Err(Error::Precondition("the H^1 bound needs a defocusing trace".into()));
    }
    let bound = 2.0 * e0 + (1.0 + a) * m0;
    let slack = H1_BOUND_TOL * bound.abs();
    for f in &trace.fields {
        let lhs = quadratic_form(v, f)? + (1.0 + a) * mass(f);
        if lhs > bound + slack {
            return Ok(false);
        }
    }
    Ok(true)
}
