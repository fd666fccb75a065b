//! The unitary group `e^{-itH}` by Strang splitting, dispersive decay fits,
//! admissible exponent pairs and Strichartz norms of stored evolutions.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::funcalc::distorted_sobolev_norm;
use crate::grid::{lp_norm, sobolev_norm_standard, stable_sum, Field, Grid};
use crate::nls::EvolutionTrace;
use crate::potentials::Potential;
use crate::spectral::{continuous_projection, SpectralData};

/// Default time step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Strang step `e^{-i(dt/2)|xi|^2} e^{-i dt V} e^{-i(dt/2)|xi|^2}` for a fixed `dt`.
///
/// A negative `dt` steps backwards and is the exact inverse of the forward
/// step. For `V = 0` the flow is a single Fourier multiplier.
pub struct Propagator<'a> {
    v: &'a Potential,
    dt: f64,
    free: bool,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    phase: Vec<Complex64>,
}

fn unimodular(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

impl<'a> Propagator<'a> {
    pub fn new(v: &'a Potential, dt: f64) -> Result<Self> {
        if !(dt != 0.0 && dt.is_finite()) {
            return Err(Error::arg("dt", format!("time step must be finite and nonzero, got {dt}")));
        }
        let xi = v.grid().xi_sq();
        let free = v.is_zero();
        let (half, full, phase) = if free {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            (
                xi.par_iter().map(|k| unimodular(-0.5 * dt * k)).collect(),
                xi.par_iter().map(|k| unimodular(-dt * k)).collect(),
                v.values().par_iter().map(|p| unimodular(-dt * p)).collect(),
            )
        };
        Ok(Propagator { v, dt, free, half, full, phase })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential(&self) -> &Potential {
        self.v
    }

    /// `steps` Strang steps applied to `f`.
    pub fn advance(&self, f: &Field, steps: usize) -> Result<Field> {
        let grid = self.v.grid();
        f.check_grid(grid)?;
        if steps == 0 {
            return Ok(f.clone());
        }
        let mut buf = f.spectrum();
        if self.free {
            let t = self.dt * steps as f64;
            buf.par_iter_mut().zip(grid.xi_sq().par_iter()).for_each(|(b, k)| *b *= unimodular(-t * k));
        } else {
            buf.par_iter_mut().zip(self.half.par_iter()).for_each(|(b, m)| *b *= m);
            for step in 0..steps {
                grid.inverse(&mut buf);
                buf.par_iter_mut().zip(self.phase.par_iter()).for_each(|(b, m)| *b *= m);
                grid.forward(&mut buf);
                let kin = if step + 1 == steps { &self.half } else { &self.full };
                buf.par_iter_mut().zip(kin.par_iter()).for_each(|(b, m)| *b *= m);
            }
        }
        grid.inverse(&mut buf);
        Field::from_values(grid, buf)
    }
}

/// Number of `dt` steps in `span`, which must be an integer multiple.
pub(crate) fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg("dt", format!("time step must be positive, got {dt}")));
    }
    let ratio = span.abs() / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::arg("dt", format!("{dt} does not divide the time span {span}")));
    }
    Ok(steps as usize)
}

/// `e^{-itH} f` with Strang steps of size `dt`; `|t| / dt` must be an integer.
pub fn schrodinger_propagate(v: &Potential, t: f64, f: &Field, dt: f64) -> Result<Field> {
    if !t.is_finite() {
        return Err(Error::arg("t", "must be finite"));
    }
    let steps = step_count(t, dt)?;
    if steps == 0 {
        f.check_grid(v.grid())?;
        return Ok(f.clone());
    }
    Propagator::new(v, dt.copysign(t))?.advance(f, steps)
}

/// Time after which periodic images reach the origin: `L / (4 xi_rms)`,
/// with `xi_rms` the root-mean-square wavenumber of `f`. Infinite for `f = 0`
/// or for data at zero frequency only.
pub fn t_wrap(f: &Field) -> f64 {
    let spec = f.spectrum();
    let xi = f.grid().xi_sq();
    let weight = stable_sum(spec.len(), |i| spec[i].norm_sqr());
    let moment = stable_sum(spec.len(), |i| xi[i] * spec[i].norm_sqr());
    if weight == 0.0 || moment == 0.0 {
        return f64::INFINITY;
    }
    f.grid().box_length() / (4.0 * (moment / weight).sqrt())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayOptions {
    pub dt: f64,
    /// Remove bound-state components before evolving.
    pub project: bool,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions { dt: DEFAULT_DT, project: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log ||u(t)||_inf` against `log t`.
    pub exponent: f64,
    /// Intercept of the same fit, so `||u(t)||_inf ~ e^{log_amplitude} t^{exponent}`.
    pub log_amplitude: f64,
    /// Times actually reached (whole multiples of `dt`).
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub horizon: f64,
}

/// Evolve `P_c f / ||f||_1` and fit the power-law decay of its sup norm.
pub fn dispersive_decay_fit(v: &Potential, spec: &SpectralData, f: &Field, times: &[f64], opts: DecayOptions) -> Result<DecayFit> {
    f.check_grid(v.grid())?;
    if times.len() < 2 {
        return Err(Error::arg("times", "need at least two times to fit a slope"));
    }
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("times", "must be positive and strictly increasing"));
    }
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::arg("dt", format!("time step must be positive, got {}", opts.dt)));
    }
    let l1 = lp_norm(f, 1.0)?;
    if l1 == 0.0 {
        return Err(Error::arg("f", "initial data vanishes"));
    }
    let data = if opts.project { continuous_projection(spec, f)? } else { f.clone() };
    let data = data.scaled(Complex64::new(1.0 / l1, 0.0));
    let horizon = t_wrap(&data);
    let last = *times.last().unwrap();
    if last > horizon {
        return Err(Error::BeyondWrapHorizon { time: last, horizon });
    }

    let prop = Propagator::new(v, opts.dt)?;
    let mut u = data;
    let mut done = 0usize;
    let mut reached = Vec::with_capacity(times.len());
    let mut sups = Vec::with_capacity(times.len());
    for &t in times {
        let target = (t / opts.dt).round() as usize;
        if target == 0 || target <= done {
            return Err(Error::arg("times", format!("time {t} does not advance by a whole step of {}", opts.dt)));
        }
        u = prop.advance(&u, target - done)?;
        done = target;
        reached.push(target as f64 * opts.dt);
        sups.push(u.max_abs());
    }
    if sups.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::arg("f", "evolved data vanishes, nothing to fit"));
    }
    let (slope, intercept) = linear_fit(
        &reached.iter().map(|t| t.ln()).collect::<Vec<_>>(),
        &sups.iter().map(|s| s.ln()).collect::<Vec<_>>(),
    );
    Ok(DecayFit { exponent: slope, log_amplitude: intercept, times: reached, sup_norms: sups, horizon })
}

/// Least-squares line `y = slope x + intercept`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

mod infinite_as_text {
    use super::*;

    pub fn serialize<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if q.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*q)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(q) => Ok(q),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// Exponents with `2/q + 3/r = 3/2`, `2 <= r`, and `r < 3/s` (`r <= 6` at `s = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    #[serde(with = "infinite_as_text")]
    pub q: f64,
    pub r: f64,
    pub s: f64,
}

impl AdmissiblePair {
    pub fn from_r(s: f64, r: f64) -> Result<Self> {
        check_regularity(s)?;
        let cap = if s > 0.0 { (3.0 / s).min(6.0) } else { 6.0 };
        let ok = (2.0..=6.0).contains(&r) && (s == 0.0 || r < 3.0 / s);
        if !ok {
            return Err(Error::arg("r", format!("need 2 <= r < {cap} at s = {s}, got {r}")));
        }
        let rest = 1.5 - 3.0 / r;
        let q = if rest <= 0.0 { f64::INFINITY } else { 2.0 / rest };
        Ok(AdmissiblePair { q, r, s })
    }

    /// The energy pair `(inf, 2)`.
    pub fn energy(s: f64) -> Self {
        AdmissiblePair { q: f64::INFINITY, r: 2.0, s }
    }
}

fn check_regularity(s: f64) -> Result<()> {
    if !(0.0..1.5).contains(&s) {
        return Err(Error::arg("s", format!("need 0 <= s < 3/2, got {s}")));
    }
    Ok(())
}

/// `count` pairs with `r` equally spaced on `[2, min(3/s, 6))`; the first is `(inf, 2)`.
pub fn admissible_pairs(s: f64, count: usize) -> Result<Vec<AdmissiblePair>> {
    check_regularity(s)?;
    if count == 0 {
        return Err(Error::arg("count", "must be at least 1"));
    }
    let top = if s > 0.0 { (3.0 / s).min(6.0) } else { 6.0 };
    let step = (top - 2.0) / count as f64;
    (0..count).map(|i| AdmissiblePair::from_r(s, 2.0 + i as f64 * step)).collect()
}

/// Spatial norm inside a Strichartz norm.
#[derive(Clone, Copy)]
pub enum SpatialNorm<'a> {
    /// `W^{s,r}` with symbol `(1 + a + |xi|^2)^{s/2}`.
    Standard { a: f64 },
    /// `||(1 + a + H)^{s/2} u||_{L^r}`.
    Distorted { v: &'a Potential, a: f64, spec: &'a SpectralData },
}

impl SpatialNorm<'_> {
    fn eval(&self, f: &Field, s: f64, r: f64) -> Result<f64> {
        match *self {
            SpatialNorm::Standard { a } => sobolev_norm_standard(f, s, r, a),
            SpatialNorm::Distorted { v, a, spec } => distorted_sobolev_norm(v, a, s, r, f, spec),
        }
    }

    fn is_distorted(&self) -> bool {
        matches!(self, SpatialNorm::Distorted { .. })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrichartzReport {
    pub s: f64,
    pub distorted: bool,
    pub pairs: Vec<AdmissiblePair>,
    pub per_pair_norm: Vec<f64>,
    pub sup_norm: f64,
    pub interval: [f64; 2],
}

/// `L^q_t` of the spatial norm for every pair, trapezoid in time; `q = inf` takes
/// the max over stored times.
pub fn strichartz_norm(trace: &EvolutionTrace, s: f64, pairs: &[AdmissiblePair], norm: SpatialNorm<'_>) -> Result<StrichartzReport> {
    if trace.times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    strichartz_slices(&trace.times, &trace.fields, s, pairs, norm)
}

pub(crate) fn strichartz_slices(
    times: &[f64],
    fields: &[Field],
    s: f64,
    pairs: &[AdmissiblePair],
    norm: SpatialNorm<'_>,
) -> Result<StrichartzReport> {
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if pairs.is_empty() {
        return Err(Error::arg("pairs", "need at least one admissible pair"));
    }
    let mut per_pair = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let spatial: Vec<f64> = fields.iter().map(|f| norm.eval(f, s, pair.r)).collect::<Result<_>>()?;
        per_pair.push(time_norm(times, &spatial, pair.q));
    }
    if per_pair.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence { what: "Strichartz norm (non-finite value)", iterations: 0 });
    }
    let sup_norm = per_pair.iter().copied().fold(0.0, f64::max);
    Ok(StrichartzReport {
        s,
        distorted: norm.is_distorted(),
        pairs: pairs.to_vec(),
        per_pair_norm: per_pair,
        sup_norm,
        interval: [times[0], *times.last().unwrap()],
    })
}

fn time_norm(times: &[f64], g: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return g.iter().copied().fold(0.0, f64::max);
    }
    let integral: f64 = times
        .windows(2)
        .zip(g.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0].powf(q) + v[1].powf(q)))
        .sum();
    integral.powf(1.0 / q)
}

/// Linear evolution `e^{-itH} f` stored on `slices` equally spaced times in `[0, t_final]`.
pub fn linear_trace(v: &Potential, f: &Field, t_final: f64, slices: usize, dt: f64) -> Result<EvolutionTrace> {
    if slices < 2 {
        return Err(Error::arg("slices", "need at least two stored times"));
    }
    let spacing = t_final / (slices - 1) as f64;
    let steps = step_count(spacing, dt)?;
    if !(t_final > 0.0) || steps == 0 {
        return Err(Error::arg("t_final", format!("must be positive and at least one step, got {t_final}")));
    }
    let prop = Propagator::new(v, dt)?;
    let mut fields = vec![f.clone()];
    for _ in 1..slices {
        let next = prop.advance(fields.last().unwrap(), steps)?;
        fields.push(next);
    }
    let times = (0..slices).map(|k| k as f64 * spacing).collect();
    EvolutionTrace::new(v, None, times, fields)
}

/// Gaussian `e^{-alpha |x|^2}` centered at the grid origin.
pub fn gaussian_data(grid: &Grid, alpha: f64) -> Field {
    Field::from_real_fn(grid, |x| (-alpha * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{sample_potential, PotentialSpec};
    use crate::spectral::bound_states;
    use std::f64::consts::PI;

    fn rel(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().norm_l2() / b.norm_l2()
    }

    fn well(depth: f64, n: usize, l: f64) -> Potential {
        sample_potential(&PotentialSpec::gaussian_well(depth, 1.0), &Grid::new(n, l).unwrap()).unwrap()
    }

    #[test]
    fn free_gaussian_closed_form() {
        let g = Grid::new(128, 40.0).unwrap();
        let v = Potential::zero(&g);
        let f = gaussian_data(&g, 1.0);
        let t = 1.0;
        let out = schrodinger_propagate(&v, t, &f, 1e-3).unwrap();
        let z = Complex64::new(1.0, 4.0 * t);
        let exact = Field::from_fn(&g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            z.powf(-1.5) * (-r2 / z).exp()
        });
        assert!(out.sub(&exact).unwrap().max_abs() < 1e-6);
        assert_eq!(schrodinger_propagate(&v, 0.0, &f, 1e-3).unwrap(), f);
    }

    #[test]
    fn step_count_must_be_integer() {
        let v = well(2.0, 16, 10.0);
        let f = gaussian_data(v.grid(), 1.0);
        assert!(schrodinger_propagate(&v, 0.0105, &f, 1e-3).is_err());
        assert!(schrodinger_propagate(&v, 0.01, &f, 0.0).is_err());
        assert!(schrodinger_propagate(&v, 0.01, &f, 1e-3).is_ok());
    }

    #[test]
    fn unitarity_group_and_reversal() {
        let v = well(5.0, 32, 12.0);
        let f = gaussian_data(v.grid(), 0.8).scaled(Complex64::new(0.3, 0.7));
        let dt = 1e-2;
        let a = schrodinger_propagate(&v, 0.3, &f, dt).unwrap();
        assert!((a.norm_l2() / f.norm_l2() - 1.0).abs() < 1e-10);
        let b = schrodinger_propagate(&v, 0.2, &schrodinger_propagate(&v, 0.1, &f, dt).unwrap(), dt).unwrap();
        assert!(rel(&b, &a) < 1e-8);
        let back = schrodinger_propagate(&v, -0.3, &a, dt).unwrap();
        assert!(rel(&back, &f) < 1e-8);
    }

    #[test]
    fn bound_state_rotates_and_pc_commutes() {
        let v = well(10.0, 32, 12.0);
        let states = bound_states(&v, 1).unwrap();
        let spec = SpectralData::from_parts(v.grid(), 0.0, states).unwrap();
        let psi = &spec.eigenpairs[0];
        let t = 0.5;
        let out = schrodinger_propagate(&v, t, &psi.state, 1e-3).unwrap();
        let want = psi.state.scaled(unimodular(-t * psi.energy));
        assert!(rel(&out, &want) < 1e-4, "{}", rel(&out, &want));

        let f = gaussian_data(v.grid(), 0.5);
        let lhs = continuous_projection(&spec, &schrodinger_propagate(&v, t, &f, 1e-3).unwrap()).unwrap();
        let rhs = schrodinger_propagate(&v, t, &continuous_projection(&spec, &f).unwrap(), 1e-3).unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm_l2() <= 1e-4);
    }

    #[test]
    fn free_decay_exponent() {
        let g = Grid::new(128, 40.0).unwrap();
        let v = Potential::zero(&g);
        let f = gaussian_data(&g, 1.5);
        let times: Vec<f64> = (0..16).map(|i| 0.5 * 8f64.powf(i as f64 / 15.0)).collect();
        let fit = dispersive_decay_fit(&v, &SpectralData::empty(&g), &f, &times, DecayOptions::default()).unwrap();
        assert!((fit.exponent + 1.5).abs() < 0.05, "{}", fit.exponent);
        // The free L^1 -> L^inf bound, checked before periodic images arrive.
        for (t, s) in fit.times.iter().zip(&fit.sup_norms).filter(|(t, _)| **t <= 2.0) {
            assert!(*s <= (4.0 * PI * t).powf(-1.5) * (1.0 + 1e-6), "t = {t}: {s}");
        }
        let late = [1.0, 2.0 * fit.horizon];
        assert!(matches!(
            dispersive_decay_fit(&v, &SpectralData::empty(&g), &f, &late, DecayOptions::default()),
            Err(Error::BeyondWrapHorizon { .. })
        ));
    }

    #[test]
    fn bound_state_does_not_decay() {
        let v = well(10.0, 32, 12.0);
        let spec = SpectralData::from_parts(v.grid(), 0.0, bound_states(&v, 1).unwrap()).unwrap();
        let psi = spec.eigenpairs[0].state.clone();
        let times = [0.2, 0.4, 0.8];
        let opts = DecayOptions { dt: 1e-2, project: false };
        let fit = dispersive_decay_fit(&v, &spec, &psi, &times, opts).unwrap();
        assert!(fit.exponent.abs() < 0.01, "{}", fit.exponent);
    }

    #[test]
    fn pair_scaling_examples() {
        assert_eq!(admissible_pairs(0.7, 1).unwrap(), vec![AdmissiblePair::energy(0.7)]);
        assert!((AdmissiblePair::from_r(0.0, 6.0).unwrap().q - 2.0).abs() < 1e-12);
        assert!((AdmissiblePair::from_r(1.0, 12.0 / 5.0).unwrap().q - 8.0).abs() < 1e-12);
        assert!(AdmissiblePair::from_r(1.0, 3.0).is_err());
        assert!(admissible_pairs(1.5, 2).is_err());
        for p in admissible_pairs(1.0, 5).unwrap() {
            assert!(p.r >= 2.0 && p.r < 3.0 && p.q >= 2.0);
            if p.q.is_finite() {
                assert!((2.0 / p.q + 3.0 / p.r - 1.5).abs() < 1e-12);
            }
        }
        let json = serde_json::to_string(&AdmissiblePair::energy(1.0)).unwrap();
        assert_eq!(json, r#"{"q":"inf","r":2.0,"s":1.0}"#);
        let back: AdmissiblePair = serde_json::from_str(&json).unwrap();
        assert!(back.q.is_infinite());
    }

    #[test]
    fn strichartz_energy_pair_and_homogeneity() {
        let g = Grid::new(32, 20.0).unwrap();
        let v = Potential::zero(&g);
        let f = gaussian_data(&g, 1.0);
        let trace = linear_trace(&v, &f, 0.5, 11, 1e-3).unwrap();
        let pairs = admissible_pairs(0.0, 3).unwrap();
        let rep = strichartz_norm(&trace, 0.0, &pairs, SpatialNorm::Standard { a: 0.0 }).unwrap();
        assert!((rep.per_pair_norm[0] / f.norm_l2() - 1.0).abs() < 1e-8);
        assert_eq!(rep.sup_norm, rep.per_pair_norm.iter().copied().fold(0.0, f64::max));

        let c = Complex64::new(0.0, -2.5);
        let scaled = linear_trace(&v, &f.scaled(c), 0.5, 11, 1e-3).unwrap();
        let rep2 = strichartz_norm(&scaled, 0.0, &pairs, SpatialNorm::Standard { a: 0.0 }).unwrap();
        for (a, b) in rep.per_pair_norm.iter().zip(&rep2.per_pair_norm) {
            assert!((b / a - 2.5).abs() < 1e-12);
        }

        let zero = linear_trace(&v, &Field::zeros(&g), 0.5, 11, 1e-3).unwrap();
        let rep0 = strichartz_norm(&zero, 0.5, &admissible_pairs(0.5, 3).unwrap(), SpatialNorm::Standard { a: 0.0 }).unwrap();
        assert!(rep0.per_pair_norm.iter().all(|&x| x == 0.0));
    }
}
