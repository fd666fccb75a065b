//! Periodic spectral discretization of a cubic box standing in for R^3.
//!
//! Points sit at `x = (i - n/2) h` along each axis, so the box is
//! `[-L/2, L/2)^3` with the origin on a grid point. Frequencies follow the
//! usual FFT ordering, `xi = 2 pi k / L` with `k` in `{-n/2, .., n/2 - 1}`.
//! Integrals are plain Riemann sums `h^3 sum f`.

use std::fmt;
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rayon::prelude::*;
use rustfft::{Fft, FftNum, FftPlanner};

use crate::error::{Error, Result};

/// Scalar type the discretization layer is generic over.
pub trait Real:
    Float + FloatConst + FftNum + FromPrimitive + ToPrimitive + fmt::Display + Default
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Block length used by every parallel reduction. Partial sums are combined
/// in a fixed order, so results do not depend on the thread count.
pub(crate) const REDUCE_BLOCK: usize = 4096;

/// Order-stable parallel sum of `term(i)` for `i` in `0..len`.
pub(crate) fn stable_sum<T, F>(len: usize, term: F) -> T
where
    T: Copy + Send + std::ops::Add<Output = T> + Default,
    F: Fn(usize) -> T + Sync,
{
    let blocks = len.div_ceil(REDUCE_BLOCK);
    let partial: Vec<T> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let Range { start, end } = b * REDUCE_BLOCK..((b + 1) * REDUCE_BLOCK).min(len);
            let mut acc = T::default();
            for i in start..end {
                acc = acc + term(i);
            }
            acc
        })
        .collect();
    partial.into_iter().fold(T::default(), |a, b| a + b)
}

/// Order-stable parallel maximum of `term(i)`.
pub(crate) fn stable_max<T, F>(len: usize, term: F) -> T
where
    T: Real,
    F: Fn(usize) -> T + Sync,
{
    (0..len.div_ceil(REDUCE_BLOCK))
        .into_par_iter()
        .map(|b| {
            (b * REDUCE_BLOCK..((b + 1) * REDUCE_BLOCK).min(len))
                .map(&term)
                .fold(T::zero(), T::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(T::zero(), T::max)
}

struct Plans<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    xi_sq: OnceLock<Vec<T>>,
}

/// Uniform periodic grid with `n` points per axis on a box of side `L`.
#[derive(Clone)]
pub struct Grid<T: Real = f64> {
    n: usize,
    box_length: T,
    plans: Arc<Plans<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

impl<T: Real> Grid<T> {
    pub fn new(n: usize, box_length: T) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n must be even, got {n}")));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("n must be at least 8, got {n}")));
        }
        if !(box_length > T::zero()) || !box_length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            xi_sq: OnceLock::new(),
        };
        Ok(Grid { n, box_length, plans: Arc::new(plans) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> T {
        self.box_length
    }

    pub fn spacing(&self) -> T {
        self.box_length / T::lit(self.n as f64)
    }

    /// Quadrature weight `h^3`.
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> T {
        self.box_length.powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn coordinate(&self, i: usize) -> T {
        T::lit(i as f64 - (self.n / 2) as f64) * self.spacing()
    }

    pub fn position(&self, idx: usize) -> [T; 3] {
        let [i, j, k] = self.unravel(idx);
        [self.coordinate(i), self.coordinate(j), self.coordinate(k)]
    }

    /// Index of the grid point at the origin.
    pub fn origin_index(&self) -> usize {
        let c = self.n / 2;
        self.index(c, c, c)
    }

    /// Signed integer wavenumber for FFT slot `m`.
    pub fn wavenumber(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    pub fn frequency(&self, idx: usize) -> [T; 3] {
        let unit = T::TAU() / self.box_length;
        let [a, b, c] = self.unravel(idx);
        [
            unit * T::lit(self.wavenumber(a) as f64),
            unit * T::lit(self.wavenumber(b) as f64),
            unit * T::lit(self.wavenumber(c) as f64),
        ]
    }

    /// Largest per-axis frequency magnitude, `pi n / L`.
    pub fn nyquist(&self) -> T {
        T::PI() * T::lit(self.n as f64) / self.box_length
    }

    /// `|xi|^2` in FFT order, computed once per grid.
    pub fn xi_sq(&self) -> &[T] {
        self.plans.xi_sq.get_or_init(|| {
            (0..self.len())
                .into_par_iter()
                .map(|idx| {
                    let [a, b, c] = self.frequency(idx);
                    a * a + b * b + c * c
                })
                .collect()
        })
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, true);
    }

    /// Inverse transform including the `1/n^3` normalization.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, false);
        let scale = T::one() / T::lit(self.len() as f64);
        data.par_iter_mut().for_each(|v| *v = *v * scale);
    }

    fn transform(&self, data: &mut [Complex<T>], forward: bool) {
        assert_eq!(data.len(), self.len(), "buffer length must be n^3");
        let n = self.n;
        let n2 = n * n;
        let fft = if forward { &self.plans.forward } else { &self.plans.inverse };
        let zero = Complex::new(T::zero(), T::zero());
        let work_len = fft.get_inplace_scratch_len();

        // Innermost axis: lines are contiguous.
        data.par_chunks_mut(n2).for_each_init(
            || vec![zero; work_len],
            |work, plane| fft.process_with_scratch(plane, work),
        );

        // Middle axis: transpose each plane in a cache-sized buffer.
        data.par_chunks_mut(n2).for_each_init(
            || (vec![zero; n2], vec![zero; work_len]),
            |(buf, work), plane| {
                for j in 0..n {
                    for k in 0..n {
                        buf[k * n + j] = plane[j * n + k];
                    }
                }
                fft.process_with_scratch(buf, work);
                for k in 0..n {
                    for j in 0..n {
                        plane[j * n + k] = buf[k * n + j];
                    }
                }
            },
        );

        // Outer axis: gather blocks of adjacent columns, transform, scatter back.
        const BLOCK: usize = 64;
        let ptr = SyncPtr(data.as_mut_ptr());
        (0..n2.div_ceil(BLOCK)).into_par_iter().for_each_init(
            || (vec![zero; BLOCK * n], vec![zero; work_len]),
            |(buf, work), blk| {
                let c0 = blk * BLOCK;
                let width = BLOCK.min(n2 - c0);
                let buf = &mut buf[..width * n];
                // SAFETY: block `blk` touches only indices i n^2 + c with
                // c in [c0, c0 + width); these sets are disjoint across blocks,
                // all lie inside `data`, and `data` is not otherwise accessed
                // until the parallel loop has finished.
                let base = ptr.get();
                unsafe {
                    for i in 0..n {
                        let row = base.add(i * n2 + c0);
                        for dc in 0..width {
                            buf[dc * n + i] = *row.add(dc);
                        }
                    }
                }
                fft.process_with_scratch(buf, work);
                unsafe {
                    for i in 0..n {
                        let row = base.add(i * n2 + c0);
                        for dc in 0..width {
                            *row.add(dc) = buf[dc * n + i];
                        }
                    }
                }
            },
        );
    }
}

/// Raw pointer that may be shared across the FFT worker threads.
#[derive(Clone, Copy)]
struct SyncPtr<T>(*mut T);

impl<T> SyncPtr<T> {
    fn get(self) -> *mut T {
        self.0
    }
}

unsafe impl<T: Send> Send for SyncPtr<T> {}
unsafe impl<T: Send> Sync for SyncPtr<T> {}

/// Complex field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T: Real = f64> {
    grid: Grid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Field { grid: grid.clone(), values: vec![Complex::new(T::zero(), T::zero()); grid.len()] }
    }

    pub fn from_values(grid: &Grid<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::arg("values", "field contains NaN or infinite entries"));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub fn from_fn<F>(grid: &Grid<T>, f: F) -> Self
    where
        F: Fn([T; 3]) -> Complex<T> + Sync,
    {
        let values = (0..grid.len()).into_par_iter().map(|idx| f(grid.position(idx))).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn from_real_fn<F>(grid: &Grid<T>, f: F) -> Self
    where
        F: Fn([T; 3]) -> T + Sync,
    {
        Self::from_fn(grid, |x| Complex::new(f(x), T::zero()))
    }

    /// Field whose spectrum (unnormalized forward transform) is `spectrum`.
    pub fn from_spectrum(grid: &Grid<T>, mut spectrum: Vec<Complex<T>>) -> Self {
        grid.inverse(&mut spectrum);
        Field { grid: grid.clone(), values: spectrum }
    }

    pub fn spectrum(&self) -> Vec<Complex<T>> {
        let mut data = self.values.clone();
        self.grid.forward(&mut data);
        data
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn check_grid(&self, other: &Grid<T>) -> Result<()> {
        if &self.grid == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        let values = self.values.par_iter().map(|v| *v * c).collect();
        Field { grid: self.grid.clone(), values }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: Complex<T>, other: &Field<T>) -> Result<()> {
        other.check_grid(&self.grid)?;
        self.values.par_iter_mut().zip(other.values.par_iter()).for_each(|(a, b)| *a = *a + c * *b);
        Ok(())
    }

    pub fn sub(&self, other: &Field<T>) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Complex::new(-T::one(), T::zero()), other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Field<T>) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Complex::new(T::one(), T::zero()), other)?;
        Ok(out)
    }

    /// Discrete `L^2` inner product `h^3 sum f conj(g)`, linear in `self`.
    pub fn inner(&self, other: &Field<T>) -> Result<Complex<T>> {
        other.check_grid(&self.grid)?;
        let sum: Complex<T> = stable_sum(self.values.len(), |i| self.values[i] * other.values[i].conj());
        Ok(sum * self.grid.cell_volume())
    }

    pub fn norm_sq(&self) -> T {
        stable_sum(self.values.len(), |i| self.values[i].norm_sqr()) * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        stable_max(self.values.len(), |i| self.values[i].norm())
    }

    /// `||grad f||_2^2` evaluated on the Fourier side.
    pub fn gradient_norm_sq(&self) -> T {
        let spec = self.spectrum();
        let xi_sq = self.grid.xi_sq();
        let sum: T = stable_sum(spec.len(), |i| xi_sq[i] * spec[i].norm_sqr());
        sum * self.grid.cell_volume() / T::lit(self.grid.len() as f64)
    }
}

/// Fourier-side operator given by its symbol on the frequency lattice.
#[derive(Clone, Debug)]
pub struct SpectralMultiplier<T: Real = f64> {
    grid: Grid<T>,
    symbol: Vec<Complex<T>>,
}

impl<T: Real> SpectralMultiplier<T> {
    pub fn from_symbol(grid: &Grid<T>, symbol: Vec<Complex<T>>) -> Result<Self> {
        if symbol.len() != grid.len() {
            return Err(Error::arg(
                "symbol",
                format!("expected {} entries, got {}", grid.len(), symbol.len()),
            ));
        }
        Ok(SpectralMultiplier { grid: grid.clone(), symbol })
    }

    pub fn from_fn<F>(grid: &Grid<T>, f: F) -> Self
    where
        F: Fn([T; 3]) -> Complex<T> + Sync,
    {
        let symbol = (0..grid.len()).into_par_iter().map(|idx| f(grid.frequency(idx))).collect();
        SpectralMultiplier { grid: grid.clone(), symbol }
    }

    /// Multiplier depending on `|xi|^2` only.
    pub fn radial<F>(grid: &Grid<T>, f: F) -> Self
    where
        F: Fn(T) -> Complex<T> + Sync,
    {
        let symbol = grid.xi_sq().par_iter().map(|&k2| f(k2)).collect();
        SpectralMultiplier { grid: grid.clone(), symbol }
    }

    pub fn identity(grid: &Grid<T>) -> Self {
        Self::radial(grid, |_| Complex::new(T::one(), T::zero()))
    }

    /// Symbol `-|xi|^2`, i.e. the Laplacian.
    pub fn laplacian(grid: &Grid<T>) -> Self {
        Self::radial(grid, |k2| Complex::new(-k2, T::zero()))
    }

    /// `(1 + a + |xi|^2)^{s/2}`.
    pub fn bessel(grid: &Grid<T>, s: T, shift: T) -> Self {
        let half = s / T::lit(2.0);
        Self::radial(grid, |k2| Complex::new((T::one() + shift + k2).powf(half), T::zero()))
    }

    /// `|xi|^s` with the zero mode set to zero.
    pub fn riesz(grid: &Grid<T>, s: T) -> Self {
        let half = s / T::lit(2.0);
        Self::radial(grid, |k2| {
            if k2 > T::zero() {
                Complex::new(k2.powf(half), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn symbol(&self) -> &[Complex<T>] {
        &self.symbol
    }

    /// Pointwise product of symbols.
    pub fn compose(&self, other: &SpectralMultiplier<T>) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let symbol = self.symbol.par_iter().zip(other.symbol.par_iter()).map(|(a, b)| *a * *b).collect();
        Ok(SpectralMultiplier { grid: self.grid.clone(), symbol })
    }
}

/// `F^{-1}[m F f]`.
pub fn apply_multiplier<T: Real>(f: &Field<T>, m: &SpectralMultiplier<T>) -> Result<Field<T>> {
    f.check_grid(&m.grid)?;
    let mut spec = f.spectrum();
    spec.par_iter_mut().zip(m.symbol.par_iter()).for_each(|(v, s)| *v = *v * *s);
    Ok(Field::from_spectrum(&m.grid, spec))
}

/// Riemann-sum `L^p` norm; `p = inf` gives the max modulus.
pub fn lp_norm<T: Real>(f: &Field<T>, p: T) -> Result<T> {
    if p.is_nan() || p < T::one() {
        return Err(Error::arg("p", format!("exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let v = f.values();
    let sum: T = if p == T::lit(2.0) {
        stable_sum(v.len(), |i| v[i].norm_sqr())
    } else {
        stable_sum(v.len(), |i| v[i].norm().powf(p))
    };
    Ok((sum * f.grid().cell_volume()).powf(T::one() / p))
}

fn check_sobolev_args<T: Real>(s: T, r: T) -> Result<()> {
    if !(s >= T::zero() && s <= T::lit(2.0)) {
        return Err(Error::arg("s", format!("regularity must lie in [0, 2], got {s}")));
    }
    if !(r > T::one()) || r.is_infinite() {
        return Err(Error::arg("r", format!("exponent must lie in (1, inf), got {r}")));
    }
    Ok(())
}

/// `||(1 + a - Delta)^{s/2} f||_{L^r}`.
pub fn sobolev_norm_standard<T: Real>(f: &Field<T>, s: T, r: T, a: T) -> Result<T> {
    check_sobolev_args(s, r)?;
    if !(a >= T::zero()) {
        return Err(Error::arg("a", format!("shift must be nonnegative, got {a}")));
    }
    if s == T::zero() {
        return lp_norm(f, r);
    }
    let g = apply_multiplier(f, &SpectralMultiplier::bessel(f.grid(), s, a))?;
    lp_norm(&g, r)
}

/// `||(-Delta)^{s/2} f||_{L^r}` with the zero frequency removed.
pub fn sobolev_norm_homogeneous<T: Real>(f: &Field<T>, s: T, r: T) -> Result<T> {
    check_sobolev_args(s, r)?;
    let g = apply_multiplier(f, &SpectralMultiplier::riesz(f.grid(), s))?;
    lp_norm(&g, r)
}
