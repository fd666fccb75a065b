//! Potential families and Kato-class diagnostics.
//!
//! All families are attractive wells written as `V = -depth * profile`, so a
//! positive `depth` gives a nonpositive potential. A negative depth flips the
//! sign. The sampled values are real; they live next to the optional analytic
//! descriptor they came from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{stable_max, Grid};
use crate::kernels::{Convolver, RadialKernel};

/// Magnitude the potential may reach on the outer shell of the box.
pub const BOUNDARY_THRESHOLD: f64 = 1e-8;

/// Number of logarithmic levels used for the weak-`L^{3/2}` quasinorm.
pub const WEAK_LADDER_LEVELS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `-depth * exp(-|x - c|^2 / width^2)`.
    GaussianWell,
    /// `-depth * exp(-decay * rho) / max(rho, core)`.
    Yukawa,
    /// `-depth * exp(1 - 1 / (1 - (rho / width)^2))` inside `rho < width`, zero outside.
    Bump,
    /// `-depth / max(rho, core)^2` for `rho <= width`, zero outside.
    InverseSquareTruncated,
    /// Pointwise sum of `children`.
    Sum,
}

/// Analytic description of a potential, as read from a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default)]
    pub depth: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub decay: f64,
    /// Regularization radius for the singular families; defaults to the grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<f64>,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<PotentialSpec>,
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    fn base(kind: PotentialKind, depth: f64) -> Self {
        PotentialSpec { kind, depth, width: 1.0, decay: 1.0, core: None, center: [0.0; 3], children: Vec::new() }
    }

    pub fn gaussian_well(depth: f64, width: f64) -> Self {
        PotentialSpec { width, ..Self::base(PotentialKind::GaussianWell, depth) }
    }

    pub fn yukawa(depth: f64, decay: f64) -> Self {
        PotentialSpec { decay, ..Self::base(PotentialKind::Yukawa, depth) }
    }

    pub fn bump(depth: f64, width: f64) -> Self {
        PotentialSpec { width, ..Self::base(PotentialKind::Bump, depth) }
    }

    pub fn inverse_square_truncated(depth: f64, radius: f64) -> Self {
        PotentialSpec { width: radius, ..Self::base(PotentialKind::InverseSquareTruncated, depth) }
    }

    pub fn sum(children: Vec<PotentialSpec>) -> Self {
        PotentialSpec { children, ..Self::base(PotentialKind::Sum, 0.0) }
    }

    pub fn with_center(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn with_core(mut self, core: f64) -> Self {
        self.core = Some(core);
        self
    }

    /// Same family with every depth multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.depth *= c;
        for child in &mut out.children {
            *child = child.scaled(c);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !self.depth.is_finite() {
            return Err(Error::arg("depth", "must be finite"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::arg("width", format!("must be positive, got {}", self.width)));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::arg("decay", format!("must be positive, got {}", self.decay)));
        }
        if let Some(core) = self.core {
            if !(core > 0.0 && core.is_finite()) {
                return Err(Error::arg("core", format!("must be positive, got {core}")));
            }
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("center", "must be finite"));
        }
        if self.kind == PotentialKind::Sum {
            if self.children.is_empty() {
                return Err(Error::arg("children", "a sum needs at least one child"));
            }
            for child in &self.children {
                child.validate()?;
            }
        }
        Ok(())
    }

    /// Pointwise value at `x`; `h` is the default core radius.
    pub fn eval(&self, x: [f64; 3], h: f64) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let rho2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let rho = rho2.sqrt();
        let core = self.core.unwrap_or(h);
        match self.kind {
            PotentialKind::GaussianWell => -self.depth * (-rho2 / (self.width * self.width)).exp(),
            PotentialKind::Yukawa => -self.depth * (-self.decay * rho).exp() / rho.max(core),
            PotentialKind::Bump => {
                let t = rho / self.width;
                if t < 1.0 {
                    -self.depth * (1.0 - 1.0 / (1.0 - t * t)).exp()
                } else {
                    0.0
                }
            }
            PotentialKind::InverseSquareTruncated => {
                if rho <= self.width {
                    -self.depth / rho.max(core).powi(2)
                } else {
                    0.0
                }
            }
            PotentialKind::Sum => self.children.iter().map(|c| c.eval(x, h)).sum(),
        }
    }
}

/// Real potential sampled on a grid.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: Option<PotentialSpec>,
    grid: Grid,
    values: Vec<f64>,
}

/// Evaluate `spec` on `grid`, rejecting families that have not decayed at the box edge.
pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> Result<Potential> {
    spec.validate()?;
    let h = grid.spacing();
    let values: Vec<f64> = {
        use rayon::prelude::*;
        (0..grid.len()).into_par_iter().map(|i| spec.eval(grid.position(i), h)).collect()
    };
    let pot = Potential { spec: Some(spec.clone()), grid: grid.clone(), values };
    let edge = pot.boundary_max();
    if !(edge < BOUNDARY_THRESHOLD) {
        return Err(Error::Incompatible(format!(
            "|V| reaches {edge:.3e} on the boundary shell (threshold {BOUNDARY_THRESHOLD:e}); enlarge L"
        )));
    }
    Ok(pot)
}

impl Potential {
    pub fn zero(grid: &Grid) -> Self {
        Potential { spec: None, grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    /// Wrap raw samples without an analytic descriptor.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg("values", format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("values", "potential contains non-finite samples"));
        }
        Ok(Potential { spec: None, grid: grid.clone(), values })
    }

    pub fn spec(&self) -> Option<&PotentialSpec> {
        self.spec.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        stable_max(self.values.len(), |i| self.values[i].abs())
    }

    /// `h^3 sum V`.
    pub fn integral(&self) -> f64 {
        crate::grid::stable_sum(self.values.len(), |i| self.values[i]) * self.grid.cell_volume()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Potential {
            spec: self.spec.as_ref().map(|s| s.scaled(c)),
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Potential) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let spec = match (&self.spec, &other.spec) {
            (Some(a), Some(b)) => Some(PotentialSpec::sum(vec![a.clone(), b.clone()])),
            _ => None,
        };
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Potential { spec, grid: self.grid.clone(), values })
    }

    /// Largest `|V|` on the outermost layer of grid points.
    pub fn boundary_max(&self) -> f64 {
        let n = self.grid.n();
        let last = n - 1;
        stable_max(self.values.len(), |idx| {
            let [i, j, k] = self.grid.unravel(idx);
            let on_shell = [i, j, k].iter().any(|&c| c == 0 || c == last);
            if on_shell {
                self.values[idx].abs()
            } else {
                0.0
            }
        })
    }

    pub(crate) fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }
}

/// `sup_x int |V(y)| / |x - y| dy` over grid points `x`.
pub fn kato_norm(v: &Potential) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    let conv = Convolver::new(v.grid(), RadialKernel::Newton)?;
    let out = conv.apply_real(&v.abs_values());
    Ok(stable_max(out.len(), |i| out[i]))
}

/// `sup_x int_{|x-y| <= r} |V(y)| / |x - y| dy` for each radius; every `r` must exceed `h`.
pub fn local_kato_modulus(v: &Potential, radii: &[f64]) -> Result<Vec<f64>> {
    let h = v.grid().spacing();
    for &r in radii {
        if !(r > h) || !r.is_finite() {
            return Err(Error::arg("radii", format!("radius {r} is not above the grid spacing {h}")));
        }
    }
    if v.is_zero() {
        return Ok(vec![0.0; radii.len()]);
    }
    let abs = v.abs_values();
    radii
        .iter()
        .map(|&radius| {
            let conv = Convolver::new(v.grid(), RadialKernel::TruncatedNewton { radius })?;
            let out = conv.apply_real(&abs);
            Ok(stable_max(out.len(), |i| out[i]))
        })
        .collect()
}

/// `sup_lambda lambda * |{|V| >= lambda}|^{2/3}` over a logarithmic ladder of levels.
///
/// The level sets are closed (`>=`) so that a potential taking a single
/// nonzero value is measured at that value rather than vanishing.
pub fn weak_l32_quasinorm(v: &Potential) -> f64 {
    weak_l32_profile(v).into_iter().map(|(_, w)| w).fold(0.0, f64::max)
}

/// The pairs `(lambda, lambda * |{|V| >= lambda}|^{2/3})` on the level ladder.
pub fn weak_l32_profile(v: &Potential) -> Vec<(f64, f64)> {
    let mut abs: Vec<f64> = v.values().iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
    if abs.is_empty() {
        return Vec::new();
    }
    abs.sort_by(|a, b| a.total_cmp(b));
    let lo = abs[0];
    let hi = abs[abs.len() - 1];
    let cell = v.grid().cell_volume();
    let levels = if hi > lo { WEAK_LADDER_LEVELS } else { 1 };
    (0..levels)
        .map(|k| {
            let lambda = if levels == 1 { hi } else { lo * (hi / lo).powf(k as f64 / (levels - 1) as f64) };
            // abs is sorted ascending: count of entries >= lambda.
            let below = abs.partition_point(|&x| x < lambda);
            let measure = (abs.len() - below) as f64 * cell;
            (lambda, lambda * measure.powf(2.0 / 3.0))
        })
        .collect()
}

/// Negative part `V_- = max(-V, 0)`, returned as a nonnegative potential.
pub fn negative_part(v: &Potential) -> Potential {
    Potential {
        spec: None,
        grid: v.grid().clone(),
        values: v.values().iter().map(|&x| (-x).max(0.0)).collect(),
    }
}

/// Summary of the potential-class diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KatoReport {
    pub global_norm: f64,
    pub local_modulus: Vec<(f64, f64)>,
    pub negative_part_norm: f64,
    pub weak_l32: f64,
}

impl KatoReport {
    pub fn compute(v: &Potential, radii: &[f64]) -> Result<Self> {
        let global_norm = kato_norm(v)?;
        let local = local_kato_modulus(v, radii)?;
        Ok(KatoReport {
            global_norm,
            local_modulus: radii.iter().copied().zip(local).collect(),
            negative_part_norm: kato_norm(&negative_part(v))?,
            weak_l32: weak_l32_quasinorm(v),
        })
    }

    /// Whether `||V_-||_K < 4 pi`, the smallness that makes the form positive.
    pub fn negative_part_small(&self) -> bool {
        self.negative_part_norm < 4.0 * std::f64::consts::PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid64() -> Grid {
        Grid::new(64, 20.0).unwrap()
    }

    #[test]
    fn gaussian_family_definition() {
        let g = Grid::new(16, 12.0).unwrap();
        let v = sample_potential(&PotentialSpec::gaussian_well(2.0, 1.0), &g).unwrap();
        for idx in [0, 17, 2000, g.origin_index()] {
            let x = g.position(idx);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            assert_eq!(v.values()[idx], -2.0 * (-r2).exp());
        }
    }

    #[test]
    fn sum_is_pointwise() {
        let g = Grid::new(16, 8.0).unwrap();
        let a = PotentialSpec::bump(1.0, 1.5).with_center([1.0, 0.0, 0.0]);
        let b = PotentialSpec::bump(-0.5, 1.0).with_center([-1.0, 0.5, 0.0]);
        let va = sample_potential(&a, &g).unwrap();
        let vb = sample_potential(&b, &g).unwrap();
        let vs = sample_potential(&PotentialSpec::sum(vec![a, b]), &g).unwrap();
        for i in 0..g.len() {
            assert_eq!(vs.values()[i], va.values()[i] + vb.values()[i]);
        }
    }

    #[test]
    fn yukawa_in_small_box_is_rejected() {
        let g = Grid::new(16, 4.0).unwrap();
        let err = sample_potential(&PotentialSpec::yukawa(1.0, 1.0), &g).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
        // Boundary magnitude on the axis is e^{-2}/2, far above the threshold.
        assert!((-2.0f64).exp() / 2.0 > BOUNDARY_THRESHOLD);
    }

    #[test]
    fn invalid_specs() {
        assert!(PotentialSpec::gaussian_well(1.0, 0.0).validate().is_err());
        assert!(PotentialSpec::yukawa(1.0, -1.0).validate().is_err());
        assert!(PotentialSpec::sum(vec![]).validate().is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = PotentialSpec::sum(vec![
            PotentialSpec::gaussian_well(2.0, 1.0),
            PotentialSpec::yukawa(0.5, 2.0).with_core(0.1).with_center([1.0, 0.0, -1.0]),
        ]);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"gaussian_well\""));
        let back: PotentialSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn zero_potential_diagnostics() {
        let g = Grid::new(16, 8.0).unwrap();
        let v = Potential::zero(&g);
        assert_eq!(kato_norm(&v).unwrap(), 0.0);
        assert_eq!(local_kato_modulus(&v, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(weak_l32_quasinorm(&v), 0.0);
        assert!(negative_part(&v).is_zero());
    }

    #[test]
    fn gaussian_kato_norm_matches_radial_oracle() {
        // Sup at the center: depth * 4 pi int_0^inf e^{-r^2} r dr = depth * 2 pi.
        let v = sample_potential(&PotentialSpec::gaussian_well(2.0, 1.0), &grid64()).unwrap();
        let k = kato_norm(&v).unwrap();
        assert!((k / (4.0 * PI) - 1.0).abs() < 0.01, "{k}");
    }

    #[test]
    fn regularized_yukawa_kato_norm() {
        // Radial oracle at x = 0 for e^{-r} / max(r, h):
        // 4 pi [ int_0^h e^{-r} r / h dr + int_h^inf e^{-r} dr ].
        let g = grid64();
        let h = g.spacing();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                (-r).exp() / r.max(h)
            })
            .collect();
        let v = Potential::from_values(&g, vals).unwrap();
        let inner = (1.0 - (-h).exp() * (1.0 + h)) / h;
        let outer = (-h).exp();
        let oracle = 4.0 * PI * (inner + outer);
        let k = kato_norm(&v).unwrap();
        assert!((k / oracle - 1.0).abs() < 0.02, "{k} vs {oracle}");
    }

    #[test]
    fn local_modulus_of_bounded_bump_scales_like_r_squared() {
        let g = grid64();
        let v = sample_potential(&PotentialSpec::bump(1.0, 3.0), &g).unwrap();
        let radii = [2.0, 1.5, 1.0];
        let m = local_kato_modulus(&v, &radii).unwrap();
        // Near the center |V| ~ depth, so the modulus is close to 2 pi r^2 max|V|.
        for (r, val) in radii.iter().zip(&m) {
            let ball = 2.0 * PI * r * r * v.max_abs();
            assert!(*val <= ball * 1.05 && *val >= 0.5 * ball, "{r}: {val} vs {ball}");
        }
        assert!(m.windows(2).all(|w| w[1] <= w[0]));
        assert!(local_kato_modulus(&v, &[g.spacing()]).is_err());
    }

    #[test]
    fn inverse_square_local_modulus() {
        // With the max(|y|, h) core the ball integral at x = 0 is
        // int_0^h 4 pi r / h^2 dr + int_h^r 4 pi / s ds = 2 pi + 4 pi ln(r / h).
        let g = grid64();
        let h = g.spacing();
        let spec = PotentialSpec::inverse_square_truncated(-1.0, 4.0).with_core(h);
        let v = sample_potential(&spec, &g).unwrap();
        let r = 0.5;
        let m = local_kato_modulus(&v, &[r]).unwrap()[0];
        let oracle = 2.0 * PI + 4.0 * PI * (r / h).ln();
        assert!((m / oracle - 1.0).abs() < 0.05, "{m} vs {oracle}");
    }

    #[test]
    fn weak_norm_of_unit_ball_indicator() {
        let g = Grid::new(64, 4.0).unwrap();
        let vals = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let v = Potential::from_values(&g, vals).unwrap();
        let w = weak_l32_quasinorm(&v);
        let oracle = (4.0 * PI / 3.0).powf(2.0 / 3.0);
        assert!((w / oracle - 1.0).abs() < 0.05, "{w} vs {oracle}");
    }

    #[test]
    fn weak_norm_of_inverse_square() {
        let g = grid64();
        let h = g.spacing();
        let vals = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).max(h * h)
            })
            .collect();
        let v = Potential::from_values(&g, vals).unwrap();
        let oracle = (4.0 * PI / 3.0).powf(2.0 / 3.0);
        // Level sets are balls of radius lambda^{-1/2}; compare where that radius
        // spans several cells and stays inside the box.
        let resolved: Vec<f64> = weak_l32_profile(&v)
            .into_iter()
            .filter(|(lambda, _)| {
                let radius = lambda.powf(-0.5);
                radius >= 6.0 * h && radius <= 0.4 * g.box_length()
            })
            .map(|(_, w)| w)
            .collect();
        assert!(resolved.len() > 15, "{}", resolved.len());
        for w in &resolved {
            assert!((w / oracle - 1.0).abs() < 0.05, "{w} vs {oracle}");
        }
        // The top level only sees the 7-point lattice ball, which inflates the sup.
        assert!(weak_l32_quasinorm(&v) >= oracle);
    }

    #[test]
    fn negative_part_cases() {
        let g = grid64();
        let pos = sample_potential(&PotentialSpec::gaussian_well(-1.0, 1.0), &g).unwrap();
        assert!(negative_part(&pos).is_zero());

        let v2 = sample_potential(&PotentialSpec::gaussian_well(2.0, 1.0), &g).unwrap();
        let r2 = KatoReport::compute(&v2, &[1.0]).unwrap();
        assert!((r2.negative_part_norm - r2.global_norm).abs() < 1e-12);

        let v19 = sample_potential(&PotentialSpec::gaussian_well(1.9, 1.0), &g).unwrap();
        let r19 = KatoReport::compute(&v19, &[1.0]).unwrap();
        assert!((r19.negative_part_norm / (1.9 * 2.0 * PI) - 1.0).abs() < 0.01);
        assert!(r19.negative_part_small());
        assert!(r19.local_modulus[0].1 <= r19.global_norm);
    }

    #[test]
    fn kato_norm_converges_under_refinement() {
        let spec = PotentialSpec::gaussian_well(2.0, 1.0);
        let coarse = kato_norm(&sample_potential(&spec, &grid64()).unwrap()).unwrap();
        let fine = kato_norm(&sample_potential(&spec, &Grid::new(128, 20.0).unwrap()).unwrap()).unwrap();
        assert!((coarse / fine - 1.0).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn kato_norm_is_homogeneous(c in -5.0f64..5.0) {
            let g = Grid::new(16, 10.0).unwrap();
            let v = sample_potential(&PotentialSpec::gaussian_well(1.0, 1.0), &g).unwrap();
            let base = kato_norm(&v).unwrap();
            let scaled = kato_norm(&v.scaled(c)).unwrap();
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * base);
            let wb = weak_l32_quasinorm(&v);
            let ws = weak_l32_quasinorm(&v.scaled(c));
            prop_assert!((ws - c.abs() * wb).abs() <= 1e-10 * wb);
        }

        #[test]
        fn kato_norm_triangle(d1 in -3.0f64..3.0, d2 in -3.0f64..3.0, shift in -2.0f64..2.0) {
            let g = Grid::new(16, 12.0).unwrap();
            let a = sample_potential(&PotentialSpec::gaussian_well(d1, 1.0), &g).unwrap();
            let b = sample_potential(&PotentialSpec::bump(d2, 1.5).with_center([shift, 0.0, 0.0]), &g).unwrap();
            let sum = kato_norm(&a.add(&b).unwrap()).unwrap();
            prop_assert!(sum <= kato_norm(&a).unwrap() + kato_norm(&b).unwrap() + 1e-8);
        }

        #[test]
        fn local_modulus_below_global(r in 0.9f64..5.0) {
            let g = Grid::new(16, 10.0).unwrap();
            let v = sample_potential(&PotentialSpec::gaussian_well(1.5, 0.9), &g).unwrap();
            let local = local_kato_modulus(&v, &[r]).unwrap()[0];
            prop_assert!(local <= kato_norm(&v).unwrap() * (1.0 + 1e-12));
        }
    }
}
