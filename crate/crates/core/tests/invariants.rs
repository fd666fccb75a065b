//! Property tests for the structural invariants of the evolution and
//! functional-calculus layers, run on small grids.

use nlsv::dispersive::gaussian_data;
use nlsv::{
    admissible_pairs, apply_hamiltonian, band_limited_ensemble, bound_states, continuous_projection, energy, evolve,
    heat_apply, linear_trace, mass, nonlinearity, sample_potential, schrodinger_propagate, strichartz_norm, EvolutionTrace,
    Field, Grid, Potential, PotentialSpec, Sign, SpatialNorm, SpectralData,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn well(depth: f64, width: f64, n: usize) -> Potential {
    sample_potential(&PotentialSpec::gaussian_well(depth, width), &Grid::new(n, 14.0).unwrap()).unwrap()
}

fn sample(grid: &Grid, seed: u64) -> Field {
    band_limited_ensemble(grid, 1, seed, 3.0).unwrap().remove(0)
}

fn rel(a: &Field, b: &Field) -> f64 {
    a.sub(b).unwrap().norm_l2() / b.norm_l2()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn propagator_is_unitary_and_reversible(seed in any::<u64>(), depth in 0.0f64..6.0, steps in 1usize..40) {
        let v = well(depth, 1.0, 16);
        let f = sample(v.grid(), seed);
        let t = steps as f64 * 1e-2;
        let u = schrodinger_propagate(&v, t, &f, 1e-2).unwrap();
        prop_assert!((u.norm_l2() / f.norm_l2() - 1.0).abs() <= 1e-10);
        let back = schrodinger_propagate(&v, -t, &u, 1e-2).unwrap();
        prop_assert!(rel(&back, &f) <= 1e-10);
    }

    #[test]
    fn propagator_group_property(seed in any::<u64>(), k1 in 1usize..20, k2 in 1usize..20) {
        let v = well(3.0, 1.0, 16);
        let f = sample(v.grid(), seed);
        let dt = 1e-2;
        let (t1, t2) = (k1 as f64 * dt, k2 as f64 * dt);
        let split = schrodinger_propagate(&v, t2, &schrodinger_propagate(&v, t1, &f, dt).unwrap(), dt).unwrap();
        let whole = schrodinger_propagate(&v, t1 + t2, &f, dt).unwrap();
        prop_assert!(rel(&split, &whole) <= 1e-8);
    }

    #[test]
    fn hamiltonian_is_symmetric(s1 in any::<u64>(), s2 in any::<u64>(), depth in -4.0f64..4.0) {
        let v = well(depth, 1.2, 16);
        let (f, g) = (sample(v.grid(), s1), sample(v.grid(), s2));
        let lhs = apply_hamiltonian(&v, &f).unwrap().inner(&g).unwrap();
        let rhs = f.inner(&apply_hamiltonian(&v, &g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn strichartz_norm_is_homogeneous(seed in any::<u64>(), c in 0.1f64..5.0, s in 0.0f64..1.0) {
        let v = well(1.0, 1.0, 16);
        let f = sample(v.grid(), seed);
        let trace = linear_trace(&v, &f, 0.2, 5, 1e-2).unwrap();
        let scaled = EvolutionTrace::new(
            &v,
            None,
            trace.times.clone(),
            trace.fields.iter().map(|u| u.scaled(Complex64::new(c, 0.0))).collect(),
        )
        .unwrap();
        let pairs = admissible_pairs(s, 3).unwrap();
        let base = strichartz_norm(&trace, s, &pairs, SpatialNorm::Standard { a: 0.0 }).unwrap();
        let big = strichartz_norm(&scaled, s, &pairs, SpatialNorm::Standard { a: 0.0 }).unwrap();
        prop_assert!((big.sup_norm / (c * base.sup_norm) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn nonlinearity_and_energy_are_gauge_invariant(seed in any::<u64>(), theta in 0.0f64..6.3) {
        let v = well(2.0, 1.0, 16);
        let f = sample(v.grid(), seed);
        let phase = Complex64::from_polar(1.0, theta);
        let rotated = f.scaled(phase);
        for sign in [Sign::Focusing, Sign::Defocusing] {
            let n1 = nonlinearity(&rotated, sign);
            let n2 = nonlinearity(&f, sign).scaled(phase);
            prop_assert!(n1.sub(&n2).unwrap().norm_l2() <= 1e-12 * n2.norm_l2());
            let e1 = energy(&v, &rotated, Some(sign)).unwrap();
            let e2 = energy(&v, &f, Some(sign)).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-10 * e2.abs().max(1.0));
        }
    }

    #[test]
    fn split_step_conserves_mass(amp in 0.1f64..1.5, depth in 0.0f64..4.0) {
        let v = well(depth, 1.0, 16);
        let u0 = gaussian_data(v.grid(), 1.0).scaled(Complex64::new(amp, 0.0));
        let trace = evolve(&v, &u0, 0.2, 1e-2, 3, Sign::Defocusing).unwrap();
        let m0 = mass(&u0);
        prop_assert!(trace.mass.iter().all(|m| (m / m0 - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn heat_flow_preserves_positivity(t in 0.0f64..0.5, depth in -2.0f64..4.0) {
        // The spectral kinetic step is not an entrywise-positive matrix, so
        // positivity holds only once the data and V are resolved to round-off
        // (at n = 16 or 32 on this box the aliasing shows up at 1e-4..1e-7).
        let v = sample_potential(&PotentialSpec::gaussian_well(depth, 1.0), &Grid::new(48, 12.0).unwrap()).unwrap();
        let f = gaussian_data(v.grid(), 0.5);
        let out = heat_apply(&v, t, &f).unwrap();
        let scale = 1e-10 * out.max_abs();
        let min_re = out.values().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_im = out.values().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        prop_assert!(min_re >= -scale && max_im <= scale, "min re {min_re:e}, max im {max_im:e}, max {}", out.max_abs());
    }
}

#[test]
fn continuous_projection_on_random_data() {
    let v = well(10.0, 1.0, 16);
    let spec = SpectralData::from_parts(v.grid(), 0.0, bound_states(&v, 4).unwrap()).unwrap();
    assert!(spec.count() >= 1);
    for seed in 0..8 {
        let f = sample(v.grid(), seed).add(&spec.eigenpairs[0].state).unwrap();
        let once = continuous_projection(&spec, &f).unwrap();
        let twice = continuous_projection(&spec, &once).unwrap();
        assert!(twice.sub(&once).unwrap().norm_l2() <= 1e-8);
        for p in &spec.eigenpairs {
            assert!(p.state.inner(&once).unwrap().norm() <= 1e-8);
        }
    }
}
