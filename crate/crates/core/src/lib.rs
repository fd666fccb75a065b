//! Numerical toolkit for the cubic Schrodinger equation with a real potential on R^3.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod potentials;
pub mod spectral;

mod eigen;
pub mod dispersive;
pub mod ensemble;
pub mod funcalc;
pub mod nls;
mod krylov;

pub use error::{Error, Result};
pub use grid::{
    apply_multiplier, lp_norm, sobolev_norm_homogeneous, sobolev_norm_standard, Field, Grid, Real,
    SpectralMultiplier,
};
pub use potentials::{
    kato_norm, local_kato_modulus, negative_part, sample_potential, weak_l32_profile, weak_l32_quasinorm, KatoReport, Potential,
    PotentialKind, PotentialSpec,
};

pub use ensemble::band_limited_ensemble;
pub use funcalc::{
    distorted_sobolev_norm, distorted_sobolev_norm_homogeneous, fractional_power_apply, gaussian_bound_fit, heat_apply,
    homogeneous_power_apply, norm_equivalence_scan, EnsembleOptions, EquivalenceReport, GaussianBoundFit,
};
pub use dispersive::{
    admissible_pairs, dispersive_decay_fit, linear_trace, schrodinger_propagate, strichartz_norm, t_wrap, AdmissiblePair,
    DecayFit, DecayOptions, Propagator, SpatialNorm, StrichartzReport,
};
pub use nls::{
    conservation_report, duhamel_map, energy, evolve, h1_bound_check, mass, nonlinearity, picard_solve, ConservationReport,
    EvolutionTrace, PicardConfig, PicardOutcome, Sign,
};
pub use spectral::{
    apply_hamiltonian, birman_schwinger_norm, bound_states, continuous_projection, eig_tol, find_form_constant,
    form_bound_value, quadratic_form, resonance_indicator, resonance_report, BoundState, ResonanceOptions,
    ResonanceReport, SpectralData, SpectralOptions, SpectralReport,
};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
