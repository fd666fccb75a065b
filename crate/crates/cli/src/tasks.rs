//! One runner per subcommand. Each writes its JSON/CSV artifacts into the
//! output directory and returns their paths.

use std::fs;
use std::path::{Path, PathBuf};

use nlsv::dispersive::gaussian_data;
use nlsv::io::{write_csv, write_trace};
use nlsv::{
    admissible_pairs, bound_states, conservation_report, dispersive_decay_fit, evolve, find_form_constant, gaussian_bound_fit,
    h1_bound_check, linear_trace, norm_equivalence_scan, picard_solve, resonance_report, sample_potential, strichartz_norm,
    continuous_projection, DecayOptions, EnsembleOptions, Field, Grid, KatoReport, Potential, ResonanceOptions, Sign,
    SpatialNorm, SpectralData, SpectralOptions,
};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};

pub enum RunError {
    Config(ConfigError),
    Core(nlsv::Error),
}

impl From<nlsv::Error> for RunError {
    fn from(e: nlsv::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

type Outcome = Result<Vec<PathBuf>, RunError>;

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    /// Resolved configuration echoed into every artifact.
    pub echo: Value,
}

impl Context<'_> {
    fn grid(&self) -> Result<Grid, RunError> {
        Ok(Grid::new(self.cfg.grid.n, self.cfg.grid.box_length)?)
    }

    fn potential(&self) -> Result<Potential, RunError> {
        let grid = self.grid()?;
        Ok(match &self.cfg.potential {
            Some(spec) => sample_potential(spec, &grid)?,
            None => Potential::zero(&grid),
        })
    }

    fn data(&self, grid: &Grid) -> Field {
        let d = &self.cfg.data;
        gaussian_data(grid, d.alpha).scaled(Complex64::new(d.amplitude, 0.0))
    }

    fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, RunError> {
        let mut doc = serde_json::to_value(body).map_err(nlsv::Error::from)?;
        if let Value::Object(map) = &mut doc {
            map.insert("config".into(), self.echo.clone());
        }
        let path = self.out.join(name);
        fs::write(&path, serde_json::to_string_pretty(&doc).map_err(nlsv::Error::from)? + "\n").map_err(nlsv::Error::from)?;
        Ok(path)
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, RunError> {
        let path = self.out.join(name);
        write_csv(&path, &self.echo, header, rows)?;
        Ok(path)
    }

    /// Bound states only (no form constant or resonance work); empty for `V = 0`.
    fn bound_spectrum(&self, v: &Potential, k_max: usize, a: f64) -> Result<SpectralData, RunError> {
        if v.is_zero() {
            return Ok(SpectralData::empty(v.grid()));
        }
        Ok(SpectralData::from_parts(v.grid(), a, bound_states(v, k_max)?)?)
    }
}

fn check_seed(seed: Option<u64>) -> Result<u64, ConfigError> {
    seed.ok_or_else(|| ConfigError::new("norm_equiv.seed", "ensemble tasks need an explicit seed"))
}

pub fn kato(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let h = v.grid().spacing();
    let radii = ctx.cfg.kato.radii.clone().unwrap_or_else(|| vec![2.0 * h, 4.0 * h, 8.0 * h]);
    let report = KatoReport::compute(&v, &radii)?;
    Ok(vec![ctx.write_json("kato.json", &report)?])
}

pub fn spectrum(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.spectrum;
    let resonance = task.resonance.then_some(ResonanceOptions { coarse_n: ctx.cfg.resonance.coarse_n, max_points: ctx.cfg.resonance.max_points });
    let data = SpectralData::compute(&v, SpectralOptions { k_max: task.k_max, resonance })?;
    let report = data.report();
    let rows: Vec<Vec<f64>> = data.eigenpairs.iter().enumerate().map(|(j, p)| vec![(j + 1) as f64, p.energy, p.residual]).collect();
    Ok(vec![ctx.write_json("spectrum.json", &report)?, ctx.write_csv("eigenvalues.csv", &["j", "energy", "residual"], &rows)?])
}

pub fn resonance(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let opts = ResonanceOptions { coarse_n: ctx.cfg.resonance.coarse_n, max_points: ctx.cfg.resonance.max_points };
    let report = resonance_report(&v, opts)?;
    Ok(vec![ctx.write_json("resonance.json", &report)?])
}

pub fn heat_fit(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.heat_fit;
    let a = match task.a {
        Some(a) => a,
        None => find_form_constant(&v)?,
    };
    let fit = gaussian_bound_fit(&v, a, &task.t_ladder)?;
    let path = ctx.write_json("heat_fit.json", &json!({ "a": a, "fit": fit }))?;
    let csv = ctx.write_csv("heat_fit.csv", &["a", "A1", "A2", "residual"], &[vec![a, fit.a1, fit.a2, fit.fit_residual]])?;
    Ok(vec![path, csv])
}

pub fn norm_equiv(ctx: &Context) -> Outcome {
    let task = &ctx.cfg.norm_equiv;
    let seed = check_seed(task.seed)?;
    let v = ctx.potential()?;
    let a = match task.a {
        Some(a) => a,
        None => find_form_constant(&v)?,
    };
    let spec = ctx.bound_spectrum(&v, 8, a)?;
    let ens = EnsembleOptions { size: task.ensemble_size, seed, cutoff: task.cutoff };
    let report = norm_equivalence_scan(&v, a, task.s, task.r, ens, &spec)?;
    let json_path = ctx.write_json("norm_equiv.json", &json!({ "a": a, "report": report, "spread": report.spread() }))?;
    let csv = ctx.write_csv(
        "norm_equiv.csv",
        &["s", "r", "ratio_min", "ratio_max"],
        &[vec![report.s, report.r, report.ratio_min, report.ratio_max]],
    )?;
    Ok(vec![json_path, csv])
}

pub fn decay(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.decay;
    let spec = if task.project { ctx.bound_spectrum(&v, task.k_max, 0.0)? } else { SpectralData::empty(v.grid()) };
    let f = ctx.data(v.grid());
    let times = task.resolved_times();
    let fit = dispersive_decay_fit(&v, &spec, &f, &times, DecayOptions { dt: task.dt, project: task.project })?;
    let rows: Vec<Vec<f64>> = fit.times.iter().zip(&fit.sup_norms).map(|(t, s)| vec![*t, *s]).collect();
    let csv = ctx.write_csv("decay.csv", &["t", "sup_norm"], &rows)?;
    let summary = json!({
        "exponent": fit.exponent,
        "log_amplitude": fit.log_amplitude,
        "T_wrap": fit.horizon,
        "bound_states_removed": spec.count(),
    });
    Ok(vec![csv, ctx.write_json("decay.json", &summary)?])
}

pub fn strichartz(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.strichartz;
    let a = match task.a {
        Some(a) => a,
        None => find_form_constant(&v)?,
    };
    let spec = ctx.bound_spectrum(&v, task.k_max, a)?;
    let f = continuous_projection(&spec, &ctx.data(v.grid()))?;
    let trace = linear_trace(&v, &f, task.t_final, task.slices, task.dt)?;
    let pairs = admissible_pairs(task.s, task.pairs)?;
    let norm = if task.distorted { SpatialNorm::Distorted { v: &v, a, spec: &spec } } else { SpatialNorm::Standard { a } };
    let report = strichartz_norm(&trace, task.s, &pairs, norm)?;
    let rows: Vec<Vec<f64>> = report.pairs.iter().zip(&report.per_pair_norm).map(|(p, n)| vec![p.s, p.q, p.r, *n]).collect();
    let csv = ctx.write_csv("strichartz.csv", &["s", "q", "r", "norm"], &rows)?;
    Ok(vec![csv, ctx.write_json("strichartz.json", &json!({ "a": a, "report": report }))?])
}

pub fn picard(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.picard;
    let spec = ctx.bound_spectrum(&v, task.k_max, 0.0)?;
    let u0 = ctx.data(v.grid());
    let cfg = task.picard_config();
    let outcome = picard_solve(&v, &spec, &u0, &cfg, task.sign)?;
    let rows: Vec<Vec<f64>> = outcome
        .distances
        .iter()
        .enumerate()
        .map(|(k, d)| vec![(k + 1) as f64, *d, if k == 0 { f64::NAN } else { outcome.ratios[k - 1] }])
        .collect();
    let ratios = ctx.write_csv("picard_ratios.csv", &["iteration", "distance", "ratio"], &rows)?;
    let manifest = write_trace(&ctx.out.join("picard_trace"), &outcome.trace, &v, cfg.dt, &ctx.echo)?;
    let summary = json!({
        "iterations": outcome.iterations,
        "ratios": outcome.ratios,
        "ball_radius": outcome.ball_radius,
        "monitored_norm": outcome.monitored_norm,
        "contraction_constant": outcome.contraction_constant,
        "h2_sup": outcome.h2_sup,
        "bound_states": spec.count(),
    });
    Ok(vec![ratios, manifest, ctx.write_json("picard.json", &summary)?])
}

pub fn evolve_task(ctx: &Context) -> Outcome {
    let v = ctx.potential()?;
    let task = &ctx.cfg.evolve;
    let u0 = ctx.data(v.grid());
    let trace = evolve(&v, &u0, task.t_final, task.dt, task.slices, task.sign)?;
    let manifest = write_trace(&ctx.out.join("evolve_trace"), &trace, &v, task.dt, &ctx.echo)?;
    let drift = conservation_report(&trace)?;
    let h1 = if task.sign == Sign::Defocusing {
        let a = find_form_constant(&v)?;
        Some(json!({ "a": a, "holds": h1_bound_check(&trace, &v, a, trace.mass[0], trace.energy[0])? }))
    } else {
        None
    };
    let summary = json!({ "conservation": drift, "h1_bound": h1 });
    Ok(vec![manifest, ctx.write_json("evolve.json", &summary)?])
}
