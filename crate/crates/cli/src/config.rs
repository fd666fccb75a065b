//! Run configuration, read from a TOML file.
//!
//! Every task has its own table with documented defaults; the fully resolved
//! configuration (defaults filled in, `--refine` applied) is what gets echoed
//! into every artifact.

use std::path::Path;

use nlsv::{Grid, PotentialSpec, Sign};
use serde::{Deserialize, Serialize};

/// A configuration problem: which field, and why.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { field: field.into(), reason: reason.into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub box_length: f64,
}

/// Initial data `amplitude * exp(-alpha |x|^2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub alpha: f64,
    pub amplitude: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { alpha: 1.0, amplitude: 1.0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KatoTask {
    /// Local-modulus radii; absent means `2h, 4h, 8h`.
    pub radii: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumTask {
    pub k_max: usize,
    pub resonance: bool,
}

impl Default for SpectrumTask {
    fn default() -> Self {
        SpectrumTask { k_max: 8, resonance: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceTask {
    pub coarse_n: usize,
    pub max_points: usize,
}

impl Default for ResonanceTask {
    fn default() -> Self {
        let d = nlsv::ResonanceOptions::default();
        ResonanceTask { coarse_n: d.coarse_n, max_points: d.max_points }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatFitTask {
    /// Shift `a`; `None` uses the form-bound constant.
    pub a: Option<f64>,
    pub t_ladder: Vec<f64>,
}

impl Default for HeatFitTask {
    fn default() -> Self {
        HeatFitTask { a: None, t_ladder: vec![0.25, 0.5, 1.0, 2.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormEquivTask {
    pub s: f64,
    pub r: f64,
    pub a: Option<f64>,
    pub ensemble_size: usize,
    /// Mandatory for this task.
    pub seed: Option<u64>,
    pub cutoff: f64,
}

impl Default for NormEquivTask {
    fn default() -> Self {
        NormEquivTask { s: 1.0, r: 2.0, a: None, ensemble_size: 50, seed: None, cutoff: 2.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayTask {
    /// Explicit times; when absent, `count` log-spaced times on `[t_min, t_max]`.
    pub times: Option<Vec<f64>>,
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub dt: f64,
    pub project: bool,
    pub k_max: usize,
}

impl Default for DecayTask {
    fn default() -> Self {
        DecayTask { times: None, t_min: 0.5, t_max: 4.0, count: 16, dt: 1e-3, project: true, k_max: 8 }
    }
}

impl DecayTask {
    /// Requested times rounded to whole steps.
    pub fn resolved_times(&self) -> Vec<f64> {
        let raw = match &self.times {
            Some(t) => t.clone(),
            None if self.count < 2 => vec![self.t_min],
            None => {
                let ratio = self.t_max / self.t_min;
                (0..self.count).map(|i| self.t_min * ratio.powf(i as f64 / (self.count - 1) as f64)).collect()
            }
        };
        raw.iter().map(|t| (t / self.dt).round() * self.dt).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrichartzTask {
    pub s: f64,
    pub pairs: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub slices: usize,
    pub dt: f64,
    pub distorted: bool,
    pub a: Option<f64>,
    pub k_max: usize,
}

impl Default for StrichartzTask {
    fn default() -> Self {
        StrichartzTask { s: 0.5, pairs: 4, t_final: 1.0, slices: 21, dt: 1e-3, distorted: false, a: None, k_max: 8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardTask {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_t: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub ball_radius: Option<f64>,
    pub dt: f64,
    pub s: f64,
    pub sign: Sign,
    pub k_max: usize,
}

impl Default for PicardTask {
    fn default() -> Self {
        let d = nlsv::PicardConfig::new(0.1, 11);
        PicardTask {
            t_final: d.t_final,
            n_t: d.n_t,
            tol: d.tol,
            max_iter: d.max_iter,
            ball_radius: None,
            dt: d.dt,
            s: d.s,
            sign: Sign::Defocusing,
            k_max: 8,
        }
    }
}

impl PicardTask {
    pub fn picard_config(&self) -> nlsv::PicardConfig {
        nlsv::PicardConfig {
            t_final: self.t_final,
            n_t: self.n_t,
            tol: self.tol,
            max_iter: self.max_iter,
            ball_radius: self.ball_radius,
            dt: self.dt,
            s: self.s,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveTask {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub slices: usize,
    pub sign: Sign,
}

impl Default for EvolveTask {
    fn default() -> Self {
        EvolveTask { t_final: 1.0, dt: 1e-3, slices: 11, sign: Sign::Defocusing }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    /// Absent means `V = 0`.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub kato: KatoTask,
    #[serde(default)]
    pub spectrum: SpectrumTask,
    #[serde(default)]
    pub resonance: ResonanceTask,
    #[serde(default)]
    pub heat_fit: HeatFitTask,
    #[serde(default)]
    pub norm_equiv: NormEquivTask,
    #[serde(default)]
    pub decay: DecayTask,
    #[serde(default)]
    pub strichartz: StrichartzTask,
    #[serde(default)]
    pub picard: PicardTask,
    #[serde(default)]
    pub evolve: EvolveTask,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "config".into());
            ConfigError::new(field, e.message().to_string())
        })?;
        if Grid::new(cfg.grid.n, cfg.grid.box_length).is_err() {
            return Err(ConfigError::new("grid", format!("n = {} and L = {} do not describe a valid grid", cfg.grid.n, cfg.grid.box_length)));
        }
        if let Some(spec) = &cfg.potential {
            spec.validate().map_err(|e| ConfigError::new("potential", e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Doubles `n`, halves every `dt`, doubles the time quadrature of stored slices.
    pub fn refined(mut self) -> Self {
        let refine_slices = |k: usize| 2 * (k.max(1) - 1) + 1;
        self.grid.n *= 2;
        self.decay.dt /= 2.0;
        self.strichartz.dt /= 2.0;
        self.strichartz.slices = refine_slices(self.strichartz.slices);
        self.picard.dt /= 2.0;
        self.picard.n_t = refine_slices(self.picard.n_t);
        self.evolve.dt /= 2.0;
        self
    }
}
