//! `nlsv`: run one numerical task from a TOML config and write its artifacts.
//!
//! Exit codes: 0 on success, 2 for configuration or precondition errors,
//! 3 for numerical failures. Failures print a JSON record to stderr and
//! also leave it in `<out>/error.json` when the directory is writable.

mod config;
mod tasks;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use config::{ConfigError, RunConfig};
use tasks::{Context, RunError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Task {
    Kato,
    Spectrum,
    Resonance,
    HeatFit,
    NormEquiv,
    Decay,
    Strichartz,
    Picard,
    Evolve,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Kato => "kato",
            Task::Spectrum => "spectrum",
            Task::Resonance => "resonance",
            Task::HeatFit => "heat-fit",
            Task::NormEquiv => "norm-equiv",
            Task::Decay => "decay",
            Task::Strichartz => "strichartz",
            Task::Picard => "picard",
            Task::Evolve => "evolve",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nlsv", version, about = "Numerics for the cubic Schrodinger equation with a potential")]
struct Cli {
    /// Task to run.
    #[arg(value_enum)]
    task: Task,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Double n, halve dt and double the stored time slices.
    #[arg(long)]
    refine: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn fail(out: &std::path::Path, code: u8, record: serde_json::Value) -> ExitCode {
    let text = serde_json::to_string_pretty(&record).unwrap_or_else(|_| record.to_string());
    eprintln!("{text}");
    if out.is_dir() {
        let _ = fs::write(out.join("error.json"), text + "\n");
    }
    ExitCode::from(code)
}

fn config_failure(out: &std::path::Path, e: ConfigError) -> ExitCode {
    fail(out, EXIT_CONFIG, json!({ "status": "error", "label": "config", "field": e.field, "reason": e.reason }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            return config_failure(&cli.out, ConfigError::new("--threads", "must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return config_failure(&cli.out, ConfigError::new("--threads", e.to_string()));
        }
    }
    let cfg = match RunConfig::load(&cli.config) {
        Ok(c) if cli.refine => c.refined(),
        Ok(c) => c,
        Err(e) => return config_failure(&cli.out, e),
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        return config_failure(&cli.out, ConfigError::new("--out", format!("{}: {e}", cli.out.display())));
    }
    let echo = json!({ "task": cli.task.name(), "refine": cli.refine, "run": cfg });
    let ctx = Context { cfg: &cfg, out: &cli.out, echo };
    let result = match cli.task {
        Task::Kato => tasks::kato(&ctx),
        Task::Spectrum => tasks::spectrum(&ctx),
        Task::Resonance => tasks::resonance(&ctx),
        Task::HeatFit => tasks::heat_fit(&ctx),
        Task::NormEquiv => tasks::norm_equiv(&ctx),
        Task::Decay => tasks::decay(&ctx),
        Task::Strichartz => tasks::strichartz(&ctx),
        Task::Picard => tasks::picard(&ctx),
        Task::Evolve => tasks::evolve_task(&ctx),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => config_failure(&cli.out, e),
        Err(RunError::Core(e)) => {
            let code = if e.is_validation() { EXIT_CONFIG } else { EXIT_NUMERICAL };
            fail(&cli.out, code, json!({ "status": "error", "label": e.label(), "message": e.to_string(), "task": cli.task.name() }))
        }
    }
}
