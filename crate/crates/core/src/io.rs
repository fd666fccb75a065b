//! On-disk formats: binary field files, trace manifests and CSV tables.
//!
//! A field file is three little-endian `f64` header values `n, L, t`
//! followed by the `n^3` values as `(re, im)` pairs in row-major order.
//! CSV tables start with a `# config: <json>` line that records the run
//! configuration; readers should treat `#` as a comment character.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::nls::{EvolutionTrace, Sign};
use crate::potentials::{Potential, PotentialSpec};

pub fn write_field(path: &Path, field: &Field, t: f64) -> Result<()> {
    let grid = field.grid();
    let mut out = BufWriter::new(File::create(path)?);
    for x in [grid.n() as f64, grid.box_length(), t] {
        out.write_all(&x.to_le_bytes())?;
    }
    for z in field.values() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a field file, returning the field and its time stamp.
pub fn read_field(path: &Path) -> Result<(Field, f64)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut next = |input: &mut BufReader<File>| -> Result<f64> {
        input.read_exact(&mut word).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(f64::from_le_bytes(word))
    };
    let n = next(&mut input)?;
    let l = next(&mut input)?;
    let t = next(&mut input)?;
    if !(n >= 1.0 && n.fract() == 0.0 && n <= 4096.0) {
        return Err(Error::Format(format!("{}: bad grid size {n}", path.display())));
    }
    let grid = Grid::new(n as usize, l)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = next(&mut input)?;
        let im = next(&mut input)?;
        values.push(Complex64::new(re, im));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{}: {} trailing bytes", path.display(), rest.len())));
    }
    Ok((Field::from_values(&grid, values)?, t))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridInfo {
    pub n: usize,
    #[serde(rename = "L")]
    pub box_length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceEntry {
    pub t: f64,
    pub file: String,
}

/// Index of a stored trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceManifest {
    pub grid: GridInfo,
    pub potential: Option<PotentialSpec>,
    pub sign: Option<Sign>,
    pub dt: f64,
    pub slices: Vec<SliceEntry>,
    pub config: Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Writes `manifest.json`, one `slice_XXXX.bin` per stored time and `summary.csv` into `dir`.
pub fn write_trace(dir: &Path, trace: &EvolutionTrace, potential: &Potential, dt: f64, config: &Value) -> Result<PathBuf> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    fs::create_dir_all(dir)?;
    let mut slices = Vec::with_capacity(trace.len());
    for (k, (t, f)) in trace.times.iter().zip(&trace.fields).enumerate() {
        let file = format!("slice_{k:04}.bin");
        write_field(&dir.join(&file), f, *t)?;
        slices.push(SliceEntry { t: *t, file });
    }
    let grid = potential.grid();
    let manifest = TraceManifest {
        grid: GridInfo { n: grid.n(), box_length: grid.box_length() },
        potential: potential.spec().cloned(),
        sign: trace.sign,
        dt,
        slices,
        config: config.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    let rows: Vec<Vec<f64>> = (0..trace.len())
        .map(|k| vec![trace.times[k], trace.mass[k], trace.energy[k], trace.sobolev_h1[k]])
        .collect();
    write_csv(&dir.join(SUMMARY_FILE), config, &["t", "mass", "energy", "h1"], &rows)?;
    Ok(path)
}

/// Loads a trace written by [`write_trace`], recomputing mass and energy against `potential`.
pub fn read_trace(dir: &Path, potential: &Potential) -> Result<EvolutionTrace> {
    let manifest: TraceManifest = serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    let mut times = Vec::with_capacity(manifest.slices.len());
    let mut fields = Vec::with_capacity(manifest.slices.len());
    for entry in &manifest.slices {
        let (f, t) = read_field(&dir.join(&entry.file))?;
        if t != entry.t {
            return Err(Error::Format(format!("{}: time {t} does not match the manifest ({})", entry.file, entry.t)));
        }
        times.push(t);
        fields.push(f);
    }
    EvolutionTrace::new(potential, manifest.sign, times, fields)
}

/// CSV with a `# config:` comment line, a header and numeric rows.
pub fn write_csv(path: &Path, config: &Value, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# config: {}", serde_json::to_string(config)?)?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::arg("rows", format!("row of length {} under {} columns", row.len(), header.len())));
        }
        writer.write_record(row.iter().map(|x| format_number(*x)))?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest round-trip decimal, with `inf`/`-inf`/`nan` spelled out.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Reads a table written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("{}: not a number: {s:?}", path.display()))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
