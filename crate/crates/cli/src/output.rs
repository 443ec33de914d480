//! CSV row schemas and writers. Every CSV starts with a `# schema=N` line.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fourier_ed_core::training::{ExperimentRecord, Regime};

pub const SCHEMA_VERSION: u32 = 1;

/// One training restart (or a restart average, with `restart` empty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub master_seed: u64,
    pub realization: u64,
    pub restart: Option<u64>,
    pub regime: String,
    pub epsilon: f64,
    pub delta_data: f64,
    pub xi: f64,
    pub input_dim: u64,
    pub n_params: usize,
    pub ed_full: f64,
    pub ed_cut: f64,
    pub mse_min_full: f64,
    pub mse_min_cut: f64,
    pub delta_mse: f64,
    pub delta_ed: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl TrainingRow {
    pub fn new(r: &ExperimentRecord, xi: f64, input_dim: u64, n_params: usize) -> Self {
        Self {
            master_seed: r.master_seed,
            realization: r.realization,
            restart: (r.restart != u64::MAX).then_some(r.restart),
            regime: r.regime.name().to_string(),
            epsilon: r.regime.epsilon(),
            delta_data: r.regime.delta_data(),
            xi,
            input_dim,
            n_params,
            ed_full: r.ed_full,
            ed_cut: r.ed_cut,
            mse_min_full: r.mse_min_full,
            mse_min_cut: r.mse_min_cut,
            delta_mse: r.delta_mse,
            delta_ed: r.delta_ed,
            epochs: r.epochs,
            lr: r.lr,
        }
    }

    pub fn regime(&self) -> Result<Regime> {
        Ok(match self.regime.as_str() {
            "biased" => Regime::Biased,
            "unbiased" => Regime::Unbiased,
            "partial" => Regime::Partial {
                epsilon: self.epsilon,
                delta_data: self.delta_data,
            },
            other => bail!("unknown regime `{other}`"),
        })
    }

    pub fn record(&self) -> Result<ExperimentRecord> {
        Ok(ExperimentRecord {
            master_seed: self.master_seed,
            realization: self.realization,
            restart: self.restart.unwrap_or(u64::MAX),
            regime: self.regime()?,
            ed_full: self.ed_full,
            ed_cut: self.ed_cut,
            mse_min_full: self.mse_min_full,
            mse_min_cut: self.mse_min_cut,
            delta_mse: self.delta_mse,
            delta_ed: self.delta_ed,
            epochs: self.epochs,
            lr: self.lr,
        })
    }
}

/// One ED estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdRow {
    pub master_seed: u64,
    pub realization: u64,
    pub input_dim: u64,
    pub n_params: usize,
    pub d_tilde: usize,
    /// Imposed decay length; empty for raw spectra.
    pub xi: Option<f64>,
    pub purity: f64,
    pub n_param_samples: usize,
    pub dataset_size: u64,
    pub d_eff: f64,
}

/// Basis counts of one circuit layout: per-qubit rows, then a union row
/// (`qubit` empty) carrying the mask purity statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QnnRow {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangling_depth: usize,
    pub measurement_depth: usize,
    pub qubit: Option<usize>,
    pub input_functions: u128,
    pub param_functions: u128,
    pub pairs: Option<u128>,
    pub purity_mean: Option<f64>,
    pub purity_lower_bound: Option<f64>,
    pub mask_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub realization: u64,
    pub regime: String,
    pub variant: String,
    pub xi: Option<f64>,
    pub index: usize,
    pub s: f64,
}

/// Serializes rows behind the schema comment line.
pub fn to_csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut buf = format!("# schema={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let bytes = to_csv_bytes(rows)?;
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Parses rows written by [`write_csv`], checking the schema line.
pub fn read_csv<R: for<'de> Deserialize<'de>>(mut reader: impl Read) -> Result<Vec<R>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let expect = format!("# schema={SCHEMA_VERSION}");
    if first.trim_end() != expect {
        bail!("missing or unsupported schema line: `{first}`");
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_csv_file<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_csv(f)
}
