//! Run configuration: preset defaults, then an optional JSON file, then
//! `key=value` overrides. Keys are flat and unknown keys are rejected.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use fourier_ed_core::basis::BasisSpec;
use fourier_ed_core::qnn::CircuitLayout;
use fourier_ed_core::structure::{dense_dims, DENSE_ENTRY_LIMIT};
use fourier_ed_core::tensornet::TensorLayout;
use fourier_ed_core::training::TrainingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dense,
    Tensorized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    EdVsPurity,
    EdVsDmRatio,
    TrainCompareDense,
    TrainComparePartial,
    TrainCompareTensorized,
    ScanM,
    ScanD,
    QnnLayouts,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::EdVsPurity,
        Preset::EdVsDmRatio,
        Preset::TrainCompareDense,
        Preset::TrainComparePartial,
        Preset::TrainCompareTensorized,
        Preset::ScanM,
        Preset::ScanD,
        Preset::QnnLayouts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::EdVsPurity => "ed-vs-purity",
            Preset::EdVsDmRatio => "ed-vs-dm-ratio",
            Preset::TrainCompareDense => "train-compare-dense",
            Preset::TrainComparePartial => "train-compare-partial",
            Preset::TrainCompareTensorized => "train-compare-tensorized",
            Preset::ScanM => "scan-m",
            Preset::ScanD => "scan-d",
            Preset::QnnLayouts => "qnn-layouts",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            anyhow!("unknown preset `{name}` (expected one of: {})", names.join(", "))
        })
    }

    pub fn is_training(self) -> bool {
        matches!(
            self,
            Preset::TrainCompareDense
                | Preset::TrainComparePartial
                | Preset::TrainCompareTensorized
                | Preset::ScanM
                | Preset::ScanD
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub family: Family,
    pub n_features: usize,
    pub n_params: usize,
    pub input_freqs: Vec<u32>,
    pub param_freqs: Vec<u32>,
    pub include_input_constant: bool,
    pub include_param_constant: bool,
    /// Generator rank, also where the cutoff decay starts.
    pub rank: usize,
    pub epsilons: Vec<f64>,
    pub xis: Vec<f64>,
    pub bond_dim: usize,
    pub use_mpo: bool,
    pub use_tree: bool,
    pub unbiased_arm: bool,
    /// M values for `scan-m`; D values for `scan-d` and `ed-vs-dm-ratio`.
    pub scan_values: Vec<usize>,
    pub n_param_samples: usize,
    pub dataset_size: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_train: usize,
    pub n_layers: usize,
    pub entangling_depths: Vec<usize>,
    pub measurement_depth: usize,
    pub mask_samples: usize,
    pub master_seed: u64,
    pub n_realizations: usize,
    pub n_restarts: usize,
    pub dump_spectra: bool,
    pub out: String,
}

fn one_to(n: u32) -> Vec<u32> {
    (1..=n).collect()
}

impl RunConfig {
    /// Defaults of a preset.
    pub fn preset(p: Preset) -> Self {
        let t = TrainingConfig::default();
        let base = Self {
            preset: p.name().to_string(),
            family: Family::Dense,
            n_features: 1,
            n_params: 7,
            input_freqs: one_to(8),
            param_freqs: vec![1],
            include_input_constant: true,
            include_param_constant: true,
            rank: 6,
            epsilons: vec![0.0],
            xis: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            bond_dim: 30,
            use_mpo: true,
            use_tree: true,
            unbiased_arm: true,
            scan_values: Vec::new(),
            n_param_samples: 150,
            dataset_size: 100_000,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            epochs: t.epochs,
            batch_size: t.batch_size,
            n_train: t.n_train,
            n_layers: 2,
            entangling_depths: vec![0, 1, 2],
            measurement_depth: 0,
            mask_samples: 20,
            master_seed: 0,
            n_realizations: 10,
            n_restarts: 30,
            dump_spectra: false,
            out: format!("out/{}", p.name()),
        };
        match p {
            Preset::EdVsPurity => Self {
                rank: 1,
                xis: vec![1e6, 8.0, 4.0, 2.0, 1.2, 0.8, 0.5, 0.35, 0.25, 0.15],
                n_realizations: 50,
                ..base
            },
            Preset::EdVsDmRatio => Self {
                n_params: 8,
                scan_values: vec![3, 5, 7, 9, 11, 13, 15, 17],
                xis: Vec::new(),
                n_realizations: 20,
                ..base
            },
            Preset::TrainCompareDense => base,
            Preset::TrainComparePartial => Self {
                epsilons: vec![0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1],
                xis: vec![0.25],
                unbiased_arm: false,
                n_restarts: 10,
                ..base
            },
            Preset::TrainCompareTensorized => Self {
                family: Family::Tensorized,
                n_features: 4,
                n_params: 24,
                input_freqs: one_to(3),
                rank: 2,
                xis: vec![0.25],
                n_param_samples: 200,
                n_train: 1296,
                batch_size: 12,
                n_realizations: 5,
                n_restarts: 7,
                ..base
            },
            Preset::ScanM => Self {
                family: Family::Tensorized,
                input_freqs: one_to(12),
                rank: 3,
                bond_dim: 50,
                xis: vec![0.25],
                unbiased_arm: false,
                scan_values: vec![4, 8, 16, 24, 26, 32, 40, 50],
                n_param_samples: 100,
                n_restarts: 10,
                ..base
            },
            Preset::ScanD => Self {
                family: Family::Tensorized,
                n_params: 50,
                rank: 2,
                bond_dim: 120,
                xis: vec![0.25],
                unbiased_arm: false,
                scan_values: vec![5, 11, 25, 45, 51, 55, 75, 101],
                n_param_samples: 100,
                n_restarts: 10,
                ..base
            },
            Preset::QnnLayouts => Self {
                n_features: 4,
                n_params: 8,
                input_freqs: one_to(2),
                xis: Vec::new(),
                ..base
            },
        }
    }

    pub fn preset_kind(&self) -> Result<Preset> {
        Preset::from_name(&self.preset)
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        BasisSpec::new(
            self.n_features,
            self.n_params,
            self.input_freqs.clone(),
            self.param_freqs.clone(),
            self.include_input_constant,
            self.include_param_constant,
        )
        .context("basis fields")
    }

    /// Basis spec with M replaced (`scan-m`) or with `Ω = {1..(D−1)/2}`
    /// (`scan-d`, `ed-vs-dm-ratio`).
    pub fn scanned_spec(&self, value: usize) -> Result<BasisSpec> {
        let mut c = self.clone();
        match self.preset_kind()? {
            Preset::ScanM => c.n_params = value,
            _ => {
                let d = value as u32;
                if !self.include_input_constant || d % 2 == 0 || d < 3 {
                    bail!("scan_values: D={value} must be odd and >= 3 with the input constant on");
                }
                c.input_freqs = one_to((d - 1) / 2);
            }
        }
        c.basis_spec()
    }

    /// The specs a run touches; one per scan value for scanning presets.
    pub fn all_specs(&self) -> Result<Vec<BasisSpec>> {
        match self.preset_kind()? {
            Preset::ScanM | Preset::ScanD | Preset::EdVsDmRatio => {
                self.scan_values.iter().map(|&v| self.scanned_spec(v)).collect()
            }
            _ => Ok(vec![self.basis_spec()?]),
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            epochs: self.epochs,
            batch_size: self.batch_size,
            n_train: self.n_train,
            seed: self.master_seed,
        }
    }

    pub fn layout(&self) -> TensorLayout {
        TensorLayout {
            bond_dim: self.bond_dim,
            use_mpo: self.use_mpo,
            use_tree: self.use_tree,
        }
    }

    pub fn circuit(&self, depth: usize) -> CircuitLayout {
        CircuitLayout::uniform(self.n_features, self.n_layers, depth, self.measurement_depth)
    }

    /// Static checks of every precondition that can be decided before running.
    pub fn validate(&self) -> Result<()> {
        let preset = self.preset_kind()?;
        let specs = self.all_specs()?;
        if specs.is_empty() {
            bail!("scan_values: the scan grid is empty");
        }
        if self.n_realizations == 0 {
            bail!("n_realizations: must be >= 1");
        }
        if self.n_param_samples == 0 {
            bail!("n_param_samples: must be >= 1");
        }
        if self.dataset_size < 19 {
            bail!("dataset_size: must be >= 19 so that the ED scale factor exceeds 1");
        }
        if self.xis.iter().any(|&x| !(x > 0.0)) {
            bail!("xis: every decay length must be positive");
        }
        if self.epsilons.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            bail!("epsilons: every perturbation strength must be finite and >= 0");
        }
        match preset {
            Preset::EdVsPurity | Preset::EdVsDmRatio | Preset::QnnLayouts => {
                if self.family != Family::Dense {
                    bail!("family: preset `{}` runs dense models only", self.preset);
                }
            }
            _ => {}
        }
        if preset == Preset::EdVsPurity && self.xis.is_empty() {
            bail!("xis: ed-vs-purity needs at least one decay length");
        }
        for spec in &specs {
            self.check_size(spec)?;
            if preset == Preset::EdVsPurity && self.rank >= spec.input_dim() as usize {
                bail!("rank: must be below D={}", spec.input_dim());
            }
        }
        if preset.is_training() {
            if self.xis.is_empty() || self.epsilons.is_empty() {
                bail!("xis/epsilons: training presets need at least one value of each");
            }
            if self.n_restarts == 0 {
                bail!("n_restarts: must be >= 1");
            }
            self.training().validate().context("training fields")?;
            for spec in &specs {
                let r = self.feature_rank(spec)?;
                if self.rank < 1 || self.rank >= r {
                    bail!("rank: need 1 <= rank < {r} for {}", describe(spec));
                }
            }
        }
        if preset == Preset::QnnLayouts {
            if self.entangling_depths.is_empty() {
                bail!("entangling_depths: need at least one depth");
            }
            let spec = &specs[0];
            let expect = self.n_layers * self.n_features;
            if spec.n_params != expect {
                bail!("n_params: a layout with {} qubits and {} layers has {expect} parameters",
                    self.n_features, self.n_layers);
            }
            if self.input_freqs != one_to(self.n_layers as u32) || self.param_freqs != [1] {
                bail!("input_freqs/param_freqs: layouts use input frequencies 1..n_layers and parameter frequency 1");
            }
            for &d in &self.entangling_depths {
                self.circuit(d).validate().context("circuit layout")?;
            }
        }
        Ok(())
    }

    /// Spectrum length of a model built for `spec`.
    pub fn feature_rank(&self, spec: &BasisSpec) -> Result<usize> {
        Ok(match self.family {
            Family::Dense => spec.input_dim() as usize,
            Family::Tensorized => self.layout().feature_rank(spec)?,
        })
    }

    fn check_size(&self, spec: &BasisSpec) -> Result<()> {
        match self.family {
            Family::Dense => {
                if dense_dims(spec).is_err() {
                    bail!(
                        "family: dense model with {} needs {} entries, above the guard of {}; \
                         use family=tensorized",
                        describe(spec),
                        spec.input_dim().saturating_mul(spec.param_dim()),
                        DENSE_ENTRY_LIMIT
                    );
                }
            }
            Family::Tensorized => {
                if self.bond_dim == 0 {
                    bail!("bond_dim: must be >= 1");
                }
                self.layout().feature_rank(spec).context("family=tensorized")?;
            }
        }
        Ok(())
    }

    /// Human-readable derived quantities, without running anything.
    pub fn report(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        writeln!(out, "preset: {}", self.preset)?;
        writeln!(out, "family: {}", match self.family {
            Family::Dense => "dense",
            Family::Tensorized => "tensorized",
        })?;
        for spec in self.all_specs()? {
            let (d, k) = (spec.input_dim(), spec.param_dim());
            write!(out, "{}: ", describe(&spec))?;
            match self.family {
                Family::Dense => {
                    let bytes = d * k * 8;
                    write!(out, "dense feasible, Γ takes {}", human_bytes(bytes))?;
                }
                Family::Tensorized => {
                    let chi = self.bond_dim as u128;
                    let bytes = spec.n_params as u128 * spec.d_tilde() as u128 * chi * chi * 8;
                    write!(
                        out,
                        "tensorized, spectrum length {}, V cores take at most {}",
                        self.feature_rank(&spec)?,
                        human_bytes(bytes)
                    )?;
                }
            }
            writeln!(out, ", {} quadrature nodes per input dimension", spec.required_input_nodes())?;
        }
        match self.preset_kind()? {
            Preset::QnnLayouts => writeln!(out, "layouts: {}, mask samples: {}", self.entangling_depths.len(), self.mask_samples)?,
            p => {
                let tasks = self.n_realizations * self.all_specs()?.len();
                write!(out, "realizations: {} (tasks: {tasks})", self.n_realizations)?;
                if p.is_training() {
                    write!(out, ", restarts: {}", self.n_restarts)?;
                }
                writeln!(out)?;
            }
        }
        Ok(out)
    }
}

fn describe(spec: &BasisSpec) -> String {
    format!(
        "D={} (d={}, N={}), K={} (d̃={}, M={})",
        spec.input_dim(),
        spec.d(),
        spec.n_features,
        pow_label(spec.d_tilde(), spec.n_params, spec.param_dim()),
        spec.d_tilde(),
        spec.n_params
    )
}

fn pow_label(base: usize, exp: usize, value: u128) -> String {
    if value > 1_000_000_000 {
        format!("{base}^{exp}")
    } else {
        value.to_string()
    }
}

fn human_bytes(b: u128) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut v = b as f64;
    let mut i = 0;
    while v >= 1024.0 && i + 1 < UNITS.len() {
        v /= 1024.0;
        i += 1;
    }
    format!("{v:.1} {}", UNITS[i])
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Parses a `key=value` override; the value is JSON if it parses, else a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Merges preset defaults, file contents and overrides, then validates.
///
/// `preset` may be `None` when the file names one.
pub fn load(preset: Option<&str>, file: Option<(&str, &str)>, overrides: &[String]) -> Result<RunConfig> {
    let file_map = match file {
        Some((path, text)) => match serde_json::from_str::<Value>(text)
            .with_context(|| format!("{path}: not valid JSON"))?
        {
            Value::Object(m) => Some((path, text, m)),
            _ => bail!("{path}: expected a JSON object at the top level"),
        },
        None => None,
    };
    let file_preset = file_map
        .as_ref()
        .and_then(|(_, _, m)| m.get("preset"))
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| anyhow!("preset: expected a string")))
        .transpose()?;
    let name = match (preset, file_preset.as_deref()) {
        (Some(a), Some(b)) if a != b => {
            bail!("preset `{a}` on the command line but `{b}` in the config file")
        }
        (Some(a), _) => a.to_string(),
        (None, Some(b)) => b.to_string(),
        (None, None) => bail!("no preset given: pass a preset name or a config with a `preset` key"),
    };
    let defaults = RunConfig::preset(Preset::from_name(&name)?);
    let Value::Object(mut merged) = serde_json::to_value(&defaults)? else {
        unreachable!("a struct serializes to an object")
    };
    if let Some((path, text, m)) = file_map {
        for (k, v) in m {
            if !merged.contains_key(&k) {
                let at = line_of(text, &k).map(|l| format!(" at line {l}")).unwrap_or_default();
                bail!("{path}{at}: unknown key `{k}`");
            }
            merged.insert(k, v);
        }
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        if !merged.contains_key(&k) {
            bail!("--override: unknown key `{k}`");
        }
        if k == "preset" {
            bail!("--override: the preset cannot be overridden");
        }
        merged.insert(k, v);
    }
    let config = from_map(merged)?;
    config.validate()?;
    Ok(config)
}

fn from_map(map: Map<String, Value>) -> Result<RunConfig> {
    let value = Value::Object(map);
    serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("{path}: {}", e.into_inner())
    })
}
