//! Preset pipelines, parallel task dispatch and output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use fourier_ed_core::basis::BasisSpec;
use fourier_ed_core::fim::{model_effective_dimension, sample_thetas};
use fourier_ed_core::modelgen::{
    cutoff_of, make_data_generator, perturb_generator, unbiased_model, DataGenerator,
};
use fourier_ed_core::qnn::{admissible_basis_counts, gamma_purity, masked_structure_constants};
use fourier_ed_core::rng::{angles, substream, StreamRng};
use fourier_ed_core::structure::{
    decay_spectrum, flat_spectrum, purity, random_structure_constants, svd_decompose, DenseModel,
};
use fourier_ed_core::tensornet::{
    biased_tensorized_generator, perturb_tensorized_generator, unbiased_tensorized_model,
};
use fourier_ed_core::training::{
    average_restarts, paired_experiment, purpose, PairedPlan,
};
use fourier_ed_core::{FactoredModel, SpectralModel};

use crate::config::{Family, Preset, RunConfig};
use crate::output::{write_csv, EdRow, QnnRow, SpectrumRow, TrainingRow};

/// Rows produced by one task.
#[derive(Clone, Debug, Default)]
pub struct TaskOutput {
    pub training: Vec<TrainingRow>,
    pub averages: Vec<TrainingRow>,
    pub ed: Vec<EdRow>,
    pub qnn: Vec<QnnRow>,
    pub spectra: Vec<SpectrumRow>,
}

impl TaskOutput {
    fn extend(&mut self, other: TaskOutput) {
        self.training.extend(other.training);
        self.averages.extend(other.averages);
        self.ed.extend(other.ed);
        self.qnn.extend(other.qnn);
        self.spectra.extend(other.spectra);
    }
}

/// Everything a run computed, in task order.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: TaskOutput,
    pub tasks: usize,
    pub failed: usize,
}

impl Outcome {
    /// More than a tenth of the tasks failed.
    pub fn too_many_failures(&self) -> bool {
        self.failed * 10 > self.tasks
    }
}

#[derive(Clone, Copy, Debug)]
enum Task {
    /// One realization; `value` is the scanned M or D when the preset scans.
    Realization { realization: u64, value: Option<usize> },
    Layout { depth: usize },
}

fn tasks(cfg: &RunConfig, preset: Preset) -> Vec<Task> {
    let reals = 0..cfg.n_realizations as u64;
    match preset {
        Preset::QnnLayouts => cfg
            .entangling_depths
            .iter()
            .map(|&depth| Task::Layout { depth })
            .collect(),
        Preset::ScanM | Preset::ScanD | Preset::EdVsDmRatio => reals
            .flat_map(|realization| {
                cfg.scan_values.iter().map(move |&v| Task::Realization {
                    realization,
                    value: Some(v),
                })
            })
            .collect(),
        _ => reals
            .map(|realization| Task::Realization {
                realization,
                value: None,
            })
            .collect(),
    }
}

/// Runs every task of the preset on a pool of `jobs` threads.
///
/// Failed tasks are logged and skipped. Output order follows task order
/// (realization, then scan value), whatever order tasks finish in.
pub fn execute(cfg: &RunConfig, jobs: usize) -> Result<Outcome> {
    cfg.validate()?;
    let preset = cfg.preset_kind()?;
    let list = tasks(cfg, preset);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building the worker pool")?;
    let results: Vec<Result<TaskOutput>> =
        pool.install(|| list.par_iter().map(|t| run_task(cfg, preset, *t)).collect());
    let mut outcome = Outcome {
        tasks: list.len(),
        ..Default::default()
    };
    for (task, r) in list.iter().zip(results) {
        match r {
            Ok(rows) => outcome.rows.extend(rows),
            Err(e) => {
                warn!("task {task:?} failed, skipping it: {e:#}");
                outcome.failed += 1;
            }
        }
    }
    Ok(outcome)
}

fn run_task(cfg: &RunConfig, preset: Preset, task: Task) -> Result<TaskOutput> {
    match (preset, task) {
        (Preset::QnnLayouts, Task::Layout { depth }) => qnn_task(cfg, depth),
        (Preset::EdVsPurity, Task::Realization { realization, .. }) => purity_task(cfg, realization),
        (Preset::EdVsDmRatio, Task::Realization { realization, value: Some(d) }) => {
            dm_ratio_task(cfg, realization, d)
        }
        (_, Task::Realization { realization, value }) => {
            let spec = match value {
                Some(v) => cfg.scanned_spec(v)?,
                None => cfg.basis_spec()?,
            };
            training_task(cfg, &spec, realization, value.unwrap_or(0) as u64)
        }
        (_, t) => unreachable!("task {t:?} does not belong to preset {}", preset.name()),
    }
}

fn stream(cfg: &RunConfig, keys: &[u64]) -> StreamRng {
    substream(cfg.master_seed, keys)
}

fn training_task(cfg: &RunConfig, spec: &BasisSpec, realization: u64, key: u64) -> Result<TaskOutput> {
    let mut g_rng = stream(cfg, &[realization, purpose::GENERATOR, key]);
    let mut u_rng = stream(cfg, &[realization, purpose::UNBIASED, key]);
    match cfg.family {
        Family::Dense => {
            let gen = make_data_generator::<f64, _>(spec, cfg.rank, &mut g_rng)?;
            let unbiased = match cfg.unbiased_arm {
                true => Some(unbiased_model(spec, gen.model.spectrum(), &mut u_rng)?),
                false => None,
            };
            compare(cfg, realization, key, &gen, unbiased.as_ref(), perturb_generator)
        }
        Family::Tensorized => {
            let layout = cfg.layout();
            let theta_star: Vec<f64> = angles(&mut g_rng, spec.n_params);
            let gen = biased_tensorized_generator(spec, cfg.rank, &layout, &theta_star, &mut g_rng)?;
            let unbiased = match cfg.unbiased_arm {
                true => Some(unbiased_tensorized_model(spec, &layout, gen.model.spectrum(), &mut u_rng)?),
                false => None,
            };
            compare(cfg, realization, key, &gen, unbiased.as_ref(), perturb_tensorized_generator)
        }
    }
}

type Perturb<M> =
    fn(&DataGenerator<f64, M>, f64, &mut StreamRng) -> fourier_ed_core::Result<DataGenerator<f64, M>>;

/// The paired full/cutoff comparison over the ε and ξ grids.
fn compare<M: SpectralModel<f64>>(
    cfg: &RunConfig,
    realization: u64,
    key: u64,
    gen: &DataGenerator<f64, M>,
    unbiased: Option<&M>,
    perturb: Perturb<M>,
) -> Result<TaskOutput> {
    let spec = gen.spec();
    let (dim, m) = (spec.input_dim() as u64, spec.n_params);
    let config = cfg.training();
    let mut out = TaskOutput::default();
    for (i, &eps) in cfg.epsilons.iter().enumerate() {
        let target = if eps > 0.0 {
            let mut rng = stream(cfg, &[realization, purpose::PERTURB, key, i as u64]);
            perturb(gen, eps, &mut rng)?
        } else {
            gen.clone()
        };
        for &xi in &cfg.xis {
            let plan = PairedPlan {
                master_seed: cfg.master_seed,
                realization,
                xi,
                n_restarts: cfg.n_restarts,
                n_param_samples: cfg.n_param_samples,
                dataset_size: cfg.dataset_size,
            };
            let records = paired_experiment(gen, &target, unbiased, &plan, &config)?;
            out.training
                .extend(records.iter().map(|r| TrainingRow::new(r, xi, dim, m)));
            out.averages.extend(
                average_restarts(&records)
                    .iter()
                    .map(|r| TrainingRow::new(r, xi, dim, m)),
            );
            if cfg.dump_spectra && i == 0 {
                let mut arms = vec![("biased", &gen.model)];
                arms.extend(unbiased.map(|u| ("unbiased", u)));
                for (regime, full) in arms {
                    let cut = cutoff_of(full, gen.rank, xi)?;
                    for (variant, model) in [("full", full), ("cut", &cut)] {
                        out.spectra.extend(model.spectrum().iter().enumerate().map(|(index, &s)| {
                            SpectrumRow {
                                realization,
                                regime: regime.into(),
                                variant: variant.into(),
                                xi: Some(xi),
                                index,
                                s,
                            }
                        }));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Random `Γ` frames with a flat spectrum decayed beyond `rank` over the ξ grid.
fn purity_task(cfg: &RunConfig, realization: u64) -> Result<TaskOutput> {
    let spec = cfg.basis_spec()?;
    let gamma = random_structure_constants::<f64, _>(&spec, &mut stream(cfg, &[realization, purpose::GENERATOR]))?;
    let factors = svd_decompose(&gamma)?;
    let flat = flat_spectrum::<f64>(factors.s.len());
    let base = DenseModel::new(spec.clone(), factors)?;
    let thetas = sample_thetas::<f64, _>(
        &mut stream(cfg, &[realization, purpose::ED]),
        spec.n_params,
        cfg.n_param_samples,
    );
    let mut out = TaskOutput::default();
    for &xi in &cfg.xis {
        let s = decay_spectrum(&flat, cfg.rank, xi)?;
        let model = base.with_spectrum(s.clone())?;
        let ed = model_effective_dimension(&model, &thetas, cfg.dataset_size)?;
        out.ed.push(ed_row(cfg, realization, &spec, Some(xi), purity(&s)?, ed.d_eff));
        if cfg.dump_spectra {
            out.spectra.extend(s.iter().enumerate().map(|(index, &s)| SpectrumRow {
                realization,
                regime: "random".into(),
                variant: "decayed".into(),
                xi: Some(xi),
                index,
                s,
            }));
        }
    }
    Ok(out)
}

/// Raw spectrum of a random `Γ` with `D = d` at the configured M.
fn dm_ratio_task(cfg: &RunConfig, realization: u64, d: usize) -> Result<TaskOutput> {
    let spec = cfg.scanned_spec(d)?;
    let mut rng = stream(cfg, &[realization, purpose::GENERATOR, d as u64]);
    let gamma = random_structure_constants::<f64, _>(&spec, &mut rng)?;
    let model = DenseModel::new(spec.clone(), svd_decompose(&gamma)?)?;
    let thetas = sample_thetas::<f64, _>(
        &mut stream(cfg, &[realization, purpose::ED]),
        spec.n_params,
        cfg.n_param_samples,
    );
    let ed = model_effective_dimension(&model, &thetas, cfg.dataset_size)?;
    let p = purity(model.spectrum())?;
    Ok(TaskOutput {
        ed: vec![ed_row(cfg, realization, &spec, None, p, ed.d_eff)],
        ..Default::default()
    })
}

fn ed_row(cfg: &RunConfig, realization: u64, spec: &BasisSpec, xi: Option<f64>, purity: f64, d_eff: f64) -> EdRow {
    EdRow {
        master_seed: cfg.master_seed,
        realization,
        input_dim: spec.input_dim() as u64,
        n_params: spec.n_params,
        d_tilde: spec.d_tilde(),
        xi,
        purity,
        n_param_samples: cfg.n_param_samples,
        dataset_size: cfg.dataset_size,
        d_eff,
    }
}

fn qnn_task(cfg: &RunConfig, depth: usize) -> Result<TaskOutput> {
    let layout = cfg.circuit(depth);
    let spec = cfg.basis_spec()?;
    let counts = admissible_basis_counts(&layout)?;
    let row = |qubit, input_functions, param_functions| QnnRow {
        n_qubits: layout.n_qubits,
        n_layers: layout.n_layers,
        entangling_depth: depth,
        measurement_depth: layout.measurement_depth,
        qubit,
        input_functions,
        param_functions,
        pairs: None,
        purity_mean: None,
        purity_lower_bound: None,
        mask_samples: cfg.mask_samples,
    };
    let mut rows: Vec<QnnRow> = counts
        .per_qubit
        .iter()
        .map(|q| row(Some(q.qubit), q.input_functions, q.param_functions))
        .collect();
    let mut purity_mean = None;
    if cfg.mask_samples > 0 {
        let mut acc = 0.0;
        for sample in 0..cfg.mask_samples as u64 {
            let mut rng = stream(cfg, &[depth as u64, purpose::GENERATOR, sample]);
            let gamma = masked_structure_constants::<f64, _>(&layout, &spec, &mut rng)?;
            acc += gamma_purity(&gamma.gamma)?;
        }
        purity_mean = Some(acc / cfg.mask_samples as f64);
    }
    rows.push(QnnRow {
        pairs: Some(counts.union_pairs),
        purity_mean,
        purity_lower_bound: Some(1.0 / counts.union_inputs as f64),
        ..row(None, counts.union_inputs, counts.union_params)
    });
    Ok(TaskOutput {
        qnn: rows,
        ..Default::default()
    })
}

/// Files written by [`run`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outcome: Outcome,
    pub records_sha256: String,
}

/// `sha256("blob <len>\0" ‖ bytes)`, the way git hashes file contents.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Executes the preset and writes `records.csv`, `manifest.json` and, for
/// training presets, `averages.csv`; `spectrum_<seed>.csv` on request.
pub fn run(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<RunSummary> {
    let start = Instant::now();
    info!("running {} into {}", cfg.preset, out_dir.display());
    let outcome = execute(cfg, jobs)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let preset = cfg.preset_kind()?;
    let records = out_dir.join("records.csv");
    let rows = &outcome.rows;
    match preset {
        Preset::EdVsPurity | Preset::EdVsDmRatio => write_csv(&records, &rows.ed)?,
        Preset::QnnLayouts => write_csv(&records, &rows.qnn)?,
        _ => {
            write_csv(&records, &rows.training)?;
            write_csv(&out_dir.join("averages.csv"), &rows.averages)?;
        }
    }
    if cfg.dump_spectra {
        let path = out_dir.join(format!("spectrum_{}.csv", cfg.master_seed));
        write_csv(&path, &rows.spectra)?;
    }
    let records_sha256 = content_hash(&std::fs::read(&records)?);
    let config_bytes = serde_json::to_vec(cfg)?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "preset": cfg.preset,
        "config": cfg,
        "master_seed": cfg.master_seed,
        "n_realizations": cfg.n_realizations,
        "n_restarts": cfg.n_restarts,
        "jobs": jobs,
        "tasks": outcome.tasks,
        "failed_tasks": outcome.failed,
        "input_hash": content_hash(&config_bytes),
        "records_sha256": records_sha256,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    info!(
        "{} tasks, {} failed, {:.1} s",
        outcome.tasks,
        outcome.failed,
        start.elapsed().as_secs_f64()
    );
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        outcome,
        records_sha256,
    })
}
