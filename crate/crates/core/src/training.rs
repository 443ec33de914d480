//! MSE training with Adam and the paired full-versus-cutoff protocol.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{model_effective_dimension, sample_thetas};
use crate::model::FactoredModel;
use crate::modelgen::{cutoff_of, DataGenerator, SpectralModel};
use crate::rng::{angles, substream};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 300,
            batch_size: 5,
            n_train: 25,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSpec("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidSpec("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidSpec("adam_eps must be positive".into()));
        }
        if self.n_train == 0 || self.batch_size == 0 || self.batch_size > self.n_train {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= batch_size <= n_train, got batch_size={} n_train={}",
                self.batch_size, self.n_train
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet<T> {
    pub xs: Vec<Vec<T>>,
    pub ys: Vec<T>,
}

impl<T> TrainingSet<T> {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
}

/// Noiseless labels from the generator at uniform inputs.
pub fn sample_training_set<T: Scalar, M: FactoredModel<T>, R: Rng + ?Sized>(
    gen: &DataGenerator<T, M>,
    n_train: usize,
    rng: &mut R,
) -> Result<TrainingSet<T>> {
    if n_train == 0 {
        return Err(Error::Precondition("n_train must be >= 1".into()));
    }
    let n = gen.spec().n_features;
    let xs: Vec<Vec<T>> = (0..n_train).map(|_| angles(rng, n)).collect();
    let ys = xs.iter().map(|x| gen.eval(x)).collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { xs, ys })
}

pub fn mse<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    data: &TrainingSet<T>,
) -> Result<T> {
    if data.is_empty() {
        return Err(Error::Precondition("mse of an empty data set".into()));
    }
    let mut acc = T::zero();
    for (x, &y) in data.xs.iter().zip(&data.ys) {
        let r = model.evaluate(x, theta)? - y;
        acc += r * r;
    }
    Ok(acc / T::from_count(data.len()))
}

/// Input features of a data set, computed once per model.
#[derive(Clone, Debug)]
pub struct FeatureCache<T> {
    /// `s ∘ φ(x_i)` per sample.
    pub weighted: Vec<Vec<T>>,
    pub ys: Vec<T>,
}

impl<T: Scalar> FeatureCache<T> {
    pub fn new<M: FactoredModel<T> + ?Sized>(model: &M, data: &TrainingSet<T>) -> Result<Self> {
        let s = model.spectrum();
        let weighted = data
            .xs
            .iter()
            .map(|x| {
                let phi = model.input_features(x)?;
                Ok(phi.iter().zip(s).map(|(&p, &s)| p * s).collect())
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        Ok(Self {
            weighted,
            ys: data.ys.clone(),
        })
    }

    fn prediction(&self, i: usize, psi: &[T]) -> T {
        self.weighted[i]
            .iter()
            .zip(psi)
            .fold(T::zero(), |a, (&w, &p)| a + w * p)
    }

    pub fn mse(&self, psi: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.ys.len() {
            let r = self.prediction(i, psi) - self.ys[i];
            acc += r * r;
        }
        acc / T::from_count(self.ys.len())
    }

    /// Batch loss and its gradient, via one vector-Jacobian product.
    pub fn batch_loss_and_gradient<M: FactoredModel<T> + ?Sized>(
        &self,
        model: &M,
        theta: &[T],
        batch: &[usize],
    ) -> Result<(T, Vec<T>)> {
        let scale = T::lit(2.0) / T::from_count(batch.len());
        let mut loss = T::zero();
        let (_, grad) = model.param_features_vjp(theta, &mut |psi| {
            let mut c = vec![T::zero(); psi.len()];
            for &i in batch {
                let res = self.prediction(i, psi) - self.ys[i];
                loss += res * res;
                for (cj, &w) in c.iter_mut().zip(&self.weighted[i]) {
                    *cj += scale * res * w;
                }
            }
            c
        })?;
        Ok((loss / T::from_count(batch.len()), grad))
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: &TrainingConfig, n_params: usize) -> Self {
        Self {
            lr: T::lit(config.learning_rate),
            beta1: T::lit(config.adam_beta1),
            beta2: T::lit(config.adam_beta2),
            eps: T::lit(config.adam_eps),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [T], grad: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for j in 0..theta.len() {
            let g = grad[j];
            self.m[j] = self.beta1 * self.m[j] + (one - self.beta1) * g;
            self.v[j] = self.beta2 * self.v[j] + (one - self.beta2) * g * g;
            let mh = self.m[j] / c1;
            let vh = self.v[j] / c2;
            theta[j] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTrace<T> {
    /// Full-data MSE after each epoch.
    pub mse: Vec<T>,
    pub mse_min: T,
    pub argmin: usize,
    pub theta: Vec<T>,
}

/// Trains from a uniform random start drawn from the config seed.
pub fn train<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    data: &TrainingSet<T>,
    config: &TrainingConfig,
) -> Result<TrainingTrace<T>> {
    let mut rng = substream(config.seed, &[purpose::INIT]);
    let theta0 = angles(&mut rng, model.n_params());
    let mut shuffle = substream(config.seed, &[purpose::SHUFFLE]);
    train_from(model, data, config, theta0, &mut shuffle)
}

/// Trains from `theta0`; `shuffle` only drives mini-batch order.
pub fn train_from<T: Scalar, M: FactoredModel<T> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    data: &TrainingSet<T>,
    config: &TrainingConfig,
    theta0: Vec<T>,
    shuffle: &mut R,
) -> Result<TrainingTrace<T>> {
    config.validate()?;
    if data.len() < config.batch_size {
        return Err(Error::Precondition(format!(
            "batch size {} exceeds the {} training points",
            config.batch_size,
            data.len()
        )));
    }
    if theta0.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            what: "initial parameters",
            expected: model.n_params(),
            actual: theta0.len(),
        });
    }
    let cache = FeatureCache::new(model, data)?;
    let mut theta = theta0;
    let mut adam = Adam::new(config, theta.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best = (T::infinity(), 0usize);
    for epoch in 0..config.epochs {
        order.shuffle(shuffle);
        // A short last batch is dropped.
        for batch in order.chunks_exact(config.batch_size) {
            let (_, grad) = cache.batch_loss_and_gradient(model, &theta, batch)?;
            adam.step(&mut theta, &grad);
        }
        let loss = cache.mse(&model.param_features(&theta)?);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if loss < best.0 {
            best = (loss, epoch);
        }
        trace.push(loss);
    }
    Ok(TrainingTrace {
        mse: trace,
        mse_min: best.0,
        argmin: best.1,
        theta,
    })
}

/// Stream purposes for substream derivation.
pub mod purpose {
    pub const DATA: u64 = 1;
    pub const ED: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const GENERATOR: u64 = 5;
    pub const UNBIASED: u64 = 6;
    pub const PERTURB: u64 = 7;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    Biased,
    Partial { epsilon: f64, delta_data: f64 },
    Unbiased,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Biased => "biased",
            Regime::Partial { .. } => "partial",
            Regime::Unbiased => "unbiased",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Regime::Partial { epsilon, .. } => *epsilon,
            _ => 0.0,
        }
    }

    pub fn delta_data(&self) -> f64 {
        match self {
            Regime::Partial { delta_data, .. } => *delta_data,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub master_seed: u64,
    pub realization: u64,
    pub restart: u64,
    pub regime: Regime,
    pub ed_full: f64,
    pub ed_cut: f64,
    pub mse_min_full: f64,
    pub mse_min_cut: f64,
    pub delta_mse: f64,
    pub delta_ed: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl ExperimentRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        master_seed: u64,
        realization: u64,
        restart: u64,
        regime: Regime,
        ed: (f64, f64),
        mse_min: (f64, f64),
        epochs: usize,
        lr: f64,
    ) -> Self {
        Self {
            master_seed,
            realization,
            restart,
            regime,
            ed_full: ed.0,
            ed_cut: ed.1,
            mse_min_full: mse_min.0,
            mse_min_cut: mse_min.1,
            delta_mse: mse_min.0 - mse_min.1,
            delta_ed: ed.0 - ed.1,
            epochs,
            lr,
        }
    }

    /// Whether the stored differences match their components exactly.
    pub fn is_consistent(&self) -> bool {
        self.delta_mse == self.mse_min_full - self.mse_min_cut
            && self.delta_ed == self.ed_full - self.ed_cut
    }
}

/// Settings of one realization of the paired protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedPlan {
    pub master_seed: u64,
    pub realization: u64,
    pub xi: f64,
    pub n_restarts: usize,
    pub n_param_samples: usize,
    pub dataset_size: u64,
}

/// Trains a (full, cutoff) pair from shared initializations and batch orders.
pub fn paired_arm<T: Scalar, M: FactoredModel<T>>(
    full: &M,
    cut: &M,
    data: &TrainingSet<T>,
    regime: Regime,
    plan: &PairedPlan,
    config: &TrainingConfig,
) -> Result<Vec<ExperimentRecord>> {
    if plan.n_restarts == 0 {
        return Err(Error::Precondition("n_restarts must be >= 1".into()));
    }
    let arm = arm_key(&regime);
    let mut ed_rng = substream(plan.master_seed, &[plan.realization, arm, purpose::ED]);
    let thetas = sample_thetas::<T, _>(&mut ed_rng, full.n_params(), plan.n_param_samples);
    let ed_full = model_effective_dimension(full, &thetas, plan.dataset_size)?.d_eff;
    let ed_cut = model_effective_dimension(cut, &thetas, plan.dataset_size)?.d_eff;
    let mut out = Vec::with_capacity(plan.n_restarts);
    for restart in 0..plan.n_restarts as u64 {
        let keys = [plan.realization, restart, arm];
        let mut init = substream(plan.master_seed, &[keys[0], keys[1], keys[2], purpose::INIT]);
        let theta0: Vec<T> = angles(&mut init, full.n_params());
        let shuffle_keys = [keys[0], keys[1], keys[2], purpose::SHUFFLE];
        let mut shuffle = substream(plan.master_seed, &shuffle_keys);
        let tf = train_from(full, data, config, theta0.clone(), &mut shuffle)?;
        let mut shuffle = substream(plan.master_seed, &shuffle_keys);
        let tc = train_from(cut, data, config, theta0, &mut shuffle)?;
        out.push(ExperimentRecord::new(
            plan.master_seed,
            plan.realization,
            restart,
            regime,
            (ed_full.to_f64_lossy(), ed_cut.to_f64_lossy()),
            (tf.mse_min.to_f64_lossy(), tc.mse_min.to_f64_lossy()),
            config.epochs,
            config.learning_rate,
        ));
    }
    Ok(out)
}

fn arm_key(regime: &Regime) -> u64 {
    match regime {
        Regime::Unbiased => 1,
        _ => 0,
    }
}

/// Both arms of one realization.
///
/// The biased arm uses the frames of `gen`; labels come from `target`, which
/// is `gen` itself or a perturbed copy (partial bias, reported with
/// `delta_data`). The unbiased arm pairs `unbiased` with its own cutoff and is
/// trained on the same labels. Pass `None` to skip it.
pub fn paired_experiment<T: Scalar, M: SpectralModel<T>>(
    gen: &DataGenerator<T, M>,
    target: &DataGenerator<T, M>,
    unbiased: Option<&M>,
    plan: &PairedPlan,
    config: &TrainingConfig,
) -> Result<Vec<ExperimentRecord>> {
    if !(plan.xi > 0.0) {
        return Err(Error::Precondition("decay length must be positive".into()));
    }
    let xi = T::lit(plan.xi);
    let mut data_rng = substream(plan.master_seed, &[plan.realization, purpose::DATA]);
    let data = sample_training_set(target, config.n_train, &mut data_rng)?;
    let eps = target.epsilon.to_f64_lossy();
    let regime = if eps > 0.0 {
        let delta = crate::modelgen::bias_deviation(gen, target)?;
        Regime::Partial {
            epsilon: eps,
            delta_data: delta.to_f64_lossy(),
        }
    } else {
        Regime::Biased
    };
    let full = gen.model.clone();
    let cut = cutoff_of(&full, gen.rank, xi)?;
    let mut records = paired_arm(&full, &cut, &data, regime, plan, config)?;
    if let Some(u) = unbiased {
        let cut = cutoff_of(u, gen.rank, xi)?;
        records.extend(paired_arm(u, &cut, &data, Regime::Unbiased, plan, config)?);
    }
    Ok(records)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArmSummary {
    pub count: usize,
    pub mean_delta_mse: f64,
    pub mean_delta_ed: f64,
}

/// Restart-averaged record per (realization, regime), in input order.
pub fn average_restarts(records: &[ExperimentRecord]) -> Vec<ExperimentRecord> {
    let mut groups: Vec<(u64, &'static str, Vec<&ExperimentRecord>)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|(real, name, _)| *real == r.realization && *name == r.regime.name())
        {
            Some(g) => g.2.push(r),
            None => groups.push((r.realization, r.regime.name(), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(_, _, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&ExperimentRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let first = rs[0];
            ExperimentRecord::new(
                first.master_seed,
                first.realization,
                u64::MAX,
                first.regime,
                (first.ed_full, first.ed_cut),
                (mean(|r| r.mse_min_full), mean(|r| r.mse_min_cut)),
                first.epochs,
                first.lr,
            )
        })
        .collect()
}

/// Mean differences over all records of one regime name.
pub fn summarize(records: &[ExperimentRecord], regime: &str) -> ArmSummary {
    let sel: Vec<_> = records.iter().filter(|r| r.regime.name() == regime).collect();
    if sel.is_empty() {
        return ArmSummary::default();
    }
    let n = sel.len() as f64;
    ArmSummary {
        count: sel.len(),
        mean_delta_mse: sel.iter().map(|r| r.delta_mse).sum::<f64>() / n,
        mean_delta_ed: sel.iter().map(|r| r.delta_ed).sum::<f64>() / n,
    }
}
