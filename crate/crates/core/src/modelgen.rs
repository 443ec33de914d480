//! Data-generating functions and the biased, cutoff, partially biased and
//! unbiased models built around them.

use rand::Rng;

use crate::basis::{eval_product_basis, BasisSpec, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, gram_schmidt, orthonormalize_against, MAX_REDRAWS};
use crate::model::FactoredModel;
use crate::rng::angles;
use crate::scalar::Scalar;
use crate::structure::{decay_spectrum, dense_dims, flat_spectrum, DenseModel, SvdFactors};

/// A factored model whose spectrum can be swapped while keeping its frames.
pub trait SpectralModel<T: Scalar>: FactoredModel<T> + Clone {
    fn with_spectrum(&self, s: Vec<T>) -> Result<Self>;
}

impl<T: Scalar> SpectralModel<T> for DenseModel<T> {
    fn with_spectrum(&self, s: Vec<T>) -> Result<Self> {
        DenseModel::with_spectrum(self, s)
    }
}

/// Target function `y(x) = Σ_{ρ≤R} s_ρ φ_ρ(x) ψ_ρ(θ*)` together with the
/// factored model it was carved from.
#[derive(Clone, Debug)]
pub struct DataGenerator<T, M> {
    /// Generator frames with the full spectrum. For an unperturbed generator
    /// this is also the full biased model.
    pub model: M,
    pub theta_star: Vec<T>,
    pub rank: usize,
    pub epsilon: T,
    target: Vec<T>,
}

pub type DenseGenerator<T> = DataGenerator<T, DenseModel<T>>;

impl<T: Scalar, M: FactoredModel<T>> DataGenerator<T, M> {
    pub fn new(model: M, theta_star: Vec<T>, rank: usize, epsilon: T) -> Result<Self> {
        if rank < 1 || rank >= model.rank() {
            return Err(Error::Precondition(format!(
                "generator rank must satisfy 1 <= R < {}, got {rank}",
                model.rank()
            )));
        }
        let target = model.param_features(&theta_star)?;
        Ok(Self {
            model,
            theta_star,
            rank,
            epsilon,
            target,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        self.model.spec()
    }

    /// `ψ(θ*)` for the generator frames.
    pub fn target_features(&self) -> &[T] {
        &self.target
    }

    pub fn eval(&self, x: &[T]) -> Result<T> {
        let phi = self.model.input_features(x)?;
        let s = self.model.spectrum();
        Ok((0..self.rank).fold(T::zero(), |acc, r| acc + s[r] * phi[r] * self.target[r]))
    }
}

pub fn eval_data_generator<T: Scalar, M: FactoredModel<T>>(
    gen: &DataGenerator<T, M>,
    x: &[T],
) -> Result<T> {
    gen.eval(x)
}

/// Dense generator: `V = [Ṽ W̃]` with `W̃ ⟂ {Ṽ, ι(θ*)}`, random `U`, flat `S`.
pub fn make_data_generator<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    rank: usize,
    rng: &mut R,
) -> Result<DenseGenerator<T>> {
    let (d, k) = dense_dims(spec)?;
    if rank < 1 || rank >= d {
        return Err(Error::Precondition(format!(
            "generator rank must satisfy 1 <= R < D={d}, got {rank}"
        )));
    }
    if k <= d {
        return Err(Error::Precondition(format!(
            "biased construction needs K > D, got D={d}, K={k}"
        )));
    }
    let theta_star: Vec<T> = angles(rng, spec.n_params);
    let iota = eval_product_basis(spec, &theta_star, Side::Params)?;
    for _ in 0..MAX_REDRAWS {
        let free = linalg::random_orthonormal_vectors(rng, k, rank, &[])?;
        let mut anchor = iota.clone();
        if !orthonormalize_against(&mut anchor, &free) {
            continue;
        }
        let mut fixed = free.clone();
        fixed.push(anchor);
        let Ok(annihilating) = linalg::random_orthonormal_vectors(rng, k, d - rank, &fixed) else {
            continue;
        };
        let mut cols = free;
        cols.extend(annihilating);
        let v = linalg::from_columns(k, &cols);
        let u = linalg::random_orthogonal(rng, d)?;
        let model = DenseModel::new(
            spec.clone(),
            SvdFactors {
                u,
                s: flat_spectrum(d),
                v,
            },
        )?;
        return DataGenerator::new(model, theta_star, rank, T::zero());
    }
    Err(Error::Breakdown {
        attempts: MAX_REDRAWS,
    })
}

/// The generator's own frames with the full flat spectrum.
pub fn full_biased_model<T: Scalar, M: SpectralModel<T>>(gen: &DataGenerator<T, M>) -> M {
    gen.model.clone()
}

/// Generator frames with the tail of the spectrum decayed at rate `ξ`.
pub fn cutoff_biased_model<T: Scalar, M: SpectralModel<T>>(
    gen: &DataGenerator<T, M>,
    xi: T,
) -> Result<M> {
    cutoff_of(&gen.model, gen.rank, xi)
}

/// `model` with its spectrum decayed beyond `rank`.
pub fn cutoff_of<T: Scalar, M: SpectralModel<T>>(model: &M, rank: usize, xi: T) -> Result<M> {
    model.with_spectrum(decay_spectrum(model.spectrum(), rank, xi)?)
}

/// Fresh random frames carrying the spectrum `s`.
pub fn unbiased_model<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    s: &[T],
    rng: &mut R,
) -> Result<DenseModel<T>> {
    let (d, k) = dense_dims(spec)?;
    if s.len() != d {
        return Err(Error::DimensionMismatch {
            what: "spectrum length",
            expected: d,
            actual: s.len(),
        });
    }
    let u = linalg::random_orthogonal(rng, d)?;
    let v = linalg::random_orthonormal_columns(rng, k, d)?;
    DenseModel::new(
        spec.clone(),
        SvdFactors {
            u,
            s: s.to_vec(),
            v,
        },
    )
}

/// Orthonormalized `V + εG` for a dense generator.
pub fn perturb_generator<T: Scalar, R: Rng + ?Sized>(
    gen: &DenseGenerator<T>,
    epsilon: T,
    rng: &mut R,
) -> Result<DenseGenerator<T>> {
    if !(epsilon >= T::zero()) {
        return Err(Error::Precondition("perturbation strength must be >= 0".into()));
    }
    let v = &gen.model.factors.v;
    let k = v.nrows();
    for _ in 0..MAX_REDRAWS {
        let mut cols = linalg::columns(v);
        for c in cols.iter_mut() {
            for x in c.iter_mut() {
                *x += epsilon * crate::rng::gaussian::<T, _>(rng);
            }
        }
        if gram_schmidt(&mut cols, &[]).is_err() {
            continue;
        }
        let mut factors = gen.model.factors.clone();
        factors.v = linalg::from_columns(k, &cols);
        let model = DenseModel::new(gen.model.spec.clone(), factors)?;
        return DataGenerator::new(model, gen.theta_star.clone(), gen.rank, epsilon);
    }
    Err(Error::Breakdown {
        attempts: MAX_REDRAWS,
    })
}

/// `‖S (ψ(θ*) − ψ_ε(θ*))‖₁`.
pub fn bias_deviation<T: Scalar, M: FactoredModel<T>>(
    gen: &DataGenerator<T, M>,
    perturbed: &DataGenerator<T, M>,
) -> Result<T> {
    if gen.spec() != perturbed.spec() {
        return Err(Error::Precondition("generators have different basis specs".into()));
    }
    if gen.theta_star != perturbed.theta_star {
        return Err(Error::Precondition("generators have different anchors".into()));
    }
    let s = gen.model.spectrum();
    Ok(s.iter()
        .zip(gen.target_features())
        .zip(perturbed.target_features())
        .map(|((&s, &a), &b)| (s * (a - b)).abs())
        .sum())
}
