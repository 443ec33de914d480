//! Tensor-network factored models: `Γ ≈ U T S Vᵀ` with `U` a staircase MPO,
//! `T` a tree isometry and `V` a right-normalized tensor train.

mod mpo;
mod tt;
mod ttn;

pub use mpo::{random_staircase_mpo, StaircaseMpo};
pub use tt::{
    bond_dims, core_from_matrix, core_matrix, random_right_normalized_tt, transfer, TensorTrain,
};
pub use ttn::{random_tree_isometry, TreeIsometry, TreeNode};

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::basis::{kron, local_vectors, BasisSpec, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, gram_schmidt, orthonormalize_against, MAX_REDRAWS};
use crate::model::FactoredModel;
use crate::modelgen::{DataGenerator, SpectralModel};
use crate::rng::gaussian;
use crate::scalar::Scalar;
use crate::structure::flat_spectrum;

/// Largest intermediate a contraction may materialize.
pub const INTERMEDIATE_LIMIT: u128 = 1_000_000;

/// Contracts an open-boundary MPS into a dense vector.
pub fn mps_to_dense<T: Scalar>(mps: &[Array3<T>]) -> Vec<T> {
    // acc[(phys-prefix), bond]
    let mut acc: Vec<T> = vec![T::one()];
    let mut bond = 1usize;
    for a in mps {
        let (l, d, r) = a.dim();
        debug_assert_eq!(l, bond);
        let rows = acc.len() / bond;
        let mut next = vec![T::zero(); rows * d * r];
        for p in 0..rows {
            for x in 0..l {
                let v = acc[p * bond + x];
                if v == T::zero() {
                    continue;
                }
                for i in 0..d {
                    for y in 0..r {
                        next[(p * d + i) * r + y] += v * a[[x, i, y]];
                    }
                }
            }
        }
        acc = next;
        bond = r;
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorizedModel<T> {
    pub spec: BasisSpec,
    pub u: Option<StaircaseMpo<T>>,
    pub t: Option<TreeIsometry<T>>,
    pub s: Vec<T>,
    pub v: TensorTrain<T>,
}

impl<T: Scalar> TensorizedModel<T> {
    pub fn new(
        spec: BasisSpec,
        u: Option<StaircaseMpo<T>>,
        t: Option<TreeIsometry<T>>,
        s: Vec<T>,
        v: TensorTrain<T>,
    ) -> Result<Self> {
        v.validate()?;
        if v.n_sites() != spec.n_params || v.local_dim() != spec.d_tilde() {
            return Err(Error::Precondition(
                "tensor train shape does not match the parameter basis".into(),
            ));
        }
        if let Some(u) = &u {
            if u.n_sites != spec.n_features || u.local_dim != spec.d() {
                return Err(Error::Precondition("MPO shape does not match the input basis".into()));
            }
        }
        let r = match &t {
            Some(t) => {
                if t.n_leaves != spec.n_features || t.leaf_dim != spec.d() {
                    return Err(Error::Precondition(
                        "tree shape does not match the input basis".into(),
                    ));
                }
                t.out_dim()
            }
            None => {
                let d = spec.input_dim();
                if d > INTERMEDIATE_LIMIT {
                    return Err(Error::TooLarge {
                        what: "input space without a tree isometry",
                        entries: d,
                        limit: INTERMEDIATE_LIMIT,
                    });
                }
                d as usize
            }
        };
        for (what, actual) in [("spectrum length", s.len()), ("tensor-train columns", v.n_cols())] {
            if actual != r {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: r,
                    actual,
                });
            }
        }
        Ok(Self { spec, u, t, s, v })
    }

    /// Same frames, dense `V` (for cross-checks at tiny size).
    pub fn densified_v(&self) -> Array2<T> {
        self.v.densify()
    }

    /// `UT` as a dense `D × r` matrix (for cross-checks at tiny size).
    pub fn densified_input_frame(&self) -> Array2<T> {
        let d = self.spec.input_dim() as usize;
        let r = self.s.len();
        let mut out = Array2::zeros((d, r));
        for j in 0..r {
            let mut e = vec![T::zero(); r];
            e[j] = T::one();
            let mut col = match &self.t {
                Some(t) => t.apply(&e),
                None => e,
            };
            if let Some(u) = &self.u {
                col = u.apply(&col);
            }
            out.column_mut(j).assign(&ndarray::Array1::from(col));
        }
        out
    }
}

impl<T: Scalar> FactoredModel<T> for TensorizedModel<T> {
    fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    fn spectrum(&self) -> &[T] {
        &self.s
    }

    fn input_features(&self, x: &[T]) -> Result<Vec<T>> {
        let locals = local_vectors(&self.spec, x, Side::Inputs)?;
        if self.spec.input_dim() <= INTERMEDIATE_LIMIT {
            let mut e = kron(&locals);
            if let Some(u) = &self.u {
                e = u.apply_transpose(&e);
            }
            return Ok(match &self.t {
                Some(t) => t.apply_transpose(&e),
                None => e,
            });
        }
        let mps: Vec<Array3<T>> = match &self.u {
            Some(u) => u.apply_transpose_product(&locals),
            None => locals
                .iter()
                .map(|e| Array3::from_shape_fn((1, e.len(), 1), |(_, i, _)| e[i]))
                .collect(),
        };
        match &self.t {
            Some(t) => Ok(t.contract_mps(&mps)),
            None => Err(Error::TooLarge {
                what: "input features without a tree isometry",
                entries: self.spec.input_dim(),
                limit: INTERMEDIATE_LIMIT,
            }),
        }
    }

    fn param_features(&self, theta: &[T]) -> Result<Vec<T>> {
        check_len(theta, self.spec.n_params)?;
        Ok(self.v.features(&self.spec.param_local(), theta))
    }

    fn param_jacobian(&self, theta: &[T]) -> Result<Array2<T>> {
        check_len(theta, self.spec.n_params)?;
        Ok(self.v.jacobian(&self.spec.param_local(), theta))
    }

    fn param_vjp(&self, theta: &[T], c: &[T]) -> Result<Vec<T>> {
        check_len(theta, self.spec.n_params)?;
        if c.len() != self.s.len() {
            return Err(Error::DimensionMismatch {
                what: "cotangent",
                expected: self.s.len(),
                actual: c.len(),
            });
        }
        Ok(self.v.vjp(&self.spec.param_local(), theta, c))
    }

    fn param_features_vjp(
        &self,
        theta: &[T],
        cotangent: &mut dyn FnMut(&[T]) -> Vec<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        check_len(theta, self.spec.n_params)?;
        let r = self.s.len();
        let mut bad = None;
        let out = self.v.features_and_vjp(&self.spec.param_local(), theta, |psi| {
            let c = cotangent(psi);
            if c.len() != r {
                bad = Some(c.len());
                return vec![T::zero(); r];
            }
            c
        });
        if let Some(actual) = bad {
            return Err(Error::DimensionMismatch {
                what: "cotangent",
                expected: r,
                actual,
            });
        }
        Ok(out)
    }
}

impl<T: Scalar> SpectralModel<T> for TensorizedModel<T> {
    fn with_spectrum(&self, s: Vec<T>) -> Result<Self> {
        if s.len() != self.s.len() {
            return Err(Error::DimensionMismatch {
                what: "spectrum length",
                expected: self.s.len(),
                actual: s.len(),
            });
        }
        Ok(Self { s, ..self.clone() })
    }
}

fn check_len<T>(theta: &[T], m: usize) -> Result<()> {
    if theta.len() != m {
        return Err(Error::DimensionMismatch {
            what: "parameter point",
            expected: m,
            actual: theta.len(),
        });
    }
    Ok(())
}

pub fn tensorized_eval<T: Scalar>(model: &TensorizedModel<T>, x: &[T], theta: &[T]) -> Result<T> {
    model.evaluate(x, theta)
}

pub fn tensorized_gradient<T: Scalar>(
    model: &TensorizedModel<T>,
    x: &[T],
    theta: &[T],
) -> Result<Vec<T>> {
    model.gradient(x, theta)
}

pub fn tensorized_fim<T: Scalar>(
    model: &TensorizedModel<T>,
    theta: &[T],
) -> Result<crate::fim::FimEstimate<T>> {
    crate::fim::fim_analytic(model, theta)
}

/// Which input-side networks a tensorized model carries, and the bond
/// dimension shared by the tree output and the tensor train.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorLayout {
    pub bond_dim: usize,
    pub use_mpo: bool,
    pub use_tree: bool,
}

impl TensorLayout {
    /// Whether a tree is actually built for this spec (power-of-two features).
    pub fn tree_active(&self, spec: &BasisSpec) -> bool {
        self.use_tree && spec.n_features >= 2 && spec.n_features.is_power_of_two()
    }

    /// Length of the spectrum: the tree output, or `D` without a tree.
    pub fn feature_rank(&self, spec: &BasisSpec) -> Result<usize> {
        if self.tree_active(spec) {
            return Ok(self.bond_dim);
        }
        let d = spec.input_dim();
        if d > INTERMEDIATE_LIMIT {
            return Err(Error::TooLarge {
                what: "input space without a tree isometry",
                entries: d,
                limit: INTERMEDIATE_LIMIT,
            });
        }
        Ok(d as usize)
    }
}

fn random_input_side<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    layout: &TensorLayout,
    rng: &mut R,
) -> Result<(Option<StaircaseMpo<T>>, Option<TreeIsometry<T>>)> {
    let u = if layout.use_mpo && spec.n_features >= 2 {
        Some(random_staircase_mpo(spec.n_features, spec.d(), rng)?)
    } else {
        None
    };
    let t = if layout.tree_active(spec) {
        Some(random_tree_isometry(spec.n_features, spec.d(), layout.bond_dim, rng)?)
    } else {
        None
    };
    Ok((u, t))
}

/// Fresh random `U`, `T` and `V` carrying the spectrum `s`.
pub fn unbiased_tensorized_model<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    layout: &TensorLayout,
    s: &[T],
    rng: &mut R,
) -> Result<TensorizedModel<T>> {
    let r = layout.feature_rank(spec)?;
    let (u, t) = random_input_side(spec, layout, rng)?;
    let v = random_right_normalized_tt(spec.n_params, spec.d_tilde(), r, layout.bond_dim, rng)?;
    TensorizedModel::new(spec.clone(), u, t, s.to_vec(), v)
}

pub type TensorizedGenerator<T> = DataGenerator<T, TensorizedModel<T>>;

/// Biased tensorized generator.
///
/// Tail cores are random and right-normalized. With `q` their contraction
/// against `ι(θ*₂..θ*_M)` and `w = ι(θ*₁) ⊗ q`, the first core is a
/// `(d̃·χ₁) × r` matrix with orthonormal columns whose columns beyond `R` are
/// orthogonal to `w`, so those columns of `V` annihilate `ι(θ*)`.
pub fn biased_tensorized_generator<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    rank: usize,
    layout: &TensorLayout,
    theta_star: &[T],
    rng: &mut R,
) -> Result<TensorizedGenerator<T>> {
    check_len(theta_star, spec.n_params)?;
    let r = layout.feature_rank(spec)?;
    if rank < 1 || rank >= r {
        return Err(Error::Precondition(format!(
            "generator rank must satisfy 1 <= R < {r}, got {rank}"
        )));
    }
    let dt = spec.d_tilde();
    let m = spec.n_params;
    let dims = bond_dims(m, dt, r, layout.bond_dim)?;
    let width = dt * dims[1];
    if r + 1 > width {
        return Err(Error::Precondition(format!(
            "first core of width {width} cannot hold {r} columns plus the anchor direction"
        )));
    }
    let local = spec.param_local();
    let locals: Vec<Vec<T>> = theta_star.iter().map(|&t| local.eval(t)).collect();
    for _ in 0..MAX_REDRAWS {
        let mut cores = Vec::with_capacity(m);
        for site in 1..m {
            let mat = linalg::random_orthonormal_columns(rng, dt * dims[site + 1], dims[site])?;
            cores.push(core_from_matrix(&mat, dt, dims[site + 1]));
        }
        let tail = TensorTrain { cores: cores.clone() };
        let q = if m > 1 { tail.contract(&locals[1..]) } else { vec![T::one()] };
        let anchor_dir = kron(&[locals[0].as_slice(), q.as_slice()]);
        let free = linalg::random_orthonormal_vectors(rng, width, rank, &[])?;
        let mut anchor = anchor_dir.clone();
        if !orthonormalize_against(&mut anchor, &free) {
            continue;
        }
        let mut fixed = free.clone();
        fixed.push(anchor);
        let Ok(rest) = linalg::random_orthonormal_vectors(rng, width, r - rank, &fixed) else {
            continue;
        };
        let mut cols = free;
        cols.extend(rest);
        let first = linalg::from_columns(width, &cols);
        let mut all = vec![core_from_matrix(&first, dt, dims[1])];
        all.extend(cores);
        let v = TensorTrain { cores: all };
        let (u, t) = random_input_side(spec, layout, rng)?;
        let model = TensorizedModel::new(spec.clone(), u, t, flat_spectrum(r), v)?;
        return DataGenerator::new(model, theta_star.to_vec(), rank, T::zero());
    }
    Err(Error::Breakdown {
        attempts: MAX_REDRAWS,
    })
}

/// Perturbs every core matrix of the generator's train by `εG` and
/// re-orthonormalizes it, keeping right-normalization.
pub fn perturb_tensorized_generator<T: Scalar, R: Rng + ?Sized>(
    gen: &TensorizedGenerator<T>,
    epsilon: T,
    rng: &mut R,
) -> Result<TensorizedGenerator<T>> {
    if !(epsilon >= T::zero()) {
        return Err(Error::Precondition("perturbation strength must be >= 0".into()));
    }
    let mut cores = Vec::with_capacity(gen.model.v.n_sites());
    for core in &gen.model.v.cores {
        let (_, d, right) = core.dim();
        let mat = core_matrix(core);
        let rows = mat.nrows();
        let mut done = None;
        for _ in 0..MAX_REDRAWS {
            let mut cols = linalg::columns(&mat);
            for c in cols.iter_mut() {
                for x in c.iter_mut() {
                    *x += epsilon * gaussian::<T, _>(rng);
                }
            }
            if gram_schmidt(&mut cols, &[]).is_ok() {
                done = Some(linalg::from_columns(rows, &cols));
                break;
            }
        }
        let Some(mat) = done else {
            return Err(Error::Breakdown {
                attempts: MAX_REDRAWS,
            });
        };
        cores.push(core_from_matrix(&mat, d, right));
    }
    let model = TensorizedModel {
        v: TensorTrain { cores },
        ..gen.model.clone()
    };
    DataGenerator::new(model, gen.theta_star.clone(), gen.rank, epsilon)
}
