//! Right-normalized tensor trains representing column-orthonormal `V`.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::basis::LocalBasis;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Chain of cores `(χ_{m−1}, d̃, χ_m)`; `χ_0` is the column count and
/// `χ_M = 1`. Column `σ` of the implied `K × χ_0` matrix has entries
/// `core₁[σ, ν₁, :] · core₂[:, ν₂, :] ⋯ core_M[:, ν_M, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTrain<T> {
    pub cores: Vec<Array3<T>>,
}

/// Bond dimensions `χ_0..χ_M` for a train with `n_cols` columns, maximal
/// bond `chi` and local dimension `d`.
pub fn bond_dims(n_sites: usize, d: usize, n_cols: usize, chi: usize) -> Result<Vec<usize>> {
    if n_sites == 0 {
        return Err(Error::Precondition("tensor train needs at least one core".into()));
    }
    let mut dims = vec![1usize; n_sites + 1];
    for m in (1..n_sites).rev() {
        dims[m] = chi.min(d.saturating_mul(dims[m + 1]));
    }
    if n_cols > d.saturating_mul(dims[1]) {
        return Err(Error::Precondition(format!(
            "{n_cols} orthonormal columns do not fit a first core of width {}",
            d.saturating_mul(dims[1])
        )));
    }
    dims[0] = n_cols;
    Ok(dims)
}

/// Reshapes a `(d·χ_m) × χ_{m−1}` matrix with rows `(ν, a_m)` into a core.
pub fn core_from_matrix<T: Scalar>(mat: &Array2<T>, d: usize, right: usize) -> Array3<T> {
    let left = mat.ncols();
    Array3::from_shape_fn((left, d, right), |(a, nu, b)| mat[[nu * right + b, a]])
}

/// Inverse of [`core_from_matrix`].
pub fn core_matrix<T: Scalar>(core: &Array3<T>) -> Array2<T> {
    let (left, d, right) = core.dim();
    Array2::from_shape_fn((d * right, left), |(row, a)| core[[a, row / right, row % right]])
}

/// Transfer matrix `Σ_ν core[:, ν, :] w_ν`.
pub fn transfer<T: Scalar>(core: &Array3<T>, w: &[T]) -> Array2<T> {
    let (left, d, right) = core.dim();
    let mut out = Array2::zeros((left, right));
    for nu in 0..d {
        let wn = w[nu];
        if wn == T::zero() {
            continue;
        }
        out.scaled_add(wn, &core.index_axis(Axis(1), nu));
    }
    out
}

fn core_slice<T: Scalar>(core: &Array3<T>) -> std::borrow::Cow<'_, [T]> {
    match core.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(core.iter().copied().collect()),
    }
}

/// `out[a] = Σ_ν w_ν Σ_b core[a, ν, b] r_b`.
fn apply_right<T: Scalar>(core: &Array3<T>, w: &[T], r: &[T]) -> Vec<T> {
    let (left, d, right) = core.dim();
    let data = core_slice(core);
    (0..left)
        .map(|a| {
            (0..d).fold(T::zero(), |acc, nu| {
                if w[nu] == T::zero() {
                    return acc;
                }
                let row = &data[(a * d + nu) * right..(a * d + nu + 1) * right];
                acc + w[nu] * linalg::dot(row, r)
            })
        })
        .collect()
}

/// `u[ν·right + b] = Σ_a l_a core[a, ν, b]`.
fn apply_left<T: Scalar>(core: &Array3<T>, l: &[T]) -> Vec<T> {
    let (left, d, right) = core.dim();
    let data = core_slice(core);
    let mut u = vec![T::zero(); d * right];
    for a in 0..left {
        let la = l[a];
        if la == T::zero() {
            continue;
        }
        let block = &data[a * d * right..(a + 1) * d * right];
        for (o, &v) in u.iter_mut().zip(block) {
            *o += la * v;
        }
    }
    u
}

impl<T: Scalar> TensorTrain<T> {
    pub fn n_sites(&self) -> usize {
        self.cores.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cores[0].dim().0
    }

    pub fn local_dim(&self) -> usize {
        self.cores[0].dim().1
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        dims.push(self.cores.last().map_or(1, |c| c.dim().2));
        dims
    }

    pub fn max_bond(&self) -> usize {
        let dims = self.bond_dims();
        dims[1..dims.len() - 1].iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.cores.first() else {
            return Err(Error::Precondition("empty tensor train".into()));
        };
        let d = first.dim().1;
        for w in self.cores.windows(2) {
            if w[0].dim().2 != w[1].dim().0 || w[1].dim().1 != d {
                return Err(Error::Precondition("inconsistent tensor-train core shapes".into()));
            }
        }
        if self.cores.last().map(|c| c.dim().2) != Some(1) {
            return Err(Error::Precondition("last bond of a tensor train must be 1".into()));
        }
        Ok(())
    }

    /// Largest deviation of `Σ_{ν,b} core[a,ν,b] core[a',ν,b]` from `δ_{aa'}`
    /// over all cores.
    pub fn right_normalization_defect(&self) -> T {
        self.cores
            .iter()
            .map(|c| linalg::orthonormality_defect(&core_matrix(c)))
            .fold(T::zero(), T::max)
    }

    /// `VᵀV` computed by contraction, never densifying.
    pub fn column_gram(&self) -> Array2<T> {
        let mut env = Array2::<T>::ones((1, 1));
        for core in self.cores.iter().rev() {
            let (left, d, _) = core.dim();
            let mut next = Array2::zeros((left, left));
            for nu in 0..d {
                let a = core.index_axis(Axis(1), nu);
                next += &a.dot(&env).dot(&a.t());
            }
            env = next;
        }
        env
    }

    /// Right environments `r_m = Q_{m+1} ⋯ Q_M` for `m = 0..M`.
    fn right_envs(&self, locals: &[Vec<T>]) -> Vec<Vec<T>> {
        let m = self.n_sites();
        let mut envs = vec![Vec::new(); m + 1];
        envs[m] = vec![T::one()];
        for site in (0..m).rev() {
            envs[site] = apply_right(&self.cores[site], &locals[site], &envs[site + 1]);
        }
        envs
    }

    /// `Vᵀ (⊗ₘ wₘ)` for arbitrary local vectors.
    pub fn contract(&self, locals: &[Vec<T>]) -> Vec<T> {
        self.right_envs(locals).swap_remove(0)
    }

    /// `Vᵀ ι(θ)`.
    pub fn features(&self, local: &LocalBasis, theta: &[T]) -> Vec<T> {
        let locals: Vec<Vec<T>> = theta.iter().map(|&t| local.eval(t)).collect();
        self.contract(&locals)
    }

    /// `cᵀ Vᵀ B_j ι(θ)` for every slot `j`, by one right and one left sweep.
    pub fn vjp(&self, local: &LocalBasis, theta: &[T], c: &[T]) -> Vec<T> {
        self.features_and_vjp(local, theta, |_| c.to_vec()).1
    }

    /// `Vᵀι(θ)` together with the VJP against a cotangent computed from it,
    /// sharing the right sweep.
    pub fn features_and_vjp(
        &self,
        local: &LocalBasis,
        theta: &[T],
        cotangent: impl FnOnce(&[T]) -> Vec<T>,
    ) -> (Vec<T>, Vec<T>) {
        let locals: Vec<Vec<T>> = theta.iter().map(|&t| local.eval(t)).collect();
        let right = self.right_envs(&locals);
        let mut left = cotangent(&right[0]);
        let mut out = Vec::with_capacity(locals.len());
        for (site, core) in self.cores.iter().enumerate() {
            let (_, d, width) = core.dim();
            let u = apply_left(core, &left);
            let du = local.differentiate(&locals[site]);
            let next = &right[site + 1];
            let mut g = T::zero();
            for nu in 0..d {
                if du[nu] != T::zero() {
                    g += du[nu] * linalg::dot(&u[nu * width..(nu + 1) * width], next);
                }
            }
            out.push(g);
            if site + 1 < self.cores.len() {
                let w = &locals[site];
                left = (0..width)
                    .map(|b| (0..d).fold(T::zero(), |acc, nu| acc + w[nu] * u[nu * width + b]))
                    .collect();
            }
        }
        (right.into_iter().next().unwrap_or_default(), out)
    }

    /// `n_cols × M` Jacobian of `Vᵀι(θ)`.
    pub fn jacobian(&self, local: &LocalBasis, theta: &[T]) -> Array2<T> {
        let locals: Vec<Vec<T>> = theta.iter().map(|&t| local.eval(t)).collect();
        let right = self.right_envs(&locals);
        let n = self.n_cols();
        let mut left = Array2::<T>::eye(n);
        let mut out = Array2::zeros((n, locals.len()));
        for (site, core) in self.cores.iter().enumerate() {
            let dq = transfer(core, &local.differentiate(&locals[site]));
            let col = left.dot(&dq).dot(&ndarray::ArrayView1::from(&right[site + 1]));
            out.column_mut(site).assign(&col);
            if site + 1 < self.cores.len() {
                left = left.dot(&transfer(core, &locals[site]));
            }
        }
        out
    }

    /// The implied `K × n_cols` matrix. Only for small `K`.
    pub fn densify(&self) -> Array2<T> {
        let n = self.n_cols();
        // acc[(σ, ν-prefix), a]
        let mut acc = Array2::<T>::eye(n);
        let mut prefix = 1usize;
        for core in &self.cores {
            let (left, d, right) = core.dim();
            let mut next = Array2::zeros((n * prefix * d, right));
            for s in 0..n {
                for p in 0..prefix {
                    let row = acc.row(s * prefix + p);
                    for nu in 0..d {
                        let out_row = (s * prefix + p) * d + nu;
                        for a in 0..left {
                            let ra = row[a];
                            if ra == T::zero() {
                                continue;
                            }
                            for b in 0..right {
                                next[[out_row, b]] += ra * core[[a, nu, b]];
                            }
                        }
                    }
                }
            }
            acc = next;
            prefix *= d;
        }
        Array2::from_shape_fn((prefix, n), |(k, s)| acc[[s * prefix + k, 0]])
    }
}

/// Random right-normalized train with `n_cols` columns and bonds up to `chi`.
pub fn random_right_normalized_tt<T: Scalar, R: Rng + ?Sized>(
    n_sites: usize,
    d: usize,
    n_cols: usize,
    chi: usize,
    rng: &mut R,
) -> Result<TensorTrain<T>> {
    if n_cols > chi {
        log::warn!("tensor train with {n_cols} columns exceeds bond dimension {chi}");
    }
    let half = n_sites.div_ceil(2);
    if (chi as f64) > (d as f64).powi(half as i32) {
        log::warn!("bond dimension {chi} exceeds d^ceil(M/2) for M={n_sites}, d={d}");
    }
    let dims = bond_dims(n_sites, d, n_cols, chi)?;
    let cores = (0..n_sites)
        .map(|m| {
            let mat = linalg::random_orthonormal_columns(rng, d * dims[m + 1], dims[m])?;
            Ok(core_from_matrix(&mat, d, dims[m + 1]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorTrain { cores })
}
