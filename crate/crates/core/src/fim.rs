//! Fisher information matrices, their normalization, the normalized effective
//! dimension, rank diagnostics and random-matrix statistics.

use ndarray::Array2;
use rand::Rng;

use crate::basis::{for_each_grid_point, local_vectors, BasisSpec, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, symmetric_eigen};
use crate::model::FactoredModel;
use crate::rng::angles;
use crate::scalar::Scalar;

/// Default dataset size entering `c_n`.
pub const DEFAULT_DATASET_SIZE: u64 = 100_000;

/// Default relative eigenvalue cut for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FimSource {
    Analytic,
    Quadrature { nodes_per_dim: usize },
    MonteCarlo { n_input_samples: usize },
    Normalized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FimEstimate<T> {
    pub matrix: Array2<T>,
    pub theta: Vec<T>,
    pub source: FimSource,
}

impl<T: Scalar> FimEstimate<T> {
    pub fn trace(&self) -> T {
        self.matrix.diag().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdEstimate<T> {
    pub d_eff: T,
    pub n_param_samples: usize,
    pub dataset_size: u64,
    pub c_n: T,
}

/// `c_n = n / (2π log n)`.
pub fn scale_factor<T: Scalar>(n: u64) -> T {
    let n = T::lit(n as f64);
    n / (T::lit(2.0) * T::PI() * n.ln())
}

fn outer_accumulate<T: Scalar>(acc: &mut Array2<T>, g: &[T], w: T) {
    let m = g.len();
    for j in 0..m {
        let gj = w * g[j];
        for k in 0..m {
            acc[[j, k]] += gj * g[k];
        }
    }
}

/// FIM by averaging gradient outer products over the tensor trapezoid grid.
pub fn fim_quadrature<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
    nodes_per_dim: usize,
) -> Result<FimEstimate<T>> {
    let spec = model.spec();
    let required = spec.required_input_nodes();
    if nodes_per_dim < required {
        return Err(Error::GridTooCoarse {
            given: nodes_per_dim,
            required,
        });
    }
    let m = spec.n_params;
    let n_points = nodes_per_dim.pow(spec.n_features as u32);
    let w = T::from_count(n_points).recip();
    let mut acc = Array2::zeros((m, m));
    let mut failure = None;
    for_each_grid_point::<T>(spec.n_features, nodes_per_dim, |x| {
        if failure.is_some() {
            return;
        }
        match model.gradient(x, theta) {
            Ok(g) => outer_accumulate(&mut acc, &g, w),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(FimEstimate {
        matrix: acc,
        theta: theta.to_vec(),
        source: FimSource::Quadrature { nodes_per_dim },
    })
}

/// FIM by Monte-Carlo over uniform inputs.
pub fn fim_monte_carlo<T: Scalar, M: FactoredModel<T> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    theta: &[T],
    n_input_samples: usize,
    rng: &mut R,
) -> Result<FimEstimate<T>> {
    if n_input_samples == 0 {
        return Err(Error::Precondition("need at least one input sample".into()));
    }
    let m = model.n_params();
    let w = T::from_count(n_input_samples).recip();
    let mut acc = Array2::zeros((m, m));
    for _ in 0..n_input_samples {
        let x: Vec<T> = angles(rng, model.spec().n_features);
        outer_accumulate(&mut acc, &model.gradient(&x, theta)?, w);
    }
    Ok(FimEstimate {
        matrix: acc,
        theta: theta.to_vec(),
        source: FimSource::MonteCarlo { n_input_samples },
    })
}

/// `F = Jᵀ diag(S²) J` with `J` the parameter-feature Jacobian. The input
/// rotation cancels by orthogonality.
pub fn fim_analytic<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    theta: &[T],
) -> Result<FimEstimate<T>> {
    let j = model.param_jacobian(theta)?;
    let s = model.spectrum();
    let weighted = Array2::from_shape_fn(j.dim(), |(r, c)| s[r] * s[r] * j[[r, c]]);
    let mut f = j.t().dot(&weighted);
    symmetrize(&mut f);
    Ok(FimEstimate {
        matrix: f,
        theta: theta.to_vec(),
        source: FimSource::Analytic,
    })
}

fn symmetrize<T: Scalar>(f: &mut Array2<T>) {
    let n = f.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in i + 1..n {
            let a = half * (f[[i, j]] + f[[j, i]]);
            f[[i, j]] = a;
            f[[j, i]] = a;
        }
    }
}

/// Scales every FIM by `M / mean trace`.
pub fn normalize_fim_batch<T: Scalar>(fims: &[FimEstimate<T>]) -> Result<Vec<FimEstimate<T>>> {
    if fims.is_empty() {
        return Err(Error::Precondition("empty FIM batch".into()));
    }
    let m = fims[0].matrix.nrows();
    let mean_trace =
        fims.iter().map(|f| f.trace()).sum::<T>() / T::from_count(fims.len());
    if mean_trace == T::zero() {
        return Err(Error::DegenerateFim);
    }
    let scale = T::from_count(m) / mean_trace;
    Ok(fims
        .iter()
        .map(|f| FimEstimate {
            matrix: f.matrix.mapv(|x| x * scale),
            theta: f.theta.clone(),
            source: FimSource::Normalized,
        })
        .collect())
}

/// Analytic FIMs at every sample, normalized as a batch.
pub fn normalized_fim_batch<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    thetas: &[Vec<T>],
) -> Result<Vec<FimEstimate<T>>> {
    let fims = thetas
        .iter()
        .map(|t| fim_analytic(model, t))
        .collect::<Result<Vec<_>>>()?;
    normalize_fim_batch(&fims)
}

/// `½ logdet(I + c F)` with eigenvalues clamped at zero from below.
pub fn half_logdet_regularized<T: Scalar>(f: &Array2<T>, c: T) -> T {
    let (vals, _) = symmetric_eigen(f);
    let half = T::lit(0.5);
    vals.iter()
        .map(|&l| half * (c * l.max(T::zero())).ln_1p())
        .sum()
}

/// Normalized effective dimension for an explicit `c_n`.
pub fn effective_dimension_scaled<T: Scalar>(normalized: &[Array2<T>], c_n: T) -> Result<T> {
    if normalized.is_empty() {
        return Err(Error::Precondition("no FIM samples".into()));
    }
    if !(c_n > T::one()) {
        return Err(Error::Precondition(format!(
            "scale factor c_n must exceed 1, got {c_n}"
        )));
    }
    let m = normalized[0].nrows();
    let mut terms = Vec::with_capacity(normalized.len());
    for (index, f) in normalized.iter().enumerate() {
        let h = half_logdet_regularized(f, c_n);
        if !h.is_finite() {
            return Err(Error::NonFiniteLogdet { index });
        }
        terms.push(h);
    }
    let shift = terms.iter().copied().fold(T::neg_infinity(), T::max);
    let mean_exp = terms.iter().map(|&t| (t - shift).exp()).sum::<T>()
        / T::from_count(terms.len());
    let log_mean = shift + mean_exp.ln();
    Ok(T::lit(2.0) * log_mean / (T::from_count(m) * c_n.ln()))
}

/// Normalized effective dimension at dataset size `n`.
pub fn effective_dimension<T: Scalar>(normalized: &[FimEstimate<T>], n: u64) -> Result<EdEstimate<T>> {
    if n < 3 {
        return Err(Error::Precondition(format!("dataset size must be >= 3, got {n}")));
    }
    let c_n = scale_factor::<T>(n);
    let mats: Vec<Array2<T>> = normalized.iter().map(|f| f.matrix.clone()).collect();
    Ok(EdEstimate {
        d_eff: effective_dimension_scaled(&mats, c_n)?,
        n_param_samples: normalized.len(),
        dataset_size: n,
        c_n,
    })
}

/// Full pipeline: analytic FIMs at `thetas`, batch normalization, ED.
pub fn model_effective_dimension<T: Scalar, M: FactoredModel<T> + ?Sized>(
    model: &M,
    thetas: &[Vec<T>],
    n: u64,
) -> Result<EdEstimate<T>> {
    effective_dimension(&normalized_fim_batch(model, thetas)?, n)
}

/// `count` uniform parameter points in `[−π, π]^M`.
pub fn sample_thetas<T: Scalar, R: Rng + ?Sized>(rng: &mut R, m: usize, count: usize) -> Vec<Vec<T>> {
    (0..count).map(|_| angles(rng, m)).collect()
}

/// Number of eigenvalues above `rel_tol · λ_max`.
pub fn numerical_rank<T: Scalar>(f: &Array2<T>, rel_tol: T) -> usize {
    let (vals, _) = symmetric_eigen(f);
    let top = vals.first().copied().unwrap_or(T::zero());
    if !(top > T::zero()) {
        return 0;
    }
    vals.iter().filter(|&&l| l > rel_tol * top).count()
}

/// Empirical FIM moments over random column-orthonormal `V` at fixed `θ`,
/// with the closed-form leading-order predictions alongside.
#[derive(Clone, Debug)]
pub struct RmtStatistics<T> {
    pub mean: Array2<T>,
    pub variance: Array2<T>,
    pub predicted_mean: Array2<T>,
    pub predicted_variance: Array2<T>,
    /// Average of the empirical diagonal means.
    pub mean_diag: T,
    /// Root-mean-square of the empirical off-diagonal means.
    pub mean_offdiag: T,
    pub n_v_samples: usize,
}

/// `K × M` matrix whose column `j` is `B_j ι(θ)`.
pub fn derivative_features<T: Scalar>(spec: &BasisSpec, theta: &[T]) -> Result<Array2<T>> {
    let locals = local_vectors(spec, theta, Side::Params)?;
    let local = spec.param_local();
    let derivs: Vec<Vec<T>> = locals.iter().map(|v| local.differentiate(v)).collect();
    let m = locals.len();
    let k = spec.param_dim() as usize;
    let mut out = Array2::zeros((k, m));
    for j in 0..m {
        let f: Vec<&[T]> = (0..m)
            .map(|i| if i == j { derivs[i].as_slice() } else { locals[i].as_slice() })
            .collect();
        out.column_mut(j).assign(&ndarray::Array1::from(crate::basis::kron(&f)));
    }
    Ok(out)
}

pub fn rmt_statistics<T: Scalar, R: Rng + ?Sized>(
    s: &[T],
    spec: &BasisSpec,
    theta: &[T],
    n_v_samples: usize,
    rng: &mut R,
) -> Result<RmtStatistics<T>> {
    if n_v_samples < 100 {
        return Err(Error::Precondition(format!(
            "rmt_statistics needs at least 100 samples, got {n_v_samples}"
        )));
    }
    let d = s.len();
    let k = crate::structure::dense_dims(spec)?.1;
    if k < d {
        return Err(Error::Precondition(format!(
            "K={k} is too small for {d} orthonormal columns"
        )));
    }
    let db = derivative_features(spec, theta)?;
    let m = db.ncols();
    let mut sum = Array2::<T>::zeros((m, m));
    let mut sum_sq = Array2::<T>::zeros((m, m));
    for _ in 0..n_v_samples {
        let v: Array2<T> = linalg::random_orthonormal_columns(rng, k, d)?;
        let j = v.t().dot(&db);
        let weighted = Array2::from_shape_fn(j.dim(), |(r, c)| s[r] * s[r] * j[[r, c]]);
        let f = j.t().dot(&weighted);
        sum += &f;
        sum_sq += &f.mapv(|x| x * x);
    }
    let n = T::from_count(n_v_samples);
    let mean = sum.mapv(|x| x / n);
    let variance = Array2::from_shape_fn((m, m), |(a, b)| {
        (sum_sq[[a, b]] / n - mean[[a, b]] * mean[[a, b]]) * n / (n - T::one())
    });
    let gram = db.t().dot(&db);
    let tr2: T = s.iter().map(|&x| x * x).sum();
    let tr4: T = s.iter().map(|&x| x * x * x * x).sum();
    let kk = T::from_count(k);
    let predicted_mean = gram.mapv(|g| tr2 * g / kk);
    let predicted_variance = Array2::from_shape_fn((m, m), |(a, b)| {
        tr4 / (kk * kk) * (gram[[a, b]] * gram[[a, b]] + gram[[a, a]] * gram[[b, b]])
    });
    let mean_diag = mean.diag().sum() / T::from_count(m);
    let mut off = T::zero();
    let mut count = 0usize;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                off += mean[[a, b]] * mean[[a, b]];
                count += 1;
            }
        }
    }
    let mean_offdiag = if count == 0 {
        T::zero()
    } else {
        (off / T::from_count(count)).sqrt()
    };
    Ok(RmtStatistics {
        mean,
        variance,
        predicted_mean,
        predicted_variance,
        mean_diag,
        mean_offdiag,
        n_v_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fim_closed_form() {
        let c = 1000.0f64;
        for m in [1usize, 3, 7] {
            let eye = vec![Array2::<f64>::eye(m); 4];
            let ed = effective_dimension_scaled(&eye, c).unwrap();
            assert!((ed - (1.0 + c).ln() / c.ln()).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_fim_gives_zero() {
        let z = vec![Array2::<f64>::zeros((3, 3)); 2];
        assert_eq!(effective_dimension_scaled(&z, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_closed_form() {
        let mut f = Array2::<f64>::zeros((4, 4));
        f[[0, 0]] = 4.0;
        let ed = effective_dimension_scaled(&[f], 100.0).unwrap();
        let want = 401f64.ln() / (4.0 * 100f64.ln());
        assert!((ed - want).abs() < 1e-14);
        assert!((ed - 0.3254).abs() < 5e-5);
    }

    #[test]
    fn c_n_recomputes() {
        let c: f64 = scale_factor(100_000);
        assert!((c - 1e5 / (2.0 * std::f64::consts::PI * 1e5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(numerical_rank(&Array2::<f64>::zeros((3, 3)), 1e-8), 0);
        assert_eq!(numerical_rank(&Array2::<f64>::eye(5), 1e-8), 5);
    }

    #[test]
    fn batch_normalization_keeps_unit_trace_batch() {
        let f = FimEstimate {
            matrix: Array2::<f64>::eye(3),
            theta: vec![0.0; 3],
            source: FimSource::Analytic,
        };
        let out = normalize_fim_batch(&[f.clone()]).unwrap();
        assert_eq!(out[0].matrix, f.matrix);
        let zero = FimEstimate {
            matrix: Array2::<f64>::zeros((3, 3)),
            ..f
        };
        assert_eq!(normalize_fim_batch(&[zero]).unwrap_err(), Error::DegenerateFim);
    }
}
