//! Dense structure constants, their SVD factors, purity and spectrum decay.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::basis::{eval_product_basis, local_vectors, BasisSpec, LocalBasis, Side};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::FactoredModel;
use crate::rng::symmetric_unit;
use crate::scalar::Scalar;

/// Largest `D·K` a dense model may materialize.
pub const DENSE_ENTRY_LIMIT: u128 = 100_000_000;

/// The `D × K` coefficient matrix `Γ` of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureConstants<T> {
    pub gamma: Array2<T>,
    pub spec: BasisSpec,
}

/// `Γ = U·diag(S)·Vᵀ` with `U: D×D`, `S` descending, `V: K×D`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors<T> {
    pub u: Array2<T>,
    pub s: Vec<T>,
    pub v: Array2<T>,
}

/// Checks the dense size guard and returns `(D, K)` as `usize`.
pub fn dense_dims(spec: &BasisSpec) -> Result<(usize, usize)> {
    let (d, k) = (spec.input_dim(), spec.param_dim());
    let entries = d.saturating_mul(k);
    if entries > DENSE_ENTRY_LIMIT {
        return Err(Error::TooLarge {
            what: "dense structure constants",
            entries,
            limit: DENSE_ENTRY_LIMIT,
        });
    }
    Ok((d as usize, k as usize))
}

impl<T: Scalar> StructureConstants<T> {
    pub fn new(gamma: Array2<T>, spec: BasisSpec) -> Result<Self> {
        let (d, k) = dense_dims(&spec)?;
        if gamma.nrows() != d {
            return Err(Error::DimensionMismatch {
                what: "structure constant rows",
                expected: d,
                actual: gamma.nrows(),
            });
        }
        if gamma.ncols() != k {
            return Err(Error::DimensionMismatch {
                what: "structure constant columns",
                expected: k,
                actual: gamma.ncols(),
            });
        }
        if gamma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("non-finite structure constant".into()));
        }
        Ok(Self { gamma, spec })
    }

    /// `e(x)ᵀ Γ ι(θ)` evaluated directly.
    pub fn evaluate(&self, x: &[T], theta: &[T]) -> Result<T> {
        let e = eval_product_basis(&self.spec, x, Side::Inputs)?;
        let iota = eval_product_basis(&self.spec, theta, Side::Params)?;
        let g_iota = self.gamma.dot(&Array1::from(iota));
        Ok(linalg::dot(&e, g_iota.as_slice().expect("contiguous")))
    }
}

/// I.i.d. uniform `[−1, 1]` structure constants.
pub fn random_structure_constants<T: Scalar, R: Rng + ?Sized>(
    spec: &BasisSpec,
    rng: &mut R,
) -> Result<StructureConstants<T>> {
    let (d, k) = dense_dims(spec)?;
    let gamma = Array2::from_shape_simple_fn((d, k), || symmetric_unit(rng));
    Ok(StructureConstants {
        gamma,
        spec: spec.clone(),
    })
}

/// Flips `(u_ρ, v_ρ)` pairs so the largest-magnitude entry of each `u_ρ` is
/// nonnegative.
pub fn fix_signs<T: Scalar>(u: &mut Array2<T>, v: &mut Array2<T>) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut best = T::zero();
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < T::zero() {
            u.column_mut(j).mapv_inplace(|x| -x);
            v.column_mut(j).mapv_inplace(|x| -x);
        }
    }
}

pub fn svd_decompose<T: Scalar>(gamma: &StructureConstants<T>) -> Result<SvdFactors<T>> {
    let (d, k) = gamma.gamma.dim();
    if k < d {
        return Err(Error::Precondition(format!(
            "SVD factors need K >= D, got D={d}, K={k}"
        )));
    }
    let (mut u, s, mut v) = linalg::svd_wide(&gamma.gamma)?;
    fix_signs(&mut u, &mut v);
    Ok(SvdFactors { u, s, v })
}

/// `tr(S⁴) / tr(S²)²`.
pub fn purity<T: Scalar>(s: &[T]) -> Result<T> {
    let s2: T = s.iter().map(|&x| x * x).sum();
    if s2 == T::zero() {
        return Err(Error::ZeroSpectrum);
    }
    let s4: T = s.iter().map(|&x| x * x * x * x).sum();
    Ok(s4 / (s2 * s2))
}

/// Rescales a spectrum so that `tr(S²) = 1`.
pub fn normalize_spectrum<T: Scalar>(s: &[T]) -> Result<Vec<T>> {
    let n: T = s.iter().map(|&x| x * x).sum::<T>().sqrt();
    if n == T::zero() {
        return Err(Error::ZeroSpectrum);
    }
    Ok(s.iter().map(|&x| x / n).collect())
}

/// Flat spectrum `1/√r` of length `r`.
pub fn flat_spectrum<T: Scalar>(r: usize) -> Vec<T> {
    vec![T::from_count(r).sqrt().recip(); r]
}

/// Multiplies `s_ρ` by `exp(−(ρ−R)/ξ)` for every 1-based `ρ > R`.
pub fn decay_spectrum<T: Scalar>(s: &[T], rank: usize, xi: T) -> Result<Vec<T>> {
    if rank < 1 || rank >= s.len() {
        return Err(Error::Precondition(format!(
            "decay rank must satisfy 1 <= R < {}, got {rank}",
            s.len()
        )));
    }
    if !(xi > T::zero()) {
        return Err(Error::Precondition("decay rate must be positive".into()));
    }
    Ok(s.iter()
        .enumerate()
        .map(|(i, &x)| {
            if i < rank {
                x
            } else {
                x * (-T::from_count(i + 1 - rank) / xi).exp()
            }
        })
        .collect())
}

pub fn apply_spectrum_decay<T: Scalar>(
    factors: &SvdFactors<T>,
    rank: usize,
    xi: T,
) -> Result<SvdFactors<T>> {
    Ok(SvdFactors {
        u: factors.u.clone(),
        s: decay_spectrum(&factors.s, rank, xi)?,
        v: factors.v.clone(),
    })
}

impl<T: Scalar> SvdFactors<T> {
    pub fn input_rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Array2<T> {
        let us = Array2::from_shape_fn(self.u.dim(), |(i, j)| self.u[[i, j]] * self.s[j]);
        us.dot(&self.v.t())
    }

    /// Same factors with another spectrum.
    pub fn with_spectrum(&self, s: Vec<T>) -> Self {
        Self {
            u: self.u.clone(),
            s,
            v: self.v.clone(),
        }
    }

    pub fn check(&self, spec: &BasisSpec) -> Result<()> {
        let (d, k) = dense_dims(spec)?;
        for (what, expected, actual) in [
            ("U rows", d, self.u.nrows()),
            ("U columns", d, self.u.ncols()),
            ("spectrum length", d, self.s.len()),
            ("V rows", k, self.v.nrows()),
            ("V columns", d, self.v.ncols()),
        ] {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Dense factored model: spec plus `(U, S, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseModel<T> {
    pub spec: BasisSpec,
    pub factors: SvdFactors<T>,
}

impl<T: Scalar> DenseModel<T> {
    pub fn new(spec: BasisSpec, factors: SvdFactors<T>) -> Result<Self> {
        factors.check(&spec)?;
        Ok(Self { spec, factors })
    }

    pub fn with_spectrum(&self, s: Vec<T>) -> Result<Self> {
        Self::new(self.spec.clone(), self.factors.with_spectrum(s))
    }
}

/// Contracts `w` (length `Π dᵢ`, first index slowest) with one vector per
/// slot.
pub fn contract_kron<T: Scalar>(w: &[T], factors: &[&[T]]) -> T {
    let mut cur: Vec<T> = w.to_vec();
    for f in factors.iter().rev() {
        let d = f.len();
        cur = cur.chunks_exact(d).map(|chunk| linalg::dot(chunk, f)).collect();
    }
    debug_assert_eq!(cur.len(), 1);
    cur[0]
}

fn derivative_locals<T: Scalar>(local: &LocalBasis, locals: &[Vec<T>]) -> Vec<Vec<T>> {
    locals.iter().map(|v| local.differentiate(v)).collect()
}

impl<T: Scalar> FactoredModel<T> for DenseModel<T> {
    fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    fn spectrum(&self) -> &[T] {
        &self.factors.s
    }

    fn input_features(&self, x: &[T]) -> Result<Vec<T>> {
        let e = Array1::from(eval_product_basis(&self.spec, x, Side::Inputs)?);
        Ok(self.factors.u.t().dot(&e).to_vec())
    }

    fn param_features(&self, theta: &[T]) -> Result<Vec<T>> {
        let iota = Array1::from(eval_product_basis(&self.spec, theta, Side::Params)?);
        Ok(self.factors.v.t().dot(&iota).to_vec())
    }

    fn param_jacobian(&self, theta: &[T]) -> Result<Array2<T>> {
        let locals = local_vectors(&self.spec, theta, Side::Params)?;
        let derivs = derivative_locals(&self.spec.param_local(), &locals);
        let m = locals.len();
        let k = self.factors.v.nrows();
        let mut dmat = Array2::zeros((k, m));
        for j in 0..m {
            let factors: Vec<&[T]> = (0..m)
                .map(|i| if i == j { derivs[i].as_slice() } else { locals[i].as_slice() })
                .collect();
            let col = crate::basis::kron(&factors);
            dmat.column_mut(j).assign(&Array1::from(col));
        }
        Ok(self.factors.v.t().dot(&dmat))
    }

    fn param_vjp(&self, theta: &[T], c: &[T]) -> Result<Vec<T>> {
        let locals = local_vectors(&self.spec, theta, Side::Params)?;
        let derivs = derivative_locals(&self.spec.param_local(), &locals);
        if c.len() != self.factors.s.len() {
            return Err(Error::DimensionMismatch {
                what: "cotangent",
                expected: self.factors.s.len(),
                actual: c.len(),
            });
        }
        let w = self.factors.v.dot(&ndarray::ArrayView1::from(c));
        let w = w.as_slice().expect("contiguous");
        let m = locals.len();
        Ok((0..m)
            .map(|j| {
                let factors: Vec<&[T]> = (0..m)
                    .map(|i| if i == j { derivs[i].as_slice() } else { locals[i].as_slice() })
                    .collect();
                contract_kron(w, &factors)
            })
            .collect())
    }
}

/// `Σ_ρ s_ρ (Uᵀe(x))_ρ (Vᵀι(θ))_ρ`.
pub fn evaluate_model<T: Scalar>(
    factors: &SvdFactors<T>,
    spec: &BasisSpec,
    x: &[T],
    theta: &[T],
) -> Result<T> {
    factors.check(spec)?;
    let model = DenseModel {
        spec: spec.clone(),
        factors: factors.clone(),
    };
    model.evaluate(x, theta)
}

/// `∂f/∂θ` of the dense model.
pub fn gradient<T: Scalar>(
    factors: &SvdFactors<T>,
    spec: &BasisSpec,
    x: &[T],
    theta: &[T],
) -> Result<Vec<T>> {
    factors.check(spec)?;
    let model = DenseModel {
        spec: spec.clone(),
        factors: factors.clone(),
    };
    model.gradient(x, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn spec_1d() -> BasisSpec {
        BasisSpec::new(1, 1, vec![1], vec![1], true, true).unwrap()
    }

    #[test]
    fn random_constants_are_deterministic_and_bounded() {
        let spec = BasisSpec::fourier_1d(1, 1).unwrap();
        let a: StructureConstants<f64> = random_structure_constants(&spec, &mut substream(5, &[])).unwrap();
        let b: StructureConstants<f64> = random_structure_constants(&spec, &mut substream(5, &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.gamma.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn dense_guard_rejects_large_models() {
        let spec = BasisSpec::fourier_1d(3, 24).unwrap();
        let err = random_structure_constants::<f64, _>(&spec, &mut substream(0, &[])).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
        assert!(err.to_string().contains("tensorized"));
    }

    #[test]
    fn svd_of_padded_identity() {
        let spec = spec_1d();
        let gamma: Array2<f64> = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let f = svd_decompose(&StructureConstants::new(gamma, spec).unwrap()).unwrap();
        for s in &f.s {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_rejects_tall_matrices() {
        let spec = BasisSpec::new(2, 1, vec![1], vec![1], true, true).unwrap();
        let gamma = Array2::<f64>::zeros((9, 3));
        let err = svd_decompose(&StructureConstants::new(gamma, spec).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn sign_convention_holds() {
        let spec = BasisSpec::fourier_1d(2, 2).unwrap();
        let g = random_structure_constants::<f64, _>(&spec, &mut substream(9, &[])).unwrap();
        let f = svd_decompose(&g).unwrap();
        for col in f.u.columns() {
            let big = col.iter().fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            assert!(big >= 0.0);
        }
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((purity(&[0.5f64; 4]).unwrap() - 0.25).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        assert!((purity(&[h, h, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(purity::<f64>(&[0.0, 0.0]), Err(Error::ZeroSpectrum));
    }

    #[test]
    fn decay_examples() {
        let s = flat_spectrum::<f64>(4);
        let d = decay_spectrum(&s, 2, 1.0).unwrap();
        assert_eq!(&d[..2], &s[..2]);
        assert!((d[2] - (-1f64).exp() / 2.0).abs() < 1e-15);
        assert!((d[3] - (-2f64).exp() / 2.0).abs() < 1e-15);
        let same = decay_spectrum(&s, 2, 1e12).unwrap();
        for (a, b) in same.iter().zip(&s) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(decay_spectrum(&s, 0, 1.0).is_err());
        assert!(decay_spectrum(&s, 4, 1.0).is_err());
    }

    #[test]
    fn single_entry_model() {
        // Γ has one entry s at (cos row, sin column): f = 2s cos(x) sin(θ).
        let spec = spec_1d();
        let s = 0.7;
        let mut gamma = Array2::zeros((3, 3));
        gamma[[1, 2]] = s;
        let g = StructureConstants::new(gamma, spec.clone()).unwrap();
        let f = svd_decompose(&g).unwrap();
        let (x, th) = (0.4_f64, -1.3_f64);
        let v = evaluate_model(&f, &spec, &[x], &[th]).unwrap();
        assert!((v - 2.0 * s * x.cos() * th.sin()).abs() < 1e-14);
        let gr = gradient(&f, &spec, &[x], &[th]).unwrap();
        assert!((gr[0] - 2.0 * s * x.cos() * th.cos()).abs() < 1e-14);
    }

    #[test]
    fn constant_in_theta_model_has_zero_gradient() {
        let spec = BasisSpec::fourier_1d(2, 2).unwrap();
        let mut gamma = Array2::zeros((5, 9));
        for i in 0..5 {
            gamma[[i, 0]] = (i as f64) - 2.0;
        }
        let f = svd_decompose(&StructureConstants::new(gamma, spec.clone()).unwrap()).unwrap();
        let gr = gradient(&f, &spec, &[0.3], &[0.1, 2.0]).unwrap();
        assert!(gr.iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn contract_kron_matches_dense_inner_product() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.5, -1.0];
        let w: Vec<f64> = (0..6).map(|i| i as f64 + 1.0).collect();
        let k = crate::basis::kron(&[&a[..], &b[..]]);
        assert_eq!(contract_kron(&w, &[&a, &b]), linalg::dot(&w, &k));
    }
}
