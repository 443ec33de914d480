//! Trigonometric local bases, their tensor products and the local derivative
//! operator.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frequency content of the inputs and parameters of a model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub n_features: usize,
    pub n_params: usize,
    pub input_freqs: Vec<u32>,
    pub param_freqs: Vec<u32>,
    #[serde(rename = "input_constant")]
    pub include_input_constant: bool,
    #[serde(rename = "param_constant")]
    pub include_param_constant: bool,
}

/// Which side of the model a point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Inputs,
    Params,
}

/// One element of a local basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisTag {
    Constant,
    Cos(u32),
    Sin(u32),
}

/// Canonical order of a local basis: constant, cosines by ascending
/// frequency, then sines by ascending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalBasisOrdering {
    tags: Vec<BasisTag>,
}

impl LocalBasisOrdering {
    pub fn tags(&self) -> &[BasisTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, index: usize) -> BasisTag {
        self.tags[index]
    }

    pub fn index_of(&self, tag: BasisTag) -> Option<usize> {
        self.tags.iter().position(|&t| t == tag)
    }
}

/// A single-variable basis `[1?, √2 cos(ωx)…, √2 sin(ωx)…]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalBasis {
    pub freqs: Vec<u32>,
    pub constant: bool,
}

impl LocalBasis {
    pub fn new(freqs: Vec<u32>, constant: bool) -> Result<Self> {
        check_freqs(&freqs)?;
        if freqs.is_empty() && !constant {
            return Err(Error::InvalidSpec("empty local basis".into()));
        }
        Ok(Self { freqs, constant })
    }

    pub fn dim(&self) -> usize {
        2 * self.freqs.len() + usize::from(self.constant)
    }

    pub fn max_freq(&self) -> u32 {
        self.freqs.last().copied().unwrap_or(0)
    }

    fn offset(&self) -> usize {
        usize::from(self.constant)
    }

    pub fn ordering(&self) -> LocalBasisOrdering {
        let mut tags = Vec::with_capacity(self.dim());
        if self.constant {
            tags.push(BasisTag::Constant);
        }
        tags.extend(self.freqs.iter().map(|&w| BasisTag::Cos(w)));
        tags.extend(self.freqs.iter().map(|&w| BasisTag::Sin(w)));
        LocalBasisOrdering { tags }
    }

    pub fn eval_into<T: Scalar>(&self, x: T, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.dim());
        let r2 = T::SQRT_2();
        let off = self.offset();
        let nf = self.freqs.len();
        if self.constant {
            out[0] = T::one();
        }
        for (k, &w) in self.freqs.iter().enumerate() {
            let (s, c) = (T::lit(f64::from(w)) * x).sin_cos();
            out[off + k] = r2 * c;
            out[off + nf + k] = r2 * s;
        }
    }

    pub fn eval<T: Scalar>(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Matrix `β` with `d/dx b_κ(x) = Σ_λ β[κ][λ] b_λ(x)`.
    pub fn derivative_matrix<T: Scalar>(&self) -> Array2<T> {
        let n = self.dim();
        let off = self.offset();
        let nf = self.freqs.len();
        let mut beta = Array2::zeros((n, n));
        for (k, &w) in self.freqs.iter().enumerate() {
            let w = T::lit(f64::from(w));
            beta[[off + k, off + nf + k]] = -w;
            beta[[off + nf + k, off + k]] = w;
        }
        beta
    }

    /// Applies the derivative matrix to a vector of basis values without
    /// forming it.
    pub fn differentiate_into<T: Scalar>(&self, values: &[T], out: &mut [T]) {
        let off = self.offset();
        let nf = self.freqs.len();
        if self.constant {
            out[0] = T::zero();
        }
        for (k, &w) in self.freqs.iter().enumerate() {
            let w = T::lit(f64::from(w));
            out[off + k] = -w * values[off + nf + k];
            out[off + nf + k] = w * values[off + k];
        }
    }

    pub fn differentiate<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); values.len()];
        self.differentiate_into(values, &mut out);
        out
    }
}

fn check_freqs(freqs: &[u32]) -> Result<()> {
    if freqs.iter().any(|&w| w == 0) {
        return Err(Error::InvalidSpec("frequencies must be positive".into()));
    }
    if freqs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec(
            "frequencies must be strictly increasing and duplicate-free".into(),
        ));
    }
    Ok(())
}

impl BasisSpec {
    pub fn new(
        n_features: usize,
        n_params: usize,
        input_freqs: Vec<u32>,
        param_freqs: Vec<u32>,
        include_input_constant: bool,
        include_param_constant: bool,
    ) -> Result<Self> {
        let spec = Self {
            n_features,
            n_params,
            input_freqs,
            param_freqs,
            include_input_constant,
            include_param_constant,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-feature spec with `Ω = {1..n_freqs}` and `Ω̃ = {1}`, constants on.
    pub fn fourier_1d(n_freqs: u32, n_params: usize) -> Result<Self> {
        Self::new(1, n_params, (1..=n_freqs).collect(), vec![1], true, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_params == 0 {
            return Err(Error::InvalidSpec(
                "n_features and n_params must be at least 1".into(),
            ));
        }
        LocalBasis::new(self.input_freqs.clone(), self.include_input_constant)?;
        LocalBasis::new(self.param_freqs.clone(), self.include_param_constant)?;
        Ok(())
    }

    pub fn input_local(&self) -> LocalBasis {
        LocalBasis {
            freqs: self.input_freqs.clone(),
            constant: self.include_input_constant,
        }
    }

    pub fn param_local(&self) -> LocalBasis {
        LocalBasis {
            freqs: self.param_freqs.clone(),
            constant: self.include_param_constant,
        }
    }

    /// Local input dimension `d`.
    pub fn d(&self) -> usize {
        2 * self.input_freqs.len() + usize::from(self.include_input_constant)
    }

    /// Local parameter dimension `d̃`.
    pub fn d_tilde(&self) -> usize {
        2 * self.param_freqs.len() + usize::from(self.include_param_constant)
    }

    /// `D = d^N`, saturating at `u128::MAX`.
    pub fn input_dim(&self) -> u128 {
        pow_saturating(self.d(), self.n_features)
    }

    /// `K = d̃^M`, saturating at `u128::MAX`.
    pub fn param_dim(&self) -> u128 {
        pow_saturating(self.d_tilde(), self.n_params)
    }

    /// Number of trapezoid nodes per input dimension that integrates products
    /// of two input basis functions exactly.
    pub fn required_input_nodes(&self) -> usize {
        2 * self.input_local().max_freq() as usize + 1
    }

    pub fn point_len(&self, side: Side) -> usize {
        match side {
            Side::Inputs => self.n_features,
            Side::Params => self.n_params,
        }
    }

    pub fn local(&self, side: Side) -> LocalBasis {
        match side {
            Side::Inputs => self.input_local(),
            Side::Params => self.param_local(),
        }
    }
}

fn pow_saturating(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

pub fn eval_local_input_basis<T: Scalar>(spec: &BasisSpec, x: T) -> Vec<T> {
    spec.input_local().eval(x)
}

pub fn eval_local_param_basis<T: Scalar>(spec: &BasisSpec, theta: T) -> Vec<T> {
    spec.param_local().eval(theta)
}

/// Kronecker product of vectors, first factor varying slowest.
pub fn kron<T: Scalar, V: AsRef<[T]>>(factors: &[V]) -> Vec<T> {
    let mut out = vec![T::one()];
    for f in factors {
        let f = f.as_ref();
        let mut next = Vec::with_capacity(out.len() * f.len());
        for &a in &out {
            next.extend(f.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// Local basis vectors for every coordinate of `point`.
pub fn local_vectors<T: Scalar>(spec: &BasisSpec, point: &[T], side: Side) -> Result<Vec<Vec<T>>> {
    let expected = spec.point_len(side);
    if point.len() != expected {
        return Err(Error::DimensionMismatch {
            what: match side {
                Side::Inputs => "input point",
                Side::Params => "parameter point",
            },
            expected,
            actual: point.len(),
        });
    }
    let local = spec.local(side);
    Ok(point.iter().map(|&p| local.eval(p)).collect())
}

/// Full product basis vector of length `D` (inputs) or `K` (params).
pub fn eval_product_basis<T: Scalar>(spec: &BasisSpec, point: &[T], side: Side) -> Result<Vec<T>> {
    Ok(kron(&local_vectors(spec, point, side)?))
}

/// The local derivative tensor `β` of the parameter basis.
pub fn derivative_tensor<T: Scalar>(spec: &BasisSpec) -> Array2<T> {
    spec.param_local().derivative_matrix()
}

/// Uniform periodic nodes on [−π, π). With equal weights `1/n` they
/// integrate trigonometric polynomials of degree below `n` exactly against
/// the uniform density.
pub fn trapezoid_nodes<T: Scalar>(n: usize) -> Vec<T> {
    let step = T::lit(2.0) * T::PI() / T::from_count(n);
    (0..n).map(|k| -T::PI() + step * T::from_count(k)).collect()
}

/// Gram matrix of a local basis under the uniform density, by trapezoid rule.
pub fn local_gram<T: Scalar>(local: &LocalBasis, n_nodes: usize) -> Array2<T> {
    let d = local.dim();
    let w = T::from_count(n_nodes).recip();
    let mut g = Array2::zeros((d, d));
    for x in trapezoid_nodes::<T>(n_nodes) {
        let b = local.eval(x);
        for i in 0..d {
            for j in 0..d {
                g[[i, j]] += w * b[i] * b[j];
            }
        }
    }
    g
}

/// Calls `visit` for every point of the tensor-product trapezoid grid with
/// `n_nodes` per dimension, in row-major order.
pub fn for_each_grid_point<T: Scalar>(dims: usize, n_nodes: usize, mut visit: impl FnMut(&[T])) {
    let nodes = trapezoid_nodes::<T>(n_nodes);
    let mut idx = vec![0usize; dims];
    let mut point: Vec<T> = vec![nodes[0]; dims];
    loop {
        visit(&point);
        let mut k = dims;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n_nodes {
                point[k] = nodes[idx[k]];
                break;
            }
            idx[k] = 0;
            point[k] = nodes[0];
        }
    }
}
