//! The factored-model abstraction shared by dense and tensorized models.
//!
//! Every model has the form `f(x; θ) = Σ_ρ s_ρ φ_ρ(x) ψ_ρ(θ)` where `φ` are
//! the rotated input features and `ψ = Vᵀι(θ)` the parameter features.

use ndarray::Array2;

use crate::basis::BasisSpec;
use crate::error::Result;
use crate::scalar::Scalar;

pub trait FactoredModel<T: Scalar>: Send + Sync {
    fn spec(&self) -> &BasisSpec;

    /// Correlation spectrum; its length is the feature rank `r`.
    fn spectrum(&self) -> &[T];

    /// Rotated input features `φ(x)`, length `r`.
    fn input_features(&self, x: &[T]) -> Result<Vec<T>>;

    /// Parameter features `ψ(θ) = Vᵀι(θ)`, length `r`.
    fn param_features(&self, theta: &[T]) -> Result<Vec<T>>;

    /// `r × M` matrix whose column `j` is `∂ψ/∂θ_j = Vᵀ B_j ι(θ)`.
    fn param_jacobian(&self, theta: &[T]) -> Result<Array2<T>>;

    /// `Jᵀc` for the parameter Jacobian `J`, without forming `J`.
    fn param_vjp(&self, theta: &[T], c: &[T]) -> Result<Vec<T>> {
        let j = self.param_jacobian(theta)?;
        Ok(j.t().dot(&ndarray::ArrayView1::from(c)).to_vec())
    }

    /// `ψ(θ)` and `Jᵀc` for a cotangent `c` computed from `ψ`.
    fn param_features_vjp(
        &self,
        theta: &[T],
        cotangent: &mut dyn FnMut(&[T]) -> Vec<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        let psi = self.param_features(theta)?;
        let c = cotangent(&psi);
        let g = self.param_vjp(theta, &c)?;
        Ok((psi, g))
    }

    fn rank(&self) -> usize {
        self.spectrum().len()
    }

    fn n_params(&self) -> usize {
        self.spec().n_params
    }

    fn evaluate(&self, x: &[T], theta: &[T]) -> Result<T> {
        let phi = self.input_features(x)?;
        let psi = self.param_features(theta)?;
        Ok(weighted_sum(self.spectrum(), &phi, &psi))
    }

    /// `∂f/∂θ` at `(x, θ)`.
    fn gradient(&self, x: &[T], theta: &[T]) -> Result<Vec<T>> {
        let phi = self.input_features(x)?;
        let c: Vec<T> = self.spectrum().iter().zip(&phi).map(|(&s, &p)| s * p).collect();
        self.param_vjp(theta, &c)
    }
}

/// `Σ_ρ s_ρ a_ρ b_ρ`.
pub fn weighted_sum<T: Scalar>(s: &[T], a: &[T], b: &[T]) -> T {
    s.iter()
        .zip(a)
        .zip(b)
        .fold(T::zero(), |acc, ((&s, &a), &b)| acc + s * a * b)
}
