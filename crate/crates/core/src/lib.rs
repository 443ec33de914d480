//! Fourier regression models: structure constants, Fisher information,
//! effective dimension, biased-model construction, tensor-network factored
//! models and training experiments.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix `f64`, which is what the experiment runner uses.

pub mod basis;
pub mod container;
pub mod error;
pub mod fim;
pub mod linalg;
pub mod model;
pub mod modelgen;
pub mod qnn;
pub mod rng;
pub mod scalar;
pub mod structure;
pub mod tensornet;
pub mod training;

pub use basis::{BasisSpec, Side};
pub use error::{Error, Result};
pub use model::FactoredModel;
pub use modelgen::SpectralModel;
pub use scalar::Scalar;

pub type Real = f64;
pub type Factors = structure::SvdFactors<f64>;
pub type Constants = structure::StructureConstants<f64>;
pub type Dense = structure::DenseModel<f64>;
pub type Tensorized = tensornet::TensorizedModel<f64>;
pub type Fim = fim::FimEstimate<f64>;
pub type Ed = fim::EdEstimate<f64>;
pub type DenseGen = modelgen::DenseGenerator<f64>;
pub type TensorGen = tensornet::TensorizedGenerator<f64>;
pub type Train = tensornet::TensorTrain<f64>;
pub type Trace = training::TrainingTrace<f64>;
