//! Filter-based ensembles of small neural networks.
//!
//! The crate bundles a compact network engine with exact gradients, a set of
//! front filters, sensitivity correlation analysis between filters, a
//! gradient attack suite with BPDA support, vote/score ensembles with
//! Lipschitz margin certificates, and dataset loaders.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`). The
//! `*64`/`*32` aliases below name the concrete instantiations; the experiment
//! pipeline uses the `f64` ones.

pub mod attacks;
pub mod data;
pub mod ensemble;
mod error;
pub mod filters;
mod image;
pub mod nn;
mod scalar;
pub mod sensitivity;
mod tensor;

pub use error::{Error, Result};
pub use image::{clamp01, Image};
pub use scalar::Real;
pub use tensor::{argmax, cross_entropy, softmax, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type SubModel64 = ensemble::SubModel<f64>;
pub type Ensemble64 = ensemble::Ensemble<f64>;
