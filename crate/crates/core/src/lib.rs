//! Scalar-generic tensor engine with reverse-mode automatic differentiation,
//! plus the affine geometry and neural building blocks used by the capsule
//! autoencoder crates.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! training stack instantiates `f64` for gradient-check fidelity.

pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod shape;
pub mod tape;

pub use error::{Error, Result};
pub use params::{Param, ParamStore};
pub use scalar::Scalar;
pub use tape::{Tape, TensorId};

/// Concrete aliases for the two supported precisions.
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type ParamStore32 = ParamStore<f32>;
