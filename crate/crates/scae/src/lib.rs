//! Stacked capsule autoencoders over the `scae-core` engine: the
//! constellation model, the part/object image models, sparsity losses,
//! data pipelines, unsupervised-classification metrics, and the trainer.
//!
//! Everything here runs at `f64`; the aliases below pin the scalar type.

pub mod capsules;
pub mod ccae;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod ocae;
pub mod pcae;
pub mod trainer;

pub use error::{Error, Result};

pub type Tape = scae_core::Tape<f64>;
pub type ParamStore = scae_core::ParamStore<f64>;
pub type Param = scae_core::Param<f64>;
pub type TensorId = scae_core::TensorId;
pub type Rng = rand_chacha::ChaCha8Rng;
