//! Weight-space functional transformers.
//!
//! A small dense-tensor library with reverse-mode differentiation, the
//! neuron-permutation model of feedforward weight spaces, permutation
//! equivariant self-attention and invariant cross-attention over weight-space
//! features, and the models built from them (equivariant NFT stacks, SIREN
//! networks, the Inr2Array autoencoder and a latent classifier).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! anything touching the filesystem live in the `wsfn` companion crate.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::should_implement_trait)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod models;
pub mod optim;
pub mod params;
pub mod precision;
pub mod rng;
pub mod tensor;
pub mod weight_space;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use params::{Bound, ParamSet};
pub use precision::{precision, set_precision, Precision};
pub use tensor::Tensor;
pub use weight_space::{NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec};
