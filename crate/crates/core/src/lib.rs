//! Geometry of word representations from co-occurrence statistics.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] tokenizes raw text and accumulates windowed co-occurrence mass.
//! * [`matrix`] turns co-occurrence tables into dense target matrices (M*, PMI).
//! * [`embed`] factorizes targets into embeddings and projects subsets with PCA.
//! * [`lattice`] holds the analytic predictions for translation-symmetric targets.
//! * [`kernel_fit`] estimates exponential kernels from empirical matrices.
//! * [`probe`] implements linear coordinate decoding and its error bound.
//! * [`latent`] provides generative seasonal / attribute models and experiments.
//! * [`pipeline`] wires the stages together behind a declarative config.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod embed;
pub mod error;
pub mod io;
pub mod kernel_fit;
pub mod latent;
pub mod lattice;
pub mod linalg;
pub mod matrix;
pub mod pipeline;
pub mod probe;

pub use error::{Error, Result};
