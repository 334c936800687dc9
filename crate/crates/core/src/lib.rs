//! A desk-scale laboratory for studying superposition under correlated features.
//!
//! The crate builds binary bag-of-words datasets from raw text ([`corpus`]) or
//! from synthetic latent curves ([`synth`]), trains tied-weight autoencoders and
//! small embedding classifiers from scratch ([`models`], [`tasks`]), and runs a
//! battery of representation diagnostics over the trained weights
//! ([`diagnostics`]). Dense symmetric linear algebra lives in [`linalg`].
//!
//! Datasets and models persist through little-endian binary containers
//! ([`container`], [`models::checkpoint`]).

pub mod container;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod report;
pub mod rng;
pub mod sparse;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
pub use sparse::SparseBinary;
