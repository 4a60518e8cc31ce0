//! Input-output modelling of driven quantum Ising chains.
//!
//! The crate covers the whole pipeline:
//!
//! * [`spin`] builds transverse and non-integrable Ising Hamiltonians, finds
//!   the initial ground state and propagates the driven Schrödinger equation,
//!   emitting the x-magnetization response.
//! * [`dataset`] turns monochromatic drives into paired input/output corpora,
//!   with min-max scaling, seeded splits and a checksummed on-disk format.
//! * [`neural`] is a small float64 engine for causal dilated convolutional
//!   autoencoders (plain and variational) with exact reverse-mode gradients.
//! * [`training`] runs the seeded Adam/Huber protocol and model ensembles.
//! * [`evaluation`] scores models with per-series R², applies the multi-run
//!   stability criterion and searches for the smallest stable architecture.
//! * [`complexity`] computes amplitude-aware permutation entropy sweeps.
//!
//! Data-parallel loops (samples, batches, ensemble runs) go through
//! [`parallel`], which uses rayon when the `parallel` feature is enabled and
//! plain iterators otherwise. Results are identical either way.

pub mod complexity;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod neural;
pub mod parallel;
mod payload;
pub mod spin;
pub mod training;

pub use error::{Error, Result};

/// Version string recorded in every manifest this crate writes.
pub const CODE_VERSION: &str = concat!("optics-tcn ", env!("CARGO_PKG_VERSION"));
