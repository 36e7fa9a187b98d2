//! Core library for quantifying model multiplicity in ensembles of
//! risk-equivalent classifiers.
//!
//! Two notions of multiplicity are measured over an ensemble of model
//! variants that reach the same empirical risk:
//!
//! * **Predictive multiplicity (PM)** — the expected per-sample standard
//!   deviation of the output probability vectors across variants.
//! * **Representational multiplicity (RM)** — the negated mean of the top
//!   canonical correlations between internal activations of variant pairs,
//!   computed with SVCCA (SVD truncation to a variance-explaining subspace
//!   followed by canonical correlation analysis).
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of `std` for freestanding builds. Everything here is
//! pure computation over in-memory data: file formats, persistence, and
//! the command-line surface live in the companion `rashomon-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("rashomon-core needs either the `std` or the `libm` feature");

pub(crate) mod math;
pub(crate) mod rng;

pub mod data;
pub mod experiments;
pub mod linalg;
pub mod multiplicity;
pub mod nn;
pub mod ood;
pub mod svcca;

pub use linalg::{Matrix, SvdResult};
pub use multiplicity::{ConfabulationEntry, PredictionTable, RiskBand};
pub use svcca::{ActivationMatrix, CcaSpectrum, SvccaConfig};
