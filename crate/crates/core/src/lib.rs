//! Geometric observables of a Hermitian "error Hamiltonian" embedding of
//! multivariate feature streams, and the statistical harness used to judge
//! them as regime-shift detectors.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense Hermitian eigensolver, partial trace, purity.
//! - [`embedding`]: operator sets, the error Hamiltonian and its ground state.
//! - [`geometry`]: quantum metric (finite-difference and perturbative), Berry
//!   plaquettes, Chern integrals, curvature/gap bound, metric spectra.
//! - [`observables`]: per-time-step channel series.
//! - [`features`]: OHLCV ingestion, feature matrices, causal preprocessing.
//! - [`scoring`]: causal z-scores, threshold calibration, alarm extraction.
//! - [`baselines`]: classical comparators.
//! - [`evaluation`]: effect sizes, rank tests, null models, walk-forward,
//!   risk overlay.

pub mod baselines;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod linalg;
pub mod observables;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
pub use num_complex::Complex64;
