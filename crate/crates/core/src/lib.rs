//! Simulation and analysis toolkit for atomic-frequency-comb (AFC) optical
//! quantum memories in inhomogeneously broadened erbium ensembles.
//!
//! - [`spectral`]: detuning grids, optical-depth profiles, analytic combs and hole burning
//! - [`propagation`]: minimum-phase transfer functions and FFT pulse propagation
//! - [`protocols`]: storage, time-bin qubit, multimode and broadband experiments
//! - [`detection`]: photon-counting chain, Poisson sampling and noise accounting
//! - [`analysis`]: closed-form efficiency, damped least-squares fitting

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detection;
pub mod error;
pub mod fft;
pub mod propagation;
pub mod protocols;
pub mod spectral;
pub mod table;

pub use error::{AfcError, Result};
