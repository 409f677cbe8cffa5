//! Time-domain digital backpropagation (TD-DBP) toolkit.
//!
//! The crate is organised along the receiver signal chain:
//!
//! * [`signal`]: complex baseband waveforms, QAM mapping, RRC shaping, quality metrics.
//! * [`channel`]: split-step Fourier forward fiber model with lumped amplification and ASE.
//! * [`filter`]: chromatic-dispersion FIR design (constrained least squares) and responses.
//! * [`dbp`]: the symmetric 1-step-per-span FIR/nonlinear cascade, float or fixed point.
//! * [`fixed`]: bit-exact fixed-point formats, rounding, scaling and cost accounting.
//! * [`learn`]: joint gradient-based optimisation of all filter taps with pruning and
//!   quantization-aware fine tuning.
//! * [`system`]: transmitter / receiver glue shared by training and experiments.
//! * [`harness`]: experiment specs, sweeps, CSV output and comparison tables.

pub mod channel;
pub mod dbp;
pub mod error;
pub mod filter;
pub mod fixed;
pub mod harness;
pub mod learn;
pub mod signal;
pub mod system;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
