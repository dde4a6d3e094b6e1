//! Computational ghost imaging with a single-pixel detector.
//!
//! The crate covers the whole simulated experiment:
//!
//! * [`hadamard`]: Sylvester bases, orderings, compression and the FWHT.
//! * [`optics`]: imperfect mask rendering, source blur and bucket noise.
//! * [`phantoms`]: deterministic test objects.
//! * [`wavelet`]: multi-level orthonormal Haar transform.
//! * [`reconstruct`]: correlation GI, TV-ADMM and wavelet FISTA.
//! * [`metrics`]: CNR, modulation depth, MSE/PSNR and knife-edge FWHM.

pub mod error;
pub mod hadamard;
pub mod metrics;
pub mod optics;
pub mod phantoms;
pub mod reconstruct;
pub mod wavelet;

pub use error::{Error, Result};
