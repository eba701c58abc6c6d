//! Joint CFO and channel estimation for beam-swept synchronization bursts
//! received under strong co-channel interference.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! estimation stack:
//!
//! - [`sequences`]: Zadoff-Chu training sequences and correlation primitives.
//! - [`synthesis`]: preamble assembly, ground-truth draws and multi-transmitter
//!   burst synthesis at a calibrated SINR.
//! - [`estimators`]: correlation statistics, block least-squares channel and
//!   scaling estimation, the separate and cross-preamble CFO estimators.
//! - [`joint`]: the iterative interference-cancelling joint estimator.
//! - [`bounds`]: the closed-form Cramér-Rao bound and a numeric Fisher oracle.
//! - [`baselines`]: CP-correlation, split autocorrelation and weighted-average
//!   comparison estimators.
//!
//! Sign convention: a transmitter with CFO `omega` contributes
//! `exp(+j * omega * m)` at absolute sample index `m`. Every estimator in the
//! crate returns offsets in that convention, in radians per sample.
#![no_std]
#![forbid(unsafe_code)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod baselines;
pub mod bounds;
mod error;
pub mod estimators;
pub mod joint;
mod linalg;
pub mod sequences;
pub mod synthesis;

pub use error::{Error, Result};
pub use num_complex::Complex64;
