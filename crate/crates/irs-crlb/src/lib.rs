//! Cramer-Rao bound analysis and phase-shift design for a multi-IRS-aided
//! pulse-Doppler radar.
//!
//! A single-antenna radar observes a moving point target both directly
//! (line of sight) and through `K` intelligent reflecting surfaces, each a
//! uniform linear array of `M` passive phase-shifting elements. Across `N`
//! pulses the received slow-time vector is `y = A alpha + w`, where the
//! columns of `A` carry per-path channel gains and Doppler steering. This
//! crate computes the Fisher information of the joint reflectivity/Doppler
//! parameter vector, the Cramer-Rao lower bound (CRLB), and designs the IRS
//! phase shifts by minimizing an A-optimality surrogate
//! `Tr(F_aa^-1) + Tr(F_nn^-1)` with a penalized alternating scheme.
//!
//! Module map:
//! - [`geometry`]: scene geometry, array steering, path loss, IRS phase
//!   matrices and the quadratic-form channel representation.
//! - [`signal`]: slow-time Doppler steering, the sensing matrix `A` and its
//!   Doppler derivative, and noisy received-vector synthesis.
//! - [`fisher`]: analytic FIM blocks, full-FIM assembly and CRLB inversion,
//!   closed no-IRS forms, and a finite-difference Slepian-Bangs oracle.
//! - [`optimizer`]: the penalized A-optimality objective and the
//!   alternating phase-design loop.
//! - [`scenario`]: experiment configuration, presets and deterministic
//!   scene construction.
//! - [`sweep`]: noise-variance and link-strength-ratio sweeps with CSV
//!   emission.

pub mod cli;
pub mod error;
pub mod fisher;
pub mod geometry;
pub mod optimizer;
pub mod scenario;
pub mod signal;
pub mod sweep;

pub use error::{Error, Result};
