//! Posterior consistency and contraction rates for Bayesian inverse problems.
//!
//! Hilbert-scale arithmetic ([`spectral`]), series priors and small-ball
//! estimates ([`priors`]), the 1D elliptic forward/inverse pair ([`forward`]),
//! posterior densities and samplers ([`posterior`]), end-to-end contraction
//! experiments ([`consistency`]) and theoretical rate calculators ([`rates`]).

pub mod consistency;
pub mod error;
pub mod forward;
pub mod grid;
pub mod numerics;
pub mod posterior;
pub mod priors;
pub mod rates;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::GridFunction;
pub use spectral::{ScaleSpec, SpectralField};
