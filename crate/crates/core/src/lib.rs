//! Simulation of stationary half-plane slit-map aggregation (SHL(0)) and
//! Monte Carlo estimation of its fluctuation field.
//!
//! The library is split along the natural pipeline:
//!
//! - [`conformal`]: the slit-map kernel (map, derivative, vertical increment)
//!   plus adaptive quadrature for the deterministic integrals used as
//!   independent oracles.
//! - [`process`]: Poisson arrival streams and the event-driven composition
//!   engine that evolves tracked points under the backward process,
//!   accumulating chain-rule derivatives and Doob compensators.
//! - [`estimators`]: seeded, parallel Monte Carlo drivers for the
//!   quantitative laws of the fluctuation field (variance, covariance,
//!   maxima, exponential moments, window truncation, distortion).
//!
//! Determinism is a hard requirement throughout: every sample is generated
//! from `(master_seed, stream_id)` with a counter-based RNG, so serial and
//! parallel runs produce bit-identical results.

pub mod conformal;
pub mod estimators;
pub mod process;

/// Plane coordinate used by every map evaluation.
pub type Complex = num_complex::Complex64;
