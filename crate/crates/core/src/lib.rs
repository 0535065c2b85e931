//! Simulation and estimation toolkit for diagram coefficients of generalized
//! squeezed oscillator states probed by qubit Ramsey interferometry.
//!
//! The crate is layered bottom-up:
//!
//! * [`fockspace`]: truncated Fock-space operators, states and a Lindblad integrator.
//! * [`charfunc`]: closed-form and numerical characteristic functions.
//! * [`diagrams`]: truncated diagram models with analytic Jacobians.
//! * [`sampler`]: Born-rule shot sampling and the trapped-ion protocol simulator.
//! * [`estimator`]: ML / weighted LS fits, Fisher covariance, bias, sweeps, extrapolation.
//! * [`cli`]: config-driven commands behind the `diagtomo` binary.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charfunc;
pub mod cli;
pub mod config;
pub mod diagrams;
pub mod error;
pub mod estimator;
pub mod fockspace;
mod fsio;
pub mod sampler;

pub use error::{Error, Result};
pub use num_complex::Complex64;
