//! Denoising of 1D signals with fractional-order total generalized variation
//! (TGV^r) regularization.
//!
//! The crate provides:
//! - signal synthesis, seeded Gaussian noise, and CSV I/O ([`signal`]);
//! - discrete fractional Sobolev seminorms and limit sweeps ([`fracnorm`]);
//! - the proximal/projection toolbox of the solver ([`prox`]);
//! - a first-order primal-dual solver for the TGV^r denoising functional and
//!   standalone seminorm evaluation ([`solver`]);
//! - exhaustive bilevel grid search over the weights and the derivative
//!   order, with cost-landscape export ([`trainer`]).

pub mod config;
pub mod error;
pub mod fracnorm;
pub mod prox;
pub mod signal;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result};
pub use signal::{Grid, Signal};
