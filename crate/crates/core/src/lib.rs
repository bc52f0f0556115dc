//! Negative binomial INAR(1) count time series.
//!
//! The process `X_{t+1} = (α, μ, r)★X_t + ε_{t+1}` has NB(r, μ) marginals and
//! NB(r, ᾱμ) innovations. This crate provides the thinning operator and
//! its `(β, θ)⊙` reparameterization, exact h-step transition
//! probabilities, stationary simulation, and the conditional least squares,
//! Yule–Walker, variance least squares and conditional maximum likelihood
//! estimators together with their predicted asymptotic covariances.

pub mod distributions;
pub mod error;
pub mod estimation;
pub mod io;
pub mod montecarlo;
pub mod optim;
pub mod oracle;
pub mod process;
pub mod selftest;
pub mod special;
pub mod thinning;

pub use distributions::{coeff_a, coeff_b, NbParams, ShiftedGeomParams};
pub use error::{Error, Result};
pub use process::{Series, TransitionTable};
pub use thinning::{AltParams, HFoldParams, ModelParams, Offspring};
