//! Spectral and nonlinear stability analysis of a hyperbolic-parabolic
//! vasculogenesis model linearised around a constant state.

// `!(x > 0.0)` is how NaN gets rejected; index loops walk parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dispersion;
pub mod error;
pub mod instability;
pub mod model;
pub mod nonlinear;
pub mod optimize;
pub mod ratefit;
pub mod semigroup;
pub mod verify;

pub use error::{Error, Result};
pub use model::{classify_stability, derive_coeffs, DerivedCoeffs, ModelParams, PressureLaw, Stability};
