//! Robust exponential stability and invariant-ellipsoid certificates for
//! discrete-time Lur'e loops with slope-restricted nonlinearities, using FIR
//! O'Shea-Zames-Falb multipliers with a terminal cost.

use openblas_src as _;

pub mod certify;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod multiplier;
pub mod nonlin;
pub mod sdp;
pub mod validate;

pub use error::{Error, Result};
