//! Finite-gap approximation of periodic anomalous waves of the focusing
//! nonlinear Schrodinger equation `i u_t + u_xx + 2 |u|^2 u = 0`, together
//! with the closed-form breather formulas and a split-step Fourier reference
//! solver used to check it.

pub mod closed_forms;
pub mod error;
pub mod riemann;
pub mod spectral;
pub mod ssfm;
pub mod theta;

pub use error::{Error, Result};
