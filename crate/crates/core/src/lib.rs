//! Fully nonlinear second-order elliptic systems on periodic grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: symmetric fourth-order coefficient tensors, symbols and the
//!   ellipticity constant.
//! - [`fields`]: periodic vector and hessian fields with spectral calculus.
//! - [`ellipticity`]: structure conditions for nonlinear operators.
//! - [`linear`]: the constant-coefficient spectral solver.
//! - [`nonlinear`]: the near-operator fixed-point solver.
//! - [`stability`]: perturbation of solvable operators.
//! - [`harness`]: configuration, manufactured problems and reports.

pub mod ellipticity;
pub mod error;
pub mod fields;
pub mod harness;
pub mod linalg;
pub mod linear;
pub mod nonlinear;
pub mod optimize;
pub mod stability;
pub mod tensor;

pub use error::{Error, Result};
