//! Compatibility of noisy qubit instruments with an adversary's meter.
//!
//! The crate evaluates the closed-form thresholds on the sharpness `s` of a
//! meter that can be measured jointly with the noisy Lüders-type instrument
//! `Z^{λ,t}`, certifies them with matching primal and dual SDP feasible
//! points, and rebuilds the adversary's device for the aligned case.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod adversary;
pub mod compat;
pub mod dilation;
pub mod linalg;
pub mod objects;
pub mod scalar;
pub mod selftest;

pub use scalar::{Real, C};

pub type Matrix = linalg::DenseMatrix<f64>;
pub type Matrix32 = linalg::DenseMatrix<f32>;
pub type Bloch = objects::BlochVector<f64>;
pub type Meter = objects::Meter<f64>;
pub type Operation = objects::Operation<f64>;
pub type Instrument = objects::Instrument<f64>;
