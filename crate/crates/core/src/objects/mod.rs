//! Meters, operations and instruments on finite-dimensional systems, together
//! with the noisy qubit families studied in this crate.
//!
//! All constructors validate eagerly, so a value of any of these types is a
//! valid quantum object within the default tolerance of its scalar type.

mod instrument;
mod meter;
mod operation;

pub use instrument::{
    luders, measure_and_prepare, mixed_instrument, Instrument, DICHOTOMIC_LABELS,
};
pub use meter::{noisy_meter, noise_stochastic_matrix, postprocess, Effect, Meter, StochasticMatrix};
pub use operation::{depolarizing, Operation};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::scalar::{cplx, re, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectError {
    #[error("parameter {name} = {value} outside {range}")]
    ParameterRange { name: &'static str, value: f64, range: &'static str },
    #[error("Bloch vector norm {norm} (unit required: {unit})")]
    BlochNorm { norm: f64, unit: bool },
    #[error("invalid effect: {0}")]
    InvalidEffect(String),
    #[error("effects sum to identity only within {deviation:e}")]
    NotNormalized { deviation: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("operation is not trace non-increasing (excess {excess:e})")]
    TraceIncreasing { excess: f64 },
    #[error("stochastic matrix column {column} sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub(crate) fn check_range<T: Real>(
    name: &'static str,
    value: T,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<(), ObjectError> {
    let v = value.to_f64_lossy();
    if v.is_nan() || v < lo || v > hi {
        Err(ObjectError::ParameterRange { name, value: v, range })
    } else {
        Ok(())
    }
}

/// `[1, σ_x, σ_y, σ_z]`.
pub fn pauli_matrices<T: Real>() -> [DenseMatrix<T>; 4] {
    let o = cplx::<T>(0.0, 0.0);
    let one = cplx::<T>(1.0, 0.0);
    let i = cplx::<T>(0.0, 1.0);
    [
        DenseMatrix::identity(2),
        DenseMatrix::from_vec(2, 2, vec![o, one, one, o]).unwrap(),
        DenseMatrix::from_vec(2, 2, vec![o, -i, i, o]).unwrap(),
        DenseMatrix::from_vec(2, 2, vec![one, o, o, -one]).unwrap(),
    ]
}

/// Real three-vector used for measurement directions and frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

fn unit_slack<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(16.0))
}

impl<T: Real> BlochVector<T> {
    /// Any vector inside the Bloch ball.
    pub fn new(x: T, y: T, z: T) -> Result<Self, ObjectError> {
        let v = Self { x, y, z };
        if v.norm() > T::one() + unit_slack() || !v.norm().is_finite() {
            return Err(ObjectError::BlochNorm { norm: v.norm().to_f64_lossy(), unit: false });
        }
        Ok(v)
    }

    /// A unit vector; rejects `| |v| − 1 | > 1e-12`.
    pub fn unit(x: T, y: T, z: T) -> Result<Self, ObjectError> {
        let v = Self { x, y, z };
        if (v.norm() - T::one()).abs() > unit_slack() {
            return Err(ObjectError::BlochNorm { norm: v.norm().to_f64_lossy(), unit: true });
        }
        Ok(v)
    }

    /// Unconstrained three-vector (dual directions such as `l̂` may leave the ball).
    pub fn raw(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn x_axis() -> Self {
        Self::raw(T::one(), T::zero(), T::zero())
    }

    pub fn y_axis() -> Self {
        Self::raw(T::zero(), T::one(), T::zero())
    }

    pub fn z_axis() -> Self {
        Self::raw(T::zero(), T::zero(), T::one())
    }

    pub fn components(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= unit_slack()
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::raw(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(&self, s: T) -> Self {
        Self::raw(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::raw(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::raw(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    /// `Σ_i v_i M_i` for a triple of matrices.
    pub fn contract(&self, ms: [&DenseMatrix<T>; 3]) -> DenseMatrix<T> {
        ms[0].scale_re(self.x) + ms[1].scale_re(self.y) + ms[2].scale_re(self.z)
    }

    /// `v · σ` without the unit-length requirement.
    pub fn sigma(&self) -> DenseMatrix<T> {
        let [_, sx, sy, sz] = pauli_matrices::<T>();
        self.contract([&sx, &sy, &sz])
    }
}

/// `σ_n = n_x σ_x + n_y σ_y + n_z σ_z` for a unit vector `n`.
pub fn pauli<T: Real>(n: &BlochVector<T>) -> Result<DenseMatrix<T>, ObjectError> {
    if !n.is_unit() {
        return Err(ObjectError::BlochNorm { norm: n.norm().to_f64_lossy(), unit: true });
    }
    Ok(n.sigma())
}

/// `½(1 + r·σ)`.
pub fn bloch_state<T: Real>(r: &BlochVector<T>) -> DenseMatrix<T> {
    (DenseMatrix::identity(2) + r.sigma()).scale(re(T::lit(0.5)))
}

/// Validate a density matrix: Hermitian, PSD, unit trace.
pub fn check_state<T: Real>(rho: &DenseMatrix<T>) -> Result<(), ObjectError> {
    let tol = crate::linalg::Tolerance::<T>::default();
    if !rho.is_hermitian(&tol) {
        return Err(ObjectError::InvalidState("not Hermitian".into()));
    }
    if (rho.trace().re - T::one()).abs() > tol.eq_tol {
        return Err(ObjectError::InvalidState(format!("trace {}", rho.trace().re)));
    }
    if !crate::linalg::is_psd(rho, &tol)? {
        return Err(ObjectError::InvalidState("not positive".into()));
    }
    Ok(())
}
