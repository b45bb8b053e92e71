//! Dense complex matrices and the spectral routines the rest of the crate
//! is built on.
//!
//! Everything here is sized for quantum objects of a few qubits: the
//! matrices never exceed a few dozen rows, so storage is a flat row-major
//! `Vec` and the Hermitian eigensolver is a cyclic Jacobi sweep.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{re, Real, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
}

/// Equality and positivity thresholds used by the checked predicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub eq_tol: T,
    pub psd_tol: T,
}

impl<T: Real> Tolerance<T> {
    /// Both thresholds must be strictly positive.
    pub fn new(eq_tol: T, psd_tol: T) -> Option<Self> {
        (eq_tol > T::zero() && psd_tol > T::zero()).then_some(Self { eq_tol, psd_tol })
    }

    pub fn uniform(tol: T) -> Option<Self> {
        Self::new(tol, tol)
    }
}

impl<T: Real> Default for Tolerance<T> {
    fn default() -> Self {
        let tol = T::lit(T::DEFAULT_TOL);
        Self { eq_tol: tol, psd_tol: tol }
    }
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C::zero(); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from a row-major entry vector.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<T>>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C<T>>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self { rows: n, cols: m, data: rows.iter().flatten().copied().collect() })
    }

    /// Square matrix from real `f64` literals.
    pub fn from_real(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self::from_fn(n, m, |i, j| re(T::lit(rows[i][j])))
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = re(v);
        }
        m
    }

    /// `|v⟩⟨w|` for column vectors given as slices.
    pub fn outer(v: &[C<T>], w: &[C<T>]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    /// Matrix unit `|i⟩⟨j|` of size `dim`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        m[(i, j)] = C::one();
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn entries(&self) -> &[C<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn ensure_square(&self) -> Result<usize, LinalgError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_re(&self, s: T) -> Self {
        self.scale(re(s))
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(C::zero(), |a, b| a + b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// `‖self − other‖_F`; panics on shape mismatch.
    pub fn distance(&self, other: &Self) -> T {
        (self - other).frobenius_norm()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// `‖m − m†‖_F`.
    pub fn hermiticity_defect(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        let mut acc = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc = acc + (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self, tol: &Tolerance<T>) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol.eq_tol * T::lit(self.rows as f64)
    }

    /// `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
    }

    /// `tr[self · other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C<T> {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = C::zero();
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `self · x · self†`.
    pub fn sandwich(&self, x: &Self) -> Self {
        self.matmul(x).matmul(&self.adjoint())
    }

    /// Sub-block `rows r0..r0+nr`, `cols c0..c0+nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn map_entries(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// Cast between scalar precisions.
    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        }
    }
}

/// Serialized as a list of rows, each a list of `[re, im]` pairs.
impl<T: Real> Serialize for DenseMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| {
                        let z = self[(i, j)];
                        [z.re.to_f64_lossy(), z.im.to_f64_lossy()]
                    })
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for DenseMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let complex: Vec<Vec<C<T>>> = rows
            .iter()
            .map(|r| r.iter().map(|&[a, b]| Complex::new(T::lit(a), T::lit(b))).collect())
            .collect();
        DenseMatrix::from_rows(&complex).map_err(serde::de::Error::custom)
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! elementwise {
    ($tr:ident, $f:ident, $op:tt) => {
        impl<T: Real> $tr<&DenseMatrix<T>> for &DenseMatrix<T> {
            type Output = DenseMatrix<T>;
            fn $f(self, rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
                assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
                DenseMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a $op b).collect(),
                }
            }
        }
        impl<T: Real> $tr<DenseMatrix<T>> for DenseMatrix<T> {
            type Output = DenseMatrix<T>;
            fn $f(self, rhs: DenseMatrix<T>) -> DenseMatrix<T> {
                (&self).$f(&rhs)
            }
        }
        impl<T: Real> $tr<&DenseMatrix<T>> for DenseMatrix<T> {
            type Output = DenseMatrix<T>;
            fn $f(self, rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
                (&self).$f(rhs)
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl<T: Real> Mul<&DenseMatrix<T>> for &DenseMatrix<T> {
    type Output = DenseMatrix<T>;
    fn mul(self, rhs: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Mul<DenseMatrix<T>> for DenseMatrix<T> {
    type Output = DenseMatrix<T>;
    fn mul(self, rhs: DenseMatrix<T>) -> DenseMatrix<T> {
        self.matmul(&rhs)
    }
}

impl<T: Real> Neg for &DenseMatrix<T> {
    type Output = DenseMatrix<T>;
    fn neg(self) -> DenseMatrix<T> {
        self.map_entries(|z| -z)
    }
}

/// Kronecker product; block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    DenseMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Which tensor factor survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of an operator on `C^{d_a} ⊗ C^{d_b}`.
pub fn partial_trace<T: Real>(
    m: &DenseMatrix<T>,
    (da, db): (usize, usize),
    keep: Keep,
) -> Result<DenseMatrix<T>, LinalgError> {
    if !m.is_square() || m.rows != da * db {
        return Err(LinalgError::DimensionMismatch(format!(
            "partial trace over {da}x{db} of a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    Ok(match keep {
        Keep::First => DenseMatrix::from_fn(da, da, |i, j| {
            (0..db).fold(C::zero(), |acc, k| acc + m[(i * db + k, j * db + k)])
        }),
        Keep::Second => DenseMatrix::from_fn(db, db, |i, j| {
            (0..da).fold(C::zero(), |acc, k| acc + m[(k * db + i, k * db + j)])
        }),
    })
}

/// Transpose of the second tensor factor.
pub fn partial_transpose_second<T: Real>(
    m: &DenseMatrix<T>,
    (da, db): (usize, usize),
) -> Result<DenseMatrix<T>, LinalgError> {
    if !m.is_square() || m.rows != da * db {
        return Err(LinalgError::DimensionMismatch("partial transpose".into()));
    }
    Ok(DenseMatrix::from_fn(m.rows, m.cols, |r, c| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (c / db, c % db);
        m[(i * db + l, j * db + k)]
    }))
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    /// Real eigenvalues, descending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors as columns, ordered like `eigenvalues`.
    pub eigenvectors: Option<DenseMatrix<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn min(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.eigenvalues.first().copied().unwrap_or_else(T::zero)
    }

    /// `V f(Λ) V†`; requires eigenvectors.
    pub fn apply(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        let v = self.eigenvectors.as_ref().expect("spectrum without eigenvectors");
        let n = v.rows();
        let fv: Vec<T> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..n).fold(C::zero(), |acc, k| acc + v[(i, k)] * v[(j, k)].conj() * re(fv[k]))
        })
    }
}

const MAX_SWEEPS: usize = 100;

fn checked_hermitian<T: Real>(m: &DenseMatrix<T>, tol: &Tolerance<T>) -> Result<usize, LinalgError> {
    let n = m.ensure_square()?;
    let defect = m.hermiticity_defect();
    if defect > tol.eq_tol * T::lit(n as f64) {
        return Err(LinalgError::NotHermitian { deviation: defect.to_f64_lossy() });
    }
    Ok(n)
}

/// Eigenvalues and eigenvectors of a Hermitian matrix by cyclic complex
/// Jacobi rotations.
pub fn hermitian_spectrum<T: Real>(
    m: &DenseMatrix<T>,
    tol: &Tolerance<T>,
) -> Result<Spectrum<T>, LinalgError> {
    let n = checked_hermitian(m, tol)?;
    let mut a = m.hermitian_part();
    let mut v = DenseMatrix::<T>::identity(n);
    let off_tol = T::lit(T::JACOBI_OFF_TOL).max(T::epsilon() * a.frobenius_norm());

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)].norm_sqr();
            }
        }
        // Strict upper triangle counted once; the Frobenius mass is twice that.
        if (off + off).sqrt() <= off_tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(Spectrum { eigenvalues, eigenvectors: Some(eigenvectors) })
}

/// One Jacobi rotation zeroing `a[p, q]`; accumulates into `v`.
fn rotate<T: Real>(a: &mut DenseMatrix<T>, v: &mut DenseMatrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag <= T::min_positive_value() {
        return;
    }
    let phase = apq / re(mag);
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (mag + mag);
    let t = {
        let denom = theta.abs() + (theta * theta + T::one()).sqrt();
        if theta >= T::zero() {
            T::one() / denom
        } else {
            -T::one() / denom
        }
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    // G = diag(1, conj(phase)) · [[c, s], [-s, c]] acting on (p, q).
    let gpp = re(c);
    let gpq = re(s);
    let gqp = phase.conj() * re(-s);
    let gqq = phase.conj() * re(c);
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * gpp + akq * gqp;
        a[(k, q)] = akp * gpq + akq * gqq;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * gpp + vkq * gqp;
        v[(k, q)] = vkp * gpq + vkq * gqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
        a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
    }
    a[(p, q)] = C::zero();
    a[(q, p)] = C::zero();
    a[(p, p)] = re(a[(p, p)].re);
    a[(q, q)] = re(a[(q, q)].re);
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: Real>(m: &DenseMatrix<T>, tol: &Tolerance<T>) -> Result<T, LinalgError> {
    Ok(hermitian_spectrum(m, tol)?.min())
}

/// `true` iff every eigenvalue is at least `−psd_tol`.
pub fn is_psd<T: Real>(m: &DenseMatrix<T>, tol: &Tolerance<T>) -> Result<bool, LinalgError> {
    Ok(min_eigenvalue(m, tol)? >= -tol.psd_tol)
}

/// Unique PSD square root. Eigenvalues in `[−psd_tol, 0]` are clamped to zero.
pub fn psd_sqrt<T: Real>(m: &DenseMatrix<T>, tol: &Tolerance<T>) -> Result<DenseMatrix<T>, LinalgError> {
    let spec = hermitian_spectrum(m, tol)?;
    if spec.min() < -tol.psd_tol {
        return Err(LinalgError::NotPsd { min_eigenvalue: spec.min().to_f64_lossy() });
    }
    Ok(spec.apply(|x| x.max(T::zero()).sqrt()))
}

/// Moore–Penrose pseudo-inverse of a Hermitian PSD matrix; eigenvalues at or
/// below `cutoff` are treated as zero.
pub fn psd_pseudo_inverse<T: Real>(
    m: &DenseMatrix<T>,
    cutoff: T,
    tol: &Tolerance<T>,
) -> Result<DenseMatrix<T>, LinalgError> {
    let spec = hermitian_spectrum(m, tol)?;
    Ok(spec.apply(|x| if x > cutoff { T::one() / x } else { T::zero() }))
}

/// `exp(−i·angle·H)` for Hermitian `H`.
pub fn unitary_exp<T: Real>(h: &DenseMatrix<T>, angle: T, tol: &Tolerance<T>) -> Result<DenseMatrix<T>, LinalgError> {
    let spec = hermitian_spectrum(h, tol)?;
    let v = spec.eigenvectors.as_ref().expect("eigenvectors");
    let n = v.rows();
    let phases: Vec<C<T>> = spec
        .eigenvalues
        .iter()
        .map(|&e| {
            let a = -angle * e;
            Complex::new(a.cos(), a.sin())
        })
        .collect();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        (0..n).fold(C::zero(), |acc, k| acc + v[(i, k)] * phases[k] * v[(j, k)].conj())
    }))
}
