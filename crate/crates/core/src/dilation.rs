//! Dilations, conjugate instruments and the Pauli images `Π_μ^y = Ī_y(σ_μ)`.
//!
//! Two sources of images are provided. [`closed_form_pauli_images`] gives the
//! 4×4 matrices on a four-dimensional ancilla; the canonical Kraus-stacking
//! dilation of [`mixed_instrument`] gives 10×10 images of the same
//! instrument. The two sets differ by a partial isometry on the ancilla,
//! which [`transport`] recovers from the images alone so that certificates
//! built on one route can be checked on the other.

use serde::Serialize;
use thiserror::Error;

use crate::compat::{self, Case, CertReport, CompatError, CompatQuery};
use crate::linalg::{
    hermitian_spectrum, kron, partial_trace, psd_pseudo_inverse, psd_sqrt, DenseMatrix, Keep,
    LinalgError, Tolerance,
};
use crate::objects::{
    check_range, mixed_instrument, pauli_matrices, BlochVector, Instrument, Meter, ObjectError,
    Operation,
};
use crate::scalar::{cplx, re, Real, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DilationError {
    #[error("total channel is not trace preserving (deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },
    #[error("W is not an isometry (defect {defect:e})")]
    NotIsometry { defect: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Compat(#[from] CompatError),
}

/// Ancilla, isometry `W: C^d → C^A ⊗ C^d` and ancilla meter `E` with
/// `I_x(ρ) = tr_A[W ρ W† (E(x) ⊗ 1)]`. The ancilla is the first tensor factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dilation<T: Real> {
    system_dim: usize,
    ancilla_dim: usize,
    isometry: DenseMatrix<T>,
    ancilla_meter: Meter<T>,
}

impl<T: Real> Dilation<T> {
    pub fn new(isometry: DenseMatrix<T>, ancilla_meter: Meter<T>) -> Result<Self, DilationError> {
        let d = Self::new_unchecked(isometry, ancilla_meter)?;
        let defect = d.isometry_defect();
        if defect > T::lit(T::DEFAULT_TOL) {
            return Err(DilationError::NotIsometry { defect: defect.to_f64_lossy() });
        }
        Ok(d)
    }

    /// Shape checks only. Lets sensitivity checks hold a corrupted `W`.
    pub fn new_unchecked(isometry: DenseMatrix<T>, ancilla_meter: Meter<T>) -> Result<Self, DilationError> {
        let ancilla_dim = ancilla_meter.dim();
        let system_dim = isometry.cols();
        if isometry.rows() != ancilla_dim * system_dim {
            return Err(DilationError::Shape(format!(
                "{}x{} isometry for ancilla dimension {ancilla_dim}",
                isometry.rows(),
                isometry.cols()
            )));
        }
        Ok(Self { system_dim, ancilla_dim, isometry, ancilla_meter })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn isometry(&self) -> &DenseMatrix<T> {
        &self.isometry
    }

    pub fn ancilla_meter(&self) -> &Meter<T> {
        &self.ancilla_meter
    }

    /// `‖W†W − 1‖_F`.
    pub fn isometry_defect(&self) -> T {
        self.isometry
            .adjoint()
            .matmul(&self.isometry)
            .distance(&DenseMatrix::identity(self.system_dim))
    }

    /// Copy with `W[row, col]` shifted by `delta`.
    pub fn with_perturbed_entry(&self, row: usize, col: usize, delta: C<T>) -> Self {
        let mut out = self.clone();
        out.isometry[(row, col)] = out.isometry[(row, col)] + delta;
        out
    }

    /// `tr_A[W ρ W† (E(x) ⊗ 1)]`.
    pub fn outcome_state(&self, x: usize, rho: &DenseMatrix<T>) -> Result<DenseMatrix<T>, DilationError> {
        if rho.rows() != self.system_dim || rho.cols() != self.system_dim {
            return Err(DilationError::Shape("input does not match the system dimension".into()));
        }
        let joint = self.isometry.sandwich(rho);
        let lifted = kron(self.ancilla_meter.effect(x), &DenseMatrix::identity(self.system_dim));
        Ok(partial_trace(&joint.matmul(&lifted), (self.ancilla_dim, self.system_dim), Keep::Second)?)
    }
}

/// Stack every Kraus operator: `W|ψ⟩ = Σ_{x,k} |x,k⟩ ⊗ K_{x,k}|ψ⟩`, with `E(x)`
/// the projector onto `span{|x,k⟩}_k`.
pub fn dilate<T: Real>(inst: &Instrument<T>) -> Result<Dilation<T>, DilationError> {
    let d = inst.input_dim();
    if inst.output_dim() != d {
        return Err(DilationError::Shape("dilation needs an instrument on one system".into()));
    }
    let deviation = inst.induced_channel().heisenberg_identity().distance(&DenseMatrix::identity(d));
    if deviation > T::lit(T::DEFAULT_TOL) {
        return Err(DilationError::NotTracePreserving { deviation: deviation.to_f64_lossy() });
    }
    let kraus: Vec<(usize, &DenseMatrix<T>)> = inst
        .operations()
        .iter()
        .enumerate()
        .flat_map(|(x, op)| op.kraus().iter().map(move |k| (x, k)))
        .collect();
    let a_dim = kraus.len();
    let mut w = DenseMatrix::zeros(a_dim * d, d);
    for (a, (_, k)) in kraus.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                w[(a * d + i, j)] = k[(i, j)];
            }
        }
    }
    let effects = (0..inst.len())
        .map(|x| {
            let diag: Vec<T> = kraus.iter().map(|&(y, _)| if y == x { T::one() } else { T::zero() }).collect();
            DenseMatrix::diag(&diag)
        })
        .collect();
    let meter = Meter::new(inst.outcomes().to_vec(), effects)?;
    Dilation::new(w, meter)
}

/// Outcome of [`verify_dilation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilationReport<T> {
    /// Max Frobenius deviation of the reconstruction over `{|i⟩⟨j|}` and outcomes.
    pub max_deviation: T,
    pub isometry_defect: T,
    pub passed: bool,
}

pub fn verify_dilation<T: Real>(d: &Dilation<T>, inst: &Instrument<T>, tol: T) -> DilationReport<T> {
    let n = d.system_dim();
    let mut worst = T::zero();
    let shapes_agree = inst.input_dim() == n && inst.len() == d.ancilla_meter().len();
    if shapes_agree {
        for x in 0..inst.len() {
            for i in 0..n {
                for j in 0..n {
                    let unit = DenseMatrix::unit(n, i, j);
                    let lhs = d.outcome_state(x, &unit).expect("shapes checked");
                    let rhs = inst.operation(x).apply(&unit).expect("shapes checked");
                    worst = worst.max(lhs.distance(&rhs));
                }
            }
        }
    } else {
        worst = T::infinity();
    }
    let isometry_defect = d.isometry_defect();
    DilationReport { max_deviation: worst, isometry_defect, passed: worst <= tol && isometry_defect <= tol }
}

/// Conjugate instrument: operations from the system into the ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateInstrument<T: Real> {
    inner: Instrument<T>,
}

impl<T: Real> ConjugateInstrument<T> {
    pub fn operations(&self) -> &[Operation<T>] {
        self.inner.operations()
    }

    pub fn operation(&self, y: usize) -> &Operation<T> {
        self.inner.operation(y)
    }

    pub fn outcomes(&self) -> &[String] {
        self.inner.outcomes()
    }

    pub fn ancilla_dim(&self) -> usize {
        self.inner.output_dim()
    }

    pub fn system_dim(&self) -> usize {
        self.inner.input_dim()
    }

    pub fn as_instrument(&self) -> &Instrument<T> {
        &self.inner
    }
}

/// `Ī_x(ρ) = tr_H[(√E(x) ⊗ 1) W ρ W† (√E(x) ⊗ 1)]`, with Kraus operators
/// `(√E(x) ⊗ ⟨i|) W` for each system basis vector `|i⟩`.
pub fn conjugate<T: Real>(d: &Dilation<T>) -> Result<ConjugateInstrument<T>, DilationError> {
    let (n, a) = (d.system_dim(), d.ancilla_dim());
    let tol = Tolerance::default();
    let mut ops = Vec::with_capacity(d.ancilla_meter().len());
    for e in d.ancilla_meter().effects() {
        let root = psd_sqrt(e.matrix(), &tol)?;
        let kraus = (0..n)
            .map(|i| {
                DenseMatrix::from_fn(a, n, |r, j| {
                    (0..a).fold(C::new(T::zero(), T::zero()), |acc, b| acc + root[(r, b)] * d.isometry()[(b * n + i, j)])
                })
            })
            .collect();
        ops.push(Operation::new(kraus)?);
    }
    Ok(ConjugateInstrument { inner: Instrument::new(d.ancilla_meter().outcomes().to_vec(), ops)? })
}

/// `Π_μ^y` for `μ ∈ {0, x, y, z}` and `y ∈ {+, −}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PauliImages<T: Real> {
    plus: [DenseMatrix<T>; 4],
    minus: [DenseMatrix<T>; 4],
}

/// `+1` for outcome index 0 (`+`), `−1` for index 1 (`−`).
pub(crate) fn outcome_sign<T: Real>(y: usize) -> T {
    if y == 0 {
        T::one()
    } else {
        -T::one()
    }
}

impl<T: Real> PauliImages<T> {
    pub fn new(plus: [DenseMatrix<T>; 4], minus: [DenseMatrix<T>; 4]) -> Result<Self, DilationError> {
        let n = plus[0].rows();
        let tol = Tolerance::default();
        for m in plus.iter().chain(&minus) {
            if m.rows() != n || m.cols() != n {
                return Err(DilationError::Shape("images of different dimensions".into()));
            }
            if !m.is_hermitian(&tol) {
                return Err(LinalgError::NotHermitian { deviation: m.hermiticity_defect().to_f64_lossy() }.into());
            }
        }
        Ok(Self { plus, minus })
    }

    pub fn ancilla_dim(&self) -> usize {
        self.plus[0].rows()
    }

    pub fn outcome(&self, y: usize) -> &[DenseMatrix<T>; 4] {
        match y {
            0 => &self.plus,
            1 => &self.minus,
            _ => panic!("dichotomic outcome index {y}"),
        }
    }

    pub fn get(&self, y: usize, mu: usize) -> &DenseMatrix<T> {
        &self.outcome(y)[mu]
    }

    /// `v·Π^y = v_x Π_x^y + v_y Π_y^y + v_z Π_z^y`.
    pub fn along(&self, y: usize, v: &BlochVector<T>) -> DenseMatrix<T> {
        let p = self.outcome(y);
        v.contract([&p[1], &p[2], &p[3]])
    }

    /// `Ī*_y(B) = ½ Σ_μ tr[B Π_μ^y] σ_μ`.
    pub fn adjoint_apply(&self, y: usize, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let sig = pauli_matrices::<T>();
        let half = re(T::lit(0.5));
        self.outcome(y)
            .iter()
            .zip(&sig)
            .fold(DenseMatrix::zeros(2, 2), |acc, (p, s)| acc + s.scale(b.trace_product(p) * half))
    }

    /// Max deviation from `tr Π_0^± = 1`, `tr Π_z^± = ±t`, `tr Π_x^± = tr Π_y^± = 0`.
    pub fn trace_defect(&self, t: T) -> T {
        let mut worst = T::zero();
        for y in 0..2 {
            let p = self.outcome(y);
            let expected = [T::one(), T::zero(), T::zero(), outcome_sign::<T>(y) * t];
            for (m, e) in p.iter().zip(expected) {
                worst = worst.max((m.trace() - re(e)).norm());
            }
        }
        worst
    }

    /// Same images with the sign of `Π_z^±` flipped (fault injection).
    pub fn with_flipped_z(&self) -> Self {
        let mut out = self.clone();
        out.plus[3] = -&out.plus[3];
        out.minus[3] = -&out.minus[3];
        out
    }
}

/// Apply each conjugate operation to `{1, σ_x, σ_y, σ_z}`.
pub fn pauli_images<T: Real>(c: &ConjugateInstrument<T>) -> Result<PauliImages<T>, DilationError> {
    if c.system_dim() != 2 || c.operations().len() != 2 {
        return Err(DilationError::Shape("Pauli images need a two-outcome qubit instrument".into()));
    }
    let sig = pauli_matrices::<T>();
    let images = |y: usize| -> Result<[DenseMatrix<T>; 4], DilationError> {
        let op = c.operation(y);
        Ok([op.apply(&sig[0])?, op.apply(&sig[1])?, op.apply(&sig[2])?, op.apply(&sig[3])?])
    };
    PauliImages::new(images(0)?, images(1)?)
}

/// Images of the canonical dilation of `Z^{λ,t}` (`m̂ = ẑ`, ancilla dim 10).
pub fn canonical_pauli_images<T: Real>(lambda: T, t: T) -> Result<PauliImages<T>, DilationError> {
    let inst = mixed_instrument(lambda, t, &BlochVector::z_axis())?;
    pauli_images(&conjugate(&dilate(&inst)?)?)
}

/// Square root of a radicand that is nonnegative on the parameter square.
fn nonneg_sqrt<T: Real>(x: T) -> T {
    debug_assert!(x >= -T::lit(1e3) * T::epsilon(), "negative radicand {x}");
    x.max(T::zero()).sqrt()
}

/// Scalars shared by the closed-form images and certificates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClosedFormScalars<T> {
    /// `Λ = (1−λ)(1+3λ)`.
    pub big_lambda: T,
    /// `r = √(Λ + 4t²λ²)`.
    pub r: T,
    /// `tλ/r`, with the value ½ at `r = 0`.
    pub tl_over_r: T,
    /// `q = √((1−t²)Λ)/r`, zero at `r = 0`.
    pub q: T,
}

pub(crate) fn closed_form_scalars<T: Real>(lambda: T, t: T) -> ClosedFormScalars<T> {
    let one = T::one();
    let big_lambda = (one - lambda) * (one + T::lit(3.0) * lambda);
    let r = nonneg_sqrt(big_lambda + T::lit(4.0) * t * t * lambda * lambda);
    // r vanishes only at (λ, t) = (1, 0); the values there are the limits along t → 0⁺.
    let degenerate = r <= T::epsilon();
    let tl_over_r = if degenerate { T::lit(0.5) } else { (t * lambda / r).min(T::lit(0.5)) };
    let q = if degenerate { T::zero() } else { (nonneg_sqrt((one - t * t) * big_lambda) / r).min(one) };
    ClosedFormScalars { big_lambda, r, tl_over_r, q }
}

/// The 4×4 images `Π_μ^±` of `Z^{λ,t}` on a four-dimensional ancilla.
///
/// `Π_x`, `Π_y`, `Π_z` are built from the `E_±`, `F_±` blocks and the scalars
/// `T_{±±} = √((1 + λ ± 2λ√(1−t²))(1 ± q))`; `Π_0 = Ī_±(1)` is the matching
/// identity image, fixed by `tr Π_0^± = 1` and the rank-two structure of
/// `Π_0 ± Π_z`.
pub fn closed_form_pauli_images<T: Real>(lambda: T, t: T) -> Result<PauliImages<T>, DilationError> {
    check_range("lambda", lambda, 0.0, 1.0, "[0, 1]")?;
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    let one = T::one();
    let two = T::lit(2.0);
    let quarter = T::lit(0.25);
    let ClosedFormScalars { big_lambda, r, q, .. } = closed_form_scalars(lambda, t);
    let root_t = nonneg_sqrt(one - t * t);
    let a = one + lambda + two * lambda * root_t;
    let b = one + lambda - two * lambda * root_t;
    let t_pp = nonneg_sqrt(a * (one + q));
    let t_pm = nonneg_sqrt(a * (one - q));
    let t_mp = nonneg_sqrt(b * (one + q));
    let t_mm = nonneg_sqrt(b * (one - q));
    let prefactor = nonneg_sqrt(one - lambda) / T::lit(8.0);
    let off_identity = if r <= T::epsilon() {
        T::lit(0.5)
    } else {
        t * (one + lambda) * (one + lambda) / (T::lit(4.0) * r)
    };
    let spread = if r <= T::epsilon() {
        T::zero()
    } else {
        lambda * (one - t * t) * nonneg_sqrt(big_lambda) / (two * r)
    };

    let images = |sg: T| -> [DenseMatrix<T>; 4] {
        let lo = nonneg_sqrt(one - sg * t);
        let hi = nonneg_sqrt(one + sg * t);
        let e = [
            [-lo * (t_mp + sg * t_pm), lo * (t_pp + sg * t_mm)],
            [hi * (t_mp - sg * t_pm), hi * (t_pp - sg * t_mm)],
        ];
        let i = cplx::<T>(0.0, 1.0);
        // F_± shares the magnitudes of E_±: the top row is i·E, the bottom row −i·E.
        let f = [[i * re(e[0][0]), i * re(e[0][1])], [-i * re(e[1][0]), -i * re(e[1][1])]];
        let off_block = |blk: [[C<T>; 2]; 2]| {
            DenseMatrix::from_fn(4, 4, |r, c| match (r < 2, c < 2) {
                (true, false) => blk[r][c - 2] * re(prefactor),
                (false, true) => blk[c][r - 2].conj() * re(prefactor),
                _ => C::new(T::zero(), T::zero()),
            })
        };
        let ec = [[re(e[0][0]), re(e[0][1])], [re(e[1][0]), re(e[1][1])]];
        let pi_x = off_block(ec);
        let pi_y = off_block(f);
        let upper = [(one - sg * t) * (one - lambda) * quarter, (one + sg * t) * (one - lambda) * quarter];
        let mut pi_z = DenseMatrix::zeros(4, 4);
        pi_z[(0, 0)] = re(-upper[0]);
        pi_z[(1, 1)] = re(upper[1]);
        pi_z[(2, 2)] = re(sg * t * (one + lambda) * quarter);
        pi_z[(3, 3)] = re(sg * t * (one + lambda) * quarter);
        pi_z[(2, 3)] = re(-r * quarter);
        pi_z[(3, 2)] = re(-r * quarter);
        let mut pi_0 = DenseMatrix::zeros(4, 4);
        pi_0[(0, 0)] = re(upper[0]);
        pi_0[(1, 1)] = re(upper[1]);
        pi_0[(2, 2)] = re((one + lambda) * quarter - spread);
        pi_0[(3, 3)] = re((one + lambda) * quarter + spread);
        pi_0[(2, 3)] = re(-sg * off_identity);
        pi_0[(3, 2)] = re(-sg * off_identity);
        [pi_0, pi_x, pi_y, pi_z]
    };
    PauliImages::new(images(one), images(-one))
}

type Real3<T> = [[T; 3]; 3];

fn det3<T: Real>(m: &Real3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rotation `R ∈ SO(3)` maximising `tr[Rᵀ M]` (orthogonal Procrustes).
fn procrustes_rotation<T: Real>(m: &Real3<T>) -> Real3<T> {
    let mtm = DenseMatrix::from_fn(3, 3, |i, j| re((0..3).map(|k| m[k][i] * m[k][j]).sum::<T>()));
    let spec = hermitian_spectrum(&mtm, &Tolerance::default()).expect("MᵀM is symmetric");
    let vecs = spec.eigenvectors.as_ref().expect("eigenvectors");
    let v: Vec<[T; 3]> = (0..3).map(|k| [vecs[(0, k)].re, vecs[(1, k)].re, vecs[(2, k)].re]).collect();
    let sigma: Vec<T> = spec.eigenvalues.iter().map(|&e| e.max(T::zero()).sqrt()).collect();
    let cutoff = T::lit(1e-12) * sigma[0].max(T::one());
    let mut u: Vec<[T; 3]> = Vec::with_capacity(3);
    for k in 0..3 {
        if sigma[k] > cutoff {
            let col: [T; 3] = std::array::from_fn(|i| (0..3).map(|j| m[i][j] * v[k][j]).sum::<T>() / sigma[k]);
            u.push(col);
        }
    }
    complete_basis(&mut u);
    let vm: Real3<T> = std::array::from_fn(|i| std::array::from_fn(|k| v[k][i]));
    let um: Real3<T> = std::array::from_fn(|i| std::array::from_fn(|k| u[k][i]));
    let d = [T::one(), T::one(), det3(&um) * det3(&vm)];
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| d[k] * um[i][k] * vm[j][k]).sum()))
}

/// Extend orthonormal vectors to an orthonormal basis of `R³`.
fn complete_basis<T: Real>(u: &mut Vec<[T; 3]>) {
    let cross = |a: &[T; 3], b: &[T; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    if u.is_empty() {
        u.push([T::one(), T::zero(), T::zero()]);
    }
    if u.len() == 1 {
        let a = u[0];
        let axis = (0..3).min_by(|&i, &j| a[i].abs().partial_cmp(&a[j].abs()).unwrap()).unwrap();
        let mut e = [T::zero(); 3];
        e[axis] = T::one();
        let p = a[axis];
        let mut w = [e[0] - p * a[0], e[1] - p * a[1], e[2] - p * a[2]];
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        w = [w[0] / n, w[1] / n, w[2] / n];
        u.push(w);
    }
    if u.len() == 2 {
        let c = cross(&u[0], &u[1]);
        u.push(c);
    }
}

/// `V ∈ SU(2)` with `V σ_j V† = Σ_i R_ij σ_i`.
fn su2_from_rotation<T: Real>(r: &Real3<T>) -> DenseMatrix<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let tr = r[0][0] + r[1][1] + r[2][2];
    let (w, x, y, z);
    if tr >= r[0][0] && tr >= r[1][1] && tr >= r[2][2] {
        w = (one + tr).sqrt() / two;
        x = (r[2][1] - r[1][2]) / (four * w);
        y = (r[0][2] - r[2][0]) / (four * w);
        z = (r[1][0] - r[0][1]) / (four * w);
    } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
        x = (one + r[0][0] - r[1][1] - r[2][2]).sqrt() / two;
        w = (r[2][1] - r[1][2]) / (four * x);
        y = (r[0][1] + r[1][0]) / (four * x);
        z = (r[0][2] + r[2][0]) / (four * x);
    } else if r[1][1] >= r[2][2] {
        y = (one - r[0][0] + r[1][1] - r[2][2]).sqrt() / two;
        w = (r[0][2] - r[2][0]) / (four * y);
        x = (r[0][1] + r[1][0]) / (four * y);
        z = (r[1][2] + r[2][1]) / (four * y);
    } else {
        z = (one - r[0][0] - r[1][1] + r[2][2]).sqrt() / two;
        w = (r[1][0] - r[0][1]) / (four * z);
        x = (r[0][2] + r[2][0]) / (four * z);
        y = (r[1][2] + r[2][1]) / (four * z);
    }
    let [id, sx, sy, sz] = pauli_matrices::<T>();
    let minus_i = cplx::<T>(0.0, -1.0);
    id.scale_re(w) + BlochVector::raw(x, y, z).contract([&sx, &sy, &sz]).scale(minus_i)
}

/// Kraus operators `K_k` (2×2) with `Π_μ[a, b] = tr[K_a σ_μ K_b†]`, up to a
/// common output unitary. Read off the rank-≤2 Gram matrix
/// `𝒢[(l, b'), (k, b)] = (K_l† K_k)[b', b] = ½ Σ_μ Π_μ[k, l] σ_μ[b', b]`.
fn kraus_from_images<T: Real>(images: &[DenseMatrix<T>; 4]) -> Result<Vec<DenseMatrix<T>>, DilationError> {
    let n = images[0].rows();
    let sig = pauli_matrices::<T>();
    let half = re(T::lit(0.5));
    let gram = DenseMatrix::from_fn(2 * n, 2 * n, |row, col| {
        let (l, bp, k, b) = (row / 2, row % 2, col / 2, col % 2);
        (0..4).fold(C::new(T::zero(), T::zero()), |acc, mu| acc + images[mu][(k, l)] * sig[mu][(bp, b)]) * half
    });
    let spec = hermitian_spectrum(&gram, &Tolerance::default())?;
    let vecs = spec.eigenvectors.as_ref().expect("eigenvectors");
    let g: Vec<T> = spec.eigenvalues.iter().take(2).map(|&e| e.max(T::zero()).sqrt()).collect();
    Ok((0..n)
        .map(|k| DenseMatrix::from_fn(2, 2, |i, b| vecs[(2 * k + b, i)].conj() * re(g[i])))
        .collect())
}

fn bloch_part<T: Real>(m: &DenseMatrix<T>) -> [T; 3] {
    let [_, sx, sy, sz] = pauli_matrices::<T>();
    [m.trace_product(&sx).re, m.trace_product(&sy).re, m.trace_product(&sz).re]
}

/// Kraus operators of the given outcome of `inst` encoded by `images`:
/// `Σ_k K_k ρ K_k† = I_y(ρ)` and `tr[K_a σ_μ K_b†] = Π_μ[a, b]`.
fn aligned_kraus<T: Real>(
    images: &[DenseMatrix<T>; 4],
    op: &Operation<T>,
) -> Result<Vec<DenseMatrix<T>>, DilationError> {
    let raw = kraus_from_images(images)?;
    let sig = pauli_matrices::<T>();
    let mut m: Real3<T> = [[T::zero(); 3]; 3];
    for s in &sig {
        let target = bloch_part(&op.apply(s)?);
        let found = {
            let out = raw.iter().fold(DenseMatrix::zeros(2, 2), |acc, k| acc + k.sandwich(s));
            bloch_part(&out)
        };
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m[i][j] + target[i] * found[j];
            }
        }
    }
    let v = su2_from_rotation(&procrustes_rotation(&m));
    Ok(raw.iter().map(|k| v.matmul(k)).collect())
}

/// Partial isometries `Q_y` carrying one image set onto another of the same
/// instrument: `Π_μ^{to,y} ≈ Q_y Π_μ^{from,y} Q_y†`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transport<T: Real> {
    maps: [DenseMatrix<T>; 2],
    /// Max Frobenius residual of `Π^to − Q Π^from Q†` over outcomes and `μ`.
    pub residual: T,
}

impl<T: Real> Transport<T> {
    pub fn map(&self, y: usize) -> &DenseMatrix<T> {
        &self.maps[y]
    }

    /// `Q_y m Q_y†`.
    pub fn carry(&self, y: usize, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.maps[y].sandwich(m)
    }
}

/// Recover the transport between two image sets of the two-outcome qubit
/// instrument `inst`.
///
/// Kraus operators are read off each image set up to an output unitary, the
/// unitary is fixed by matching the Bloch action of `inst`, and
/// `Q = K_to K_from^+` on vectorised Kraus operators.
pub fn transport<T: Real>(
    from: &PauliImages<T>,
    to: &PauliImages<T>,
    inst: &Instrument<T>,
) -> Result<Transport<T>, DilationError> {
    if inst.len() != 2 || inst.input_dim() != 2 || inst.output_dim() != 2 {
        return Err(DilationError::Shape("transport needs a two-outcome qubit instrument".into()));
    }
    let tol = Tolerance::default();
    let mut maps = Vec::with_capacity(2);
    let mut residual = T::zero();
    for y in 0..2 {
        let kf = aligned_kraus(from.outcome(y), inst.operation(y))?;
        let kt = aligned_kraus(to.outcome(y), inst.operation(y))?;
        let vecs = |ks: &[DenseMatrix<T>]| DenseMatrix::from_fn(ks.len(), 4, |a, e| ks[a][(e / 2, e % 2)]);
        let f = vecs(&kf);
        let g = vecs(&kt);
        let ff = f.matmul(&f.adjoint());
        let cutoff = T::lit(1e-12) * ff.max_abs().max(T::one());
        let q = g.matmul(&f.adjoint()).matmul(&psd_pseudo_inverse(&ff, cutoff, &tol)?);
        for mu in 0..4 {
            residual = residual.max(to.get(y, mu).distance(&q.sandwich(from.get(y, mu))));
        }
        maps.push(q);
    }
    let minus = maps.pop().expect("two maps");
    let plus = maps.pop().expect("two maps");
    Ok(Transport { maps: [plus, minus], residual })
}

/// Outcome of [`cross_check_images`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport<T: Real> {
    pub case: Case,
    pub closed_form: CertReport<T>,
    pub canonical: CertReport<T>,
    pub transport_residual: T,
    /// `max(|primal_cf − primal_can|, |dual_cf − dual_can|)`.
    pub difference: T,
    pub passed: bool,
}

/// Certify `s_max` on the closed-form images and, after transport, on the
/// canonical-dilation images; the optima must agree.
pub fn cross_check_images<T: Real>(lambda: T, t: T, case: Case, tol: T) -> Result<CrossCheckReport<T>, DilationError> {
    let query = CompatQuery::new(lambda, t, case)?;
    let cf = closed_form_pauli_images(lambda, t)?;
    let can = canonical_pauli_images(lambda, t)?;
    let inst = mixed_instrument(lambda, t, &BlochVector::z_axis())?;
    let tr = transport(&cf, &can, &inst)?;

    let pc = compat::primal_certificate(&query)?;
    let dc = compat::dual_certificate(&query, &cf)?;
    let closed_form = compat::verify_certificates(&cf, &pc, &dc, tol);
    let pc_can = pc.transported(&tr)?;
    let dc_can = dc.transported(&tr);
    let canonical = compat::verify_certificates(&can, &pc_can, &dc_can, tol);

    let difference = (closed_form.primal_value - canonical.primal_value)
        .abs()
        .max((closed_form.dual_value - canonical.dual_value).abs());
    let passed = closed_form.passed && canonical.passed && difference <= tol;
    Ok(CrossCheckReport { case, closed_form, canonical, transport_residual: tr.residual, difference, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, min_eigenvalue};
    use crate::objects::{bloch_state, luders, measure_and_prepare, noisy_meter};
    use proptest::prelude::*;

    type M = DenseMatrix<f64>;

    fn grid5() -> impl Iterator<Item = (f64, f64)> {
        (0..5).flat_map(|i| (0..5).map(move |j| (i as f64 * 0.25, j as f64 * 0.25)))
    }

    fn random_state(v: &[f64]) -> M {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1.0);
        bloch_state(&BlochVector::new(v[0] / n, v[1] / n, v[2] / n).unwrap())
    }

    #[test]
    fn sharp_luders_dilation_is_projective() {
        let inst = luders(&noisy_meter(1.0, &BlochVector::z_axis()).unwrap());
        let d = dilate(&inst).unwrap();
        assert_eq!(d.ancilla_dim(), 2);
        for e in d.ancilla_meter().effects() {
            assert!(e.matrix().matmul(e.matrix()).distance(e.matrix()) < 1e-15);
        }
        let rep = verify_dilation(&d, &inst, 1e-10);
        assert!(rep.passed && rep.max_deviation < 1e-15);
    }

    #[test]
    fn mixed_instrument_dilation_has_ten_dimensional_ancilla() {
        for (l, t) in grid5() {
            let inst = mixed_instrument(l, t, &BlochVector::z_axis()).unwrap();
            let d = dilate(&inst).unwrap();
            assert_eq!(d.ancilla_dim(), 10);
            assert!(d.isometry_defect() < 1e-10);
            assert!(verify_dilation(&d, &inst, 1e-10).passed);
        }
    }

    #[test]
    fn measure_and_prepare_and_identity_dilations() {
        let m = noisy_meter(0.4, &BlochVector::x_axis()).unwrap();
        let half = M::identity(2).scale_re(0.5);
        let inst = measure_and_prepare(&m, &[half.clone(), half]).unwrap();
        assert!(verify_dilation(&dilate(&inst).unwrap(), &inst, 1e-10).passed);

        let id = Instrument::new(vec!["1".into()], vec![Operation::identity(2)]).unwrap();
        let d = dilate(&id).unwrap();
        assert_eq!(d.ancilla_dim(), 1);
        assert_eq!(verify_dilation(&d, &id, 1e-10).max_deviation, 0.0);
    }

    #[test]
    fn corrupted_isometry_is_reported() {
        let inst = luders(&noisy_meter(1.0, &BlochVector::z_axis()).unwrap());
        let d = dilate(&inst).unwrap().with_perturbed_entry(0, 0, C::new(1e-3, 0.0));
        let rep = verify_dilation(&d, &inst, 1e-10);
        assert!(!rep.passed && rep.max_deviation > 1e-4);
        assert!(Dilation::new(d.isometry().clone(), d.ancilla_meter().clone()).is_err());
    }

    #[test]
    fn conjugate_of_sharp_luders() {
        let inst = luders(&noisy_meter(1.0, &BlochVector::z_axis()).unwrap());
        let c = conjugate(&dilate(&inst).unwrap()).unwrap();
        let out = c.operation(0).apply(&M::diag(&[1.0, 0.0])).unwrap();
        assert!(out.distance(&M::diag(&[1.0, 0.0])) < 1e-15);
        assert!(c.operation(1).apply(&M::diag(&[1.0, 0.0])).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn closed_form_example_values() {
        let p = closed_form_pauli_images(0.5f64, 0.5).unwrap();
        let s = hermitian_spectrum(p.get(0, 3), &Tolerance::default()).unwrap();
        assert!(s.eigenvalues.iter().any(|&e| (e + 0.0625).abs() < 1e-12));
        assert!(!is_psd(p.get(0, 3), &Tolerance::default()).unwrap());
        assert!((p.get(0, 3)[(2, 3)].re + 1.5f64.sqrt() / 4.0).abs() < 1e-15);

        // λ = 1: the √(1−λ) prefactor kills the x and y images.
        let p1 = closed_form_pauli_images(1.0, 0.6).unwrap();
        for y in 0..2 {
            assert!(p1.get(y, 1).frobenius_norm() < 1e-15 && p1.get(y, 2).frobenius_norm() < 1e-15);
            assert!(p1.get(y, 3).block(0, 0, 2, 2).frobenius_norm() < 1e-15);
        }
        assert!(closed_form_pauli_images(1.1, 0.5).is_err());
    }

    #[test]
    fn image_traces_on_the_grid() {
        for (l, t) in grid5() {
            assert!(closed_form_pauli_images(l, t).unwrap().trace_defect(t) < 1e-12, "closed form {l} {t}");
            assert!(canonical_pauli_images(l, t).unwrap().trace_defect(t) < 1e-10, "canonical {l} {t}");
        }
        let sharp = canonical_pauli_images(1.0f64, 1.0).unwrap();
        assert!((sharp.get(0, 3).trace().re - 1.0).abs() < 1e-12);
        assert!((sharp.get(1, 3).trace().re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_images_define_a_conjugate_instrument() {
        // X ↦ ½ Σ_μ tr[X σ_μ] Π_μ must be CP: its Choi matrix is PSD.
        let sig = pauli_matrices::<f64>();
        for (l, t) in grid5() {
            let p = closed_form_pauli_images(l, t).unwrap();
            for y in 0..2 {
                let mut choi = M::zeros(8, 8);
                for i in 0..2 {
                    for j in 0..2 {
                        let unit = M::unit(2, i, j);
                        let img = (0..4).fold(M::zeros(4, 4), |acc, mu| {
                            acc + p.get(y, mu).scale(unit.trace_product(&sig[mu]) * 0.5)
                        });
                        choi = choi + kron(&unit, &img);
                    }
                }
                assert!(min_eigenvalue(&choi, &Tolerance::default()).unwrap() > -1e-12, "{l} {t} {y}");
            }
        }
    }

    #[test]
    fn rotation_to_su2_convention() {
        let (a, b) = (0.7f64, 1.9f64);
        let rz: Real3<f64> = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
        let rx: Real3<f64> = [[1.0, 0.0, 0.0], [0.0, b.cos(), -b.sin()], [0.0, b.sin(), b.cos()]];
        let r: Real3<f64> = std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| rz[i][k] * rx[k][j]).sum()));
        let v = su2_from_rotation(&r);
        let sig = pauli_matrices::<f64>();
        for j in 0..3 {
            let lhs = v.sandwich(&sig[j + 1]);
            let rhs = (0..3).fold(M::zeros(2, 2), |acc, i| acc + sig[i + 1].scale_re(r[i][j]));
            assert!(lhs.distance(&rhs) < 1e-14);
        }
        let back = procrustes_rotation(&r);
        assert!((0..3).all(|i| (0..3).all(|j| (back[i][j] - r[i][j]).abs() < 1e-12)));
    }

    #[test]
    fn transport_maps_closed_form_onto_canonical() {
        for (l, t) in grid5() {
            let cf = closed_form_pauli_images(l, t).unwrap();
            let can = canonical_pauli_images(l, t).unwrap();
            let inst = mixed_instrument(l, t, &BlochVector::z_axis()).unwrap();
            let tr = transport(&cf, &can, &inst).unwrap();
            assert!(tr.residual < 1e-9, "residual {} at {l} {t}", tr.residual);
            for y in 0..2 {
                let q = tr.map(y);
                let qq = q.adjoint().matmul(q);
                assert!(qq.matmul(&qq).distance(&qq) < 1e-8, "Q not a partial isometry at {l} {t}");
            }
        }
    }

    #[test]
    fn cross_check_examples() {
        let r = cross_check_images(1.0f64, 0.7, Case::Aligned, 1e-8).unwrap();
        assert!(r.passed && (r.canonical.primal_value - 0.7).abs() < 1e-8);
        for &t in &[0.0, 0.3, 1.0] {
            let r = cross_check_images(0.0f64, t, Case::Aligned, 1e-8).unwrap();
            assert!(r.passed && (r.canonical.primal_value - 1.0).abs() < 1e-8);
        }
        let r = cross_check_images(0.5f64, 0.5, Case::Aligned, 1e-8).unwrap();
        assert!(r.passed && (r.canonical.primal_value - 0.862_372_436).abs() < 1e-8);
    }

    #[test]
    fn dilation_independence_on_grid() {
        for (l, t) in grid5() {
            for case in [Case::Aligned, Case::Complementary] {
                let r = cross_check_images(l, t, case, 1e-8).unwrap();
                assert!(r.passed, "{case:?} {l} {t}: {r:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn conjugate_preserves_outcome_probabilities(
            l in 0.0f64..=1.0, t in 0.0f64..=1.0, v in proptest::collection::vec(-1.0f64..1.0, 3)
        ) {
            let inst = mixed_instrument(l, t, &BlochVector::z_axis()).unwrap();
            let c = conjugate(&dilate(&inst).unwrap()).unwrap();
            let rho = random_state(&v);
            for y in 0..2 {
                let a = c.operation(y).apply(&rho).unwrap().trace();
                let b = inst.operation(y).apply(&rho).unwrap().trace();
                prop_assert!((a - b).norm() < 1e-10);
            }
            let total = c.as_instrument().induced_channel();
            prop_assert!(total.is_trace_preserving(1e-10));
        }
    }
}
