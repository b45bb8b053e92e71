//! Compatibility thresholds for `Z^{λ,t}` (measured along `ẑ`) and an
//! adversary meter `A^{s,n̂}`, with the SDP certificates that prove them.
//!
//! For outcome `y ∈ {+, −}` and ancilla effects `B^y`, the primal problem is
//!
//! ```text
//! max  Σ_y tr[B^y (n̂·Π^y)]
//! s.t. Σ_y tr[B^y (n̂ᵢ·Π^y)] = 0  (i = 1, 2),   0 ≤ B^y ≤ 1,
//! ```
//!
//! and the dual is `min tr[μ⁺ + μ⁻]` over `μ^y ≥ 0`, `μ^y ≥ l̂·Π^y` with
//! `l̂·n̂ = 1`. A primal and a dual feasible point with equal values pin
//! down `s_max`; [`verify_certificates`] checks every condition numerically.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilation::{closed_form_scalars, PauliImages, Transport};
use crate::linalg::{hermitian_spectrum, kron, DenseMatrix, LinalgError, Tolerance};
use crate::objects::{check_range, pauli_matrices, BlochVector, Effect, ObjectError};
use crate::scalar::{re, Real, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompatError {
    #[error("dual certificate infeasible for outcome {outcome}: {condition} has eigenvalue {min_eigenvalue:e}")]
    DualInfeasible { outcome: &'static str, condition: &'static str, min_eigenvalue: f64 },
    #[error("frame is not orthonormal (defect {defect:e})")]
    Frame { defect: f64 },
    #[error("unknown case {0:?} (expected aligned or complementary)")]
    UnknownCase(String),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Relation between the adversary direction `n̂` and the measured `m̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// `n̂ = m̂`.
    Aligned,
    /// `n̂ ⊥ m̂`.
    Complementary,
}

impl Case {
    pub const ALL: [Case; 2] = [Case::Aligned, Case::Complementary];

    pub fn name(self) -> &'static str {
        match self {
            Case::Aligned => "aligned",
            Case::Complementary => "complementary",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = CompatError;
    fn from_str(s: &str) -> Result<Self, CompatError> {
        match s {
            "aligned" => Ok(Case::Aligned),
            "complementary" => Ok(Case::Complementary),
            other => Err(CompatError::UnknownCase(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatQuery<T> {
    pub lambda: T,
    pub t: T,
    pub case: Case,
}

impl<T: Real> CompatQuery<T> {
    pub fn new(lambda: T, t: T, case: Case) -> Result<Self, CompatError> {
        check_range("lambda", lambda, 0.0, 1.0, "[0, 1]")?;
        check_range("t", t, 0.0, 1.0, "[0, 1]")?;
        Ok(Self { lambda, t, case })
    }

    pub fn s_max(&self) -> T {
        match self.case {
            Case::Aligned => aligned_formula(self.lambda, self.t),
            Case::Complementary => complementary_formula(self.lambda, self.t),
        }
    }
}

fn big_lambda<T: Real>(lambda: T) -> T {
    (T::one() - lambda) * (T::one() + T::lit(3.0) * lambda)
}

fn aligned_formula<T: Real>(lambda: T, t: T) -> T {
    let half = T::lit(0.5);
    half * (T::one() - lambda + (big_lambda(lambda) + T::lit(4.0) * t * t * lambda * lambda).sqrt())
}

fn complementary_formula<T: Real>(lambda: T, t: T) -> T {
    let half = T::lit(0.5);
    half * (T::one() - lambda + big_lambda(lambda).sqrt()) * (T::one() - t * t).sqrt()
}

/// `½[1 − λ + √(Λ + 4t²λ²)]`, `Λ = (1−λ)(1+3λ)`.
pub fn s_max_aligned<T: Real>(lambda: T, t: T) -> Result<T, CompatError> {
    Ok(CompatQuery::new(lambda, t, Case::Aligned)?.s_max())
}

/// `½[1 − λ + √Λ] √(1 − t²)`.
pub fn s_max_complementary<T: Real>(lambda: T, t: T) -> Result<T, CompatError> {
    Ok(CompatQuery::new(lambda, t, Case::Complementary)?.s_max())
}

/// Orthonormal frame `(n̂; n̂₁, n̂₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frame<T> {
    pub n: BlochVector<T>,
    pub n1: BlochVector<T>,
    pub n2: BlochVector<T>,
}

impl<T: Real> Frame<T> {
    pub fn new(n: BlochVector<T>, n1: BlochVector<T>, n2: BlochVector<T>) -> Result<Self, CompatError> {
        let defect = [n.dot(&n1), n.dot(&n2), n1.dot(&n2)]
            .iter()
            .map(|d| d.abs())
            .chain([n, n1, n2].iter().map(|v| (v.norm() - T::one()).abs()))
            .fold(T::zero(), T::max);
        if defect > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
            return Err(CompatError::Frame { defect: defect.to_f64_lossy() });
        }
        Ok(Self { n, n1, n2 })
    }

    /// `(ẑ; x̂, ŷ)`.
    pub fn aligned() -> Self {
        Self { n: BlochVector::z_axis(), n1: BlochVector::x_axis(), n2: BlochVector::y_axis() }
    }

    /// `(x̂; ẑ, ŷ)`.
    pub fn complementary() -> Self {
        Self { n: BlochVector::x_axis(), n1: BlochVector::z_axis(), n2: BlochVector::y_axis() }
    }

    pub fn for_case(case: Case) -> Self {
        match case {
            Case::Aligned => Self::aligned(),
            Case::Complementary => Self::complementary(),
        }
    }

    /// Gram–Schmidt against the canonical axis least aligned with `n`
    /// (lowest index on ties); `n₂ = n × n₁`.
    pub fn complete(n: &BlochVector<T>) -> Result<Self, CompatError> {
        if !n.is_unit() {
            return Err(ObjectError::BlochNorm { norm: n.norm().to_f64_lossy(), unit: true }.into());
        }
        let c = n.components();
        let mut axis = 0;
        for i in 1..3 {
            if c[i].abs() < c[axis].abs() {
                axis = i;
            }
        }
        let e = [BlochVector::x_axis(), BlochVector::y_axis(), BlochVector::z_axis()][axis];
        let w = e.sub(&n.scale(n.dot(&e)));
        let n1 = w.scale(T::one() / w.norm());
        Self::new(*n, n1, n.cross(&n1))
    }
}

/// `‖s n̂ + t m̂‖ + ‖s n̂ − t m̂‖ ≤ 2` with additive slack `1e-12`.
///
/// Evaluated in the frame of `n̂`, where `m̂ = a n̂ + b n̂₁ + c n̂₂`.
pub fn meters_compatible<T: Real>(s: T, n: &BlochVector<T>, t: T, m: &BlochVector<T>) -> Result<bool, CompatError> {
    check_range("s", s, 0.0, 1.0, "[0, 1]")?;
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    if !m.is_unit() {
        return Err(ObjectError::BlochNorm { norm: m.norm().to_f64_lossy(), unit: true }.into());
    }
    let f = Frame::complete(n)?;
    let (a, b, c) = (m.dot(&f.n), m.dot(&f.n1), m.dot(&f.n2));
    let perp = t * t * (b * b + c * c);
    let plus = ((s + t * a) * (s + t * a) + perp).sqrt();
    let minus = ((s - t * a) * (s - t * a) + perp).sqrt();
    Ok(plus + minus <= T::lit(2.0) + T::lit(1e-12))
}

/// Primal feasible point: effects on the ancilla and the frame they certify.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalCertificate<T: Real> {
    pub b_plus: Effect<T>,
    pub b_minus: Effect<T>,
    pub frame: Frame<T>,
    /// `B^y` are projectors. Cleared by transport, which preserves effects only.
    pub sharp: bool,
}

impl<T: Real> PrimalCertificate<T> {
    pub fn b(&self, y: usize) -> &DenseMatrix<T> {
        match y {
            0 => self.b_plus.matrix(),
            _ => self.b_minus.matrix(),
        }
    }

    /// `B^y ↦ Q_y B^y Q_y†`.
    pub fn transported(&self, tr: &Transport<T>) -> Result<Self, CompatError> {
        Ok(Self {
            b_plus: Effect::new(tr.carry(0, self.b(0)))?,
            b_minus: Effect::new(tr.carry(1, self.b(1)))?,
            frame: self.frame,
            sharp: false,
        })
    }

    /// `B^y ↦ (1 − ε)B^y + (ε/2)1`: still effects, no longer projectors.
    pub fn blurred(&self, eps: T) -> Result<Self, CompatError> {
        let blur = |b: &DenseMatrix<T>| {
            b.scale_re(T::one() - eps) + DenseMatrix::identity(b.rows()).scale_re(eps * T::lit(0.5))
        };
        Ok(Self {
            b_plus: Effect::new(blur(self.b(0)))?,
            b_minus: Effect::new(blur(self.b(1)))?,
            frame: self.frame,
            sharp: self.sharp,
        })
    }

    /// `B^y ↦ U B^y U†`.
    pub fn conjugated(&self, u: &DenseMatrix<T>) -> Result<Self, CompatError> {
        Ok(Self {
            b_plus: Effect::new(u.sandwich(self.b(0)))?,
            b_minus: Effect::new(u.sandwich(self.b(1)))?,
            frame: self.frame,
            sharp: self.sharp,
        })
    }
}

/// Dual point `(μ⁺, μ⁻, l̂)`. Stored unchecked so tampered values can be verified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate<T: Real> {
    pub mu_plus: DenseMatrix<T>,
    pub mu_minus: DenseMatrix<T>,
    pub l: BlochVector<T>,
}

impl<T: Real> DualCertificate<T> {
    pub fn mu(&self, y: usize) -> &DenseMatrix<T> {
        match y {
            0 => &self.mu_plus,
            _ => &self.mu_minus,
        }
    }

    pub fn transported(&self, tr: &Transport<T>) -> Self {
        Self { mu_plus: tr.carry(0, &self.mu_plus), mu_minus: tr.carry(1, &self.mu_minus), l: self.l }
    }

    /// `μ^y ↦ μ^y + δ·1`.
    pub fn shifted(&self, delta: T) -> Self {
        let n = self.mu_plus.rows();
        let shift = DenseMatrix::identity(n).scale_re(delta);
        Self { mu_plus: &self.mu_plus + &shift, mu_minus: &self.mu_minus + &shift, l: self.l }
    }
}

/// `B = ½[1₄ + ½ σ_z⊗(σ_x − σ_z) − ½ 1₂⊗(σ_x + σ_z)]`, a rank-two projection.
pub fn aligned_effect<T: Real>() -> DenseMatrix<T> {
    let [one, x, _, z] = pauli_matrices::<T>();
    let half = re(T::lit(0.5));
    (DenseMatrix::identity(4) + kron(&z, &(&x - &z)).scale(half) - kron(&one, &(&x + &z)).scale(half)).scale(half)
}

/// `b, c = √(½ ± tλ/√(Λ + 4t²λ²))`, with `tλ/r = ½` at `r = 0`.
pub fn complementary_bc<T: Real>(lambda: T, t: T) -> (T, T) {
    let s = closed_form_scalars(lambda, t);
    let half = T::lit(0.5);
    ((half + s.tl_over_r).sqrt(), (half - s.tl_over_r).max(T::zero()).sqrt())
}

/// `B⁺ = ½[1 + c σ_x⊗σ_x − b σ_x⊗σ_z]`, `B⁻ = ½[1 + b σ_x⊗σ_x − c σ_x⊗σ_z]`.
pub fn complementary_effects<T: Real>(lambda: T, t: T) -> (DenseMatrix<T>, DenseMatrix<T>) {
    let [_, x, _, z] = pauli_matrices::<T>();
    let (b, c) = complementary_bc(lambda, t);
    let xx = kron(&x, &x);
    let xz = kron(&x, &z);
    let half = T::lit(0.5);
    let build = |p: T, q: T| (DenseMatrix::identity(4) + xx.scale_re(p) - xz.scale_re(q)).scale_re(half);
    (build(c, b), build(b, c))
}

/// `(g₊, g₋, g₊g₋ − 2t²λ²(1 + λ − √Λ))` from the block form of `Π_x^±`.
pub fn complementary_sylvester_margin<T: Real>(lambda: T, t: T) -> (T, T, T) {
    let one = T::one();
    let two = T::lit(2.0);
    let lam = big_lambda(lambda);
    let sl = lam.max(T::zero()).sqrt();
    let r = (lam + T::lit(4.0) * lambda * lambda * t * t).sqrt();
    let base = (one + lambda) * (lam + two * lambda * lambda * t * t);
    let g = |sg: T| (base + two * sl * lambda * (lambda * t * t + sg * r)).max(T::zero()).sqrt();
    let (gp, gm) = (g(one), g(-one));
    (gp, gm, gp * gm - two * t * t * lambda * lambda * (one + lambda - sl))
}

/// Effects on the four-dimensional ancilla of the closed-form images.
pub fn primal_certificate<T: Real>(q: &CompatQuery<T>) -> Result<PrimalCertificate<T>, CompatError> {
    let (bp, bm) = match q.case {
        Case::Aligned => (aligned_effect(), aligned_effect()),
        Case::Complementary => complementary_effects(q.lambda, q.t),
    };
    Ok(PrimalCertificate { b_plus: Effect::new(bp)?, b_minus: Effect::new(bm)?, frame: Frame::for_case(q.case), sharp: true })
}

/// `μ^y = B^y (l̂·Π^y) B^y` with `l̂ = n̂`; checks both dual constraints.
pub fn dual_certificate<T: Real>(q: &CompatQuery<T>, images: &PauliImages<T>) -> Result<DualCertificate<T>, CompatError> {
    let pc = primal_certificate(q)?;
    let l = pc.frame.n;
    let tol = Tolerance::default();
    let mut mus = Vec::with_capacity(2);
    for (y, outcome) in ["+", "-"].into_iter().enumerate() {
        let target = images.along(y, &l);
        let mu = pc.b(y).matmul(&target).matmul(pc.b(y));
        for (condition, m) in [("mu", mu.clone()), ("mu - l.Pi", &mu - &target)] {
            let min = hermitian_spectrum(&m, &tol)?.min();
            if min < -tol.psd_tol {
                return Err(CompatError::DualInfeasible { outcome, condition, min_eigenvalue: min.to_f64_lossy() });
            }
        }
        mus.push(mu);
    }
    let mu_minus = mus.pop().expect("two outcomes");
    let mu_plus = mus.pop().expect("two outcomes");
    Ok(DualCertificate { mu_plus, mu_minus, l })
}

/// Every quantity checked by [`verify_certificates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertReport<T> {
    pub primal_value: T,
    pub dual_value: T,
    /// `dual_value − primal_value`.
    pub gap: T,
    /// Max `|Σ_y tr[B^y (n̂ᵢ·Π^y)]|` over `i = 1, 2`.
    pub constraint_violation: T,
    /// Max amount by which `0 ≤ B^y ≤ 1` fails.
    pub effect_violation: T,
    /// Max `‖(B^y)² − B^y‖_F`; enforced only for sharp certificates.
    pub projection_defect: T,
    /// Max amount by which `μ^y ≥ 0` or `μ^y ≥ l̂·Π^y` fails.
    pub dual_violation: T,
    /// `|l̂·n̂ − 1|`.
    pub direction_defect: T,
    /// `‖Σ_y Ī*_y(B^y) − ½(1 + s σ_n̂)‖_F` with `s` the primal value.
    pub reconstruction_error: T,
    /// `|tr Σ_y Ī*_y(B^y) − 1|`.
    pub normalization_error: T,
    /// Largest of the violations above and `|gap|`.
    pub max_violation: T,
    pub passed: bool,
}

fn eigen_bounds<T: Real>(m: &DenseMatrix<T>) -> (T, T) {
    match hermitian_spectrum(m, &Tolerance::default()) {
        Ok(s) => (s.min(), s.max()),
        Err(_) => (T::neg_infinity(), T::infinity()),
    }
}

pub fn verify_certificates<T: Real>(
    images: &PauliImages<T>,
    pc: &PrimalCertificate<T>,
    dc: &DualCertificate<T>,
    tol: T,
) -> CertReport<T> {
    let f = &pc.frame;
    let zero = T::zero();
    let objective = |d: &BlochVector<T>| (0..2).map(|y| pc.b(y).trace_product(&images.along(y, d)).re).sum::<T>();
    let primal_value = objective(&f.n);
    let constraint_violation = objective(&f.n1).abs().max(objective(&f.n2).abs());

    let mut effect_violation = zero;
    let mut projection_defect = zero;
    let mut dual_violation = zero;
    let mut dual_value = zero;
    let mut reconstructed = DenseMatrix::zeros(2, 2);
    for y in 0..2 {
        let b = pc.b(y);
        let (lo, hi) = eigen_bounds(b);
        effect_violation = effect_violation.max(-lo).max(hi - T::one());
        projection_defect = projection_defect.max(b.matmul(b).distance(b));
        let mu = dc.mu(y);
        let target = images.along(y, &dc.l);
        dual_violation = dual_violation.max(-eigen_bounds(mu).0).max(-eigen_bounds(&(mu - &target)).0);
        dual_value = dual_value + mu.trace().re;
        reconstructed = reconstructed + images.adjoint_apply(y, b);
    }
    let direction_defect = (dc.l.dot(&f.n) - T::one()).abs();
    let expected = (DenseMatrix::identity(2) + f.n.sigma().scale_re(primal_value)).scale_re(T::lit(0.5));
    let reconstruction_error = reconstructed.distance(&expected);
    let normalization_error = (reconstructed.trace().re - T::one()).abs();
    let gap = dual_value - primal_value;
    let max_violation = [
        gap.abs(),
        constraint_violation,
        effect_violation.max(zero),
        if pc.sharp { projection_defect } else { zero },
        dual_violation.max(zero),
        direction_defect,
        reconstruction_error,
        normalization_error,
    ]
    .into_iter()
    .fold(zero, |a, b| if b.is_nan() { T::infinity() } else { a.max(b) });
    CertReport {
        primal_value,
        dual_value,
        gap,
        constraint_violation,
        effect_violation: effect_violation.max(zero),
        projection_defect,
        dual_violation: dual_violation.max(zero),
        direction_defect,
        reconstruction_error,
        normalization_error,
        max_violation,
        passed: max_violation <= tol,
    }
}

/// `exp(−iθ Σ_k σ_y^{(2k, 2k+1)})`: a real rotation by `angle` in each
/// consecutive coordinate pair (odd trailing coordinate fixed).
pub fn pairwise_rotation<T: Real>(dim: usize, angle: T) -> DenseMatrix<T> {
    let (c, s) = (angle.cos(), angle.sin());
    DenseMatrix::from_fn(dim, dim, |i, j| {
        let paired = i / 2 == j / 2 && 2 * (i / 2) + 1 < dim;
        let v = match (paired, i % 2, j % 2) {
            (true, 0, 0) | (true, 1, 1) => c,
            (true, 0, 1) => -s,
            (true, 1, 0) => s,
            (false, _, _) if i == j => T::one(),
            _ => T::zero(),
        };
        re(v)
    })
}

/// Effect pair under evaluation by the random search.
#[derive(Clone)]
struct Pair<T: Real> {
    b: [DenseMatrix<T>; 2],
    value: T,
    constraints: [T; 2],
}

struct Objective<T: Real> {
    n: [DenseMatrix<T>; 2],
    n1: [DenseMatrix<T>; 2],
    n2: [DenseMatrix<T>; 2],
}

impl<T: Real> Objective<T> {
    fn new(images: &PauliImages<T>, frame: &Frame<T>) -> Self {
        let along = |v: &BlochVector<T>| [images.along(0, v), images.along(1, v)];
        Self { n: along(&frame.n), n1: along(&frame.n1), n2: along(&frame.n2) }
    }

    /// Projections onto the positive parts of `Π_n + a Π_{n1} + b Π_{n2}`.
    fn positive_part(&self, [a, b]: [T; 2], tol: &Tolerance<T>) -> Option<Pair<T>> {
        let proj = |y: usize| -> Option<DenseMatrix<T>> {
            let tilted = &self.n[y] + &(&self.n1[y].scale_re(a) + &self.n2[y].scale_re(b));
            let spec = hermitian_spectrum(&tilted, tol).ok()?;
            Some(spec.apply(|x| if x > T::zero() { T::one() } else { T::zero() }))
        };
        Some(self.pair([proj(0)?, proj(1)?]))
    }

    fn pair(&self, b: [DenseMatrix<T>; 2]) -> Pair<T> {
        let eval = |ops: &[DenseMatrix<T>; 2]| (0..2).map(|y| b[y].trace_product(&ops[y]).re).sum::<T>();
        Pair { value: eval(&self.n), constraints: [eval(&self.n1), eval(&self.n2)], b }
    }
}

/// Convex weights `w ≥ 0`, `Σw = 1`, killing both constraints of three pairs.
/// Degenerate (collinear or vanishing) constraint points fall back to edges
/// and vertices; the feasible candidate of largest value wins.
fn feasible_mix<T: Real>(p: [&Pair<T>; 3]) -> Option<[T; 3]> {
    let c = |k: usize| p[k].constraints;
    let scale = (0..3).fold(T::one(), |a, k| a.max(c(k)[0].abs()).max(c(k)[1].abs()));
    let slack = T::lit(1e-12) * scale;
    let feasible = |w: &[T; 3]| {
        w.iter().all(|&x| x >= T::zero())
            && (0..2).all(|i| (0..3).map(|k| w[k] * c(k)[i]).sum::<T>().abs() <= slack)
    };
    let mut candidates: Vec<[T; 3]> = Vec::new();

    let (r1, r2) = ([c(0)[0], c(1)[0], c(2)[0]], [c(0)[1], c(1)[1], c(2)[1]]);
    let w = [r1[1] * r2[2] - r1[2] * r2[1], r1[2] * r2[0] - r1[0] * r2[2], r1[0] * r2[1] - r1[1] * r2[0]];
    let sum = w[0] + w[1] + w[2];
    if sum.abs() > slack * slack {
        candidates.push([w[0] / sum, w[1] / sum, w[2] / sum]);
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (na, nb) = (c(a)[0].hypot(c(a)[1]), c(b)[0].hypot(c(b)[1]));
        if na + nb > T::zero() {
            let mut w = [T::zero(); 3];
            w[a] = nb / (na + nb);
            w[b] = na / (na + nb);
            candidates.push(w);
        }
    }
    for k in 0..3 {
        let mut w = [T::zero(); 3];
        w[k] = T::one();
        candidates.push(w);
    }
    let value = |w: &[T; 3]| (0..3).map(|k| w[k] * p[k].value).sum::<T>();
    candidates
        .into_iter()
        .filter(feasible)
        .fold(None, |best: Option<[T; 3]>, w| match best {
            Some(b) if value(&b) >= value(&w) => Some(b),
            _ => Some(w),
        })
}

fn mix<T: Real>(obj: &Objective<T>, p: [&Pair<T>; 3], w: [T; 3]) -> Pair<T> {
    let combine = |y: usize| {
        p[0].b[y].scale_re(w[0]) + p[1].b[y].scale_re(w[1]) + p[2].b[y].scale_re(w[2])
    };
    obj.pair([combine(0), combine(1)])
}

fn gaussian<T: Real>(rng: &mut ChaCha8Rng) -> C<T> {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C::new(T::lit(a), T::lit(b))
}

/// Projection onto the span of `rank` Gaussian vectors.
fn random_projection<T: Real>(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DenseMatrix<T> {
    let mut basis: Vec<Vec<C<T>>> = Vec::new();
    while basis.len() < rank.min(dim) {
        let mut v: Vec<C<T>> = (0..dim).map(|_| gaussian(rng)).collect();
        for u in &basis {
            let overlap = u.iter().zip(&v).fold(C::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
            for (x, y) in v.iter_mut().zip(u) {
                *x = *x - overlap * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if norm > T::lit(1e-6) {
            basis.push(v.into_iter().map(|z| z / re(norm)).collect());
        }
    }
    basis.iter().fold(DenseMatrix::zeros(dim, dim), |acc, v| acc + DenseMatrix::outer(v, v))
}

/// Best primal objective found by random feasible effect pairs.
///
/// Global phase: three random pairs of projections of rank ≤ 2 are mixed
/// with the convex weights that zero both linear constraints (samples
/// without such weights are skipped). Second phase: the same mixing applied
/// to positive-part projections of randomly tilted objectives
/// `Π_n + aΠ_{n1} + bΠ_{n2}`. The incumbent is replaced only on improvement. Every evaluated pair is exactly feasible, so the result never
/// exceeds a feasible dual value (weak duality).
pub fn random_primal_search<T: Real>(images: &PauliImages<T>, frame: &Frame<T>, iters: usize, seed: u64) -> T {
    let obj = Objective::new(images, frame);
    let dim = images.ancilla_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = DenseMatrix::identity(dim).scale_re(T::lit(0.5));
    let mut best = obj.pair([half.clone(), half]);
    let global = iters.div_ceil(2);
    let tol = Tolerance::default();

    let draw = |rng: &mut ChaCha8Rng| {
        let mut b = || {
            let rank = rng.random_range(0..=2);
            random_projection::<T>(rng, dim, rank)
        };
        let (p, m) = (b(), b());
        obj.pair([p, m])
    };
    for _ in 0..global {
        let p = [draw(&mut rng), draw(&mut rng), draw(&mut rng)];
        if let Some(w) = feasible_mix([&p[0], &p[1], &p[2]]) {
            let cand: T = (0..3).map(|k| w[k] * p[k].value).sum();
            if cand > best.value {
                best = mix(&obj, [&p[0], &p[1], &p[2]], w);
            }
        }
    }

    for _ in global..iters {
        let mut tilted = || -> Option<Pair<T>> {
            let spread = T::lit(10f64.powf(rng.random_range(-2.0..2.0)));
            let (a, b) = (gaussian::<T>(&mut rng), gaussian::<T>(&mut rng));
            obj.positive_part([a.re * spread, b.re * spread], &tol)
        };
        let (Some(a), Some(b), Some(c)) = (tilted(), tilted(), tilted()) else {
            continue;
        };
        if let Some(w) = feasible_mix([&a, &b, &c]) {
            if (0..3).map(|k| w[k] * [&a, &b, &c][k].value).sum::<T>() > best.value {
                best = mix(&obj, [&a, &b, &c], w);
            }
        }
    }
    best.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::closed_form_pauli_images;

    fn grid(n: usize) -> impl Iterator<Item = (f64, f64)> {
        let h = 1.0 / (n - 1) as f64;
        (0..n).flat_map(move |i| (0..n).map(move |j| (i as f64 * h, j as f64 * h)))
    }

    fn certify(l: f64, t: f64, case: Case) -> CertReport<f64> {
        let q = CompatQuery::new(l, t, case).unwrap();
        let images = closed_form_pauli_images(l, t).unwrap();
        let pc = primal_certificate(&q).unwrap();
        let dc = dual_certificate(&q, &images).unwrap();
        verify_certificates(&images, &pc, &dc, 1e-10)
    }

    fn spectrum(m: &DenseMatrix<f64>) -> Vec<f64> {
        hermitian_spectrum(m, &Tolerance::default()).unwrap().eigenvalues
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(s_max_aligned(1.0, 0.7).unwrap(), 0.7);
        assert_eq!(s_max_aligned(0.0, 0.3).unwrap(), 1.0);
        assert!((s_max_aligned(0.5f64, 0.5).unwrap() - 0.862_372_435_695_794_5).abs() < 1e-15);
        assert_eq!(s_max_complementary(1.0, 0.4).unwrap(), 0.0);
        assert!((s_max_complementary(0.0f64, 0.6).unwrap() - 0.8).abs() < 1e-15);
        assert!((s_max_complementary(0.5f64, 0.6).unwrap() - 0.647_213_595_499_958).abs() < 1e-15);
        assert!(s_max_aligned(-0.1, 0.5).is_err());
        assert!(s_max_complementary(0.5, 1.5).is_err());
    }

    #[test]
    fn compatibility_examples() {
        let z = BlochVector::z_axis();
        let x = BlochVector::x_axis();
        assert!(meters_compatible(1.0, &z, 1.0, &z).unwrap());
        let h = 0.5f64.sqrt();
        assert!(meters_compatible(h, &x, h, &z).unwrap());
        assert!(!meters_compatible(0.9, &x, 0.9, &z).unwrap());
        let tilted = BlochVector::unit(0.6, 0.0, 0.8).unwrap();
        assert!(meters_compatible(0.5, &tilted, 0.5, &z).unwrap());
    }

    #[test]
    fn busch_boundary() {
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let s = s_max_complementary(0.0, t).unwrap();
            assert!(meters_compatible(s, &BlochVector::x_axis(), t, &BlochVector::z_axis()).unwrap());
            if k > 0 && k < 10 {
                assert!(!meters_compatible(s + 1e-6, &BlochVector::x_axis(), t, &BlochVector::z_axis()).unwrap());
            }
        }
    }

    #[test]
    fn frame_completion() {
        let n = BlochVector::unit(0.0f64, 0.6, 0.8).unwrap();
        let f = Frame::complete(&n).unwrap();
        assert_eq!(f.n1, BlochVector::x_axis());
        assert!((f.n2.dot(&n)).abs() < 1e-15 && f.n2.is_unit());
        assert!(Frame::new(BlochVector::<f64>::z_axis(), BlochVector::z_axis(), BlochVector::y_axis()).is_err());
    }

    #[test]
    fn primal_effects_are_rank_two_projections() {
        let b = aligned_effect::<f64>();
        assert!(b.matmul(&b).distance(&b) < 1e-15);
        let e = spectrum(&b);
        assert!(e.iter().zip([1.0, 1.0, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        for (l, t) in grid(5) {
            let (bp, bm) = complementary_effects(l, t);
            for m in [&bp, &bm] {
                let e = spectrum(m);
                assert!(e.iter().zip([1.0, 1.0, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-9), "{l} {t}");
            }
        }
        let (b, c) = complementary_bc(0.5f64, 0.5);
        assert!((b * b + c * c - 1.0).abs() < 1e-12);
        let (b, c) = complementary_bc(0.3f64, 0.0);
        assert!((b - 0.5f64.sqrt()).abs() < 1e-15 && (c - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn aligned_dual_spectra() {
        let q = CompatQuery::new(0.5, 0.5, Case::Aligned).unwrap();
        let images = closed_form_pauli_images(0.5, 0.5).unwrap();
        let dc = dual_certificate(&q, &images).unwrap();
        let r = 1.5f64.sqrt();
        let plus = [(r + 0.75) / 4.0, 0.1875, 0.0, 0.0];
        let minus = [(r - 0.75) / 4.0, 0.0625, 0.0, 0.0];
        let got_p = spectrum(&dc.mu_plus);
        let got_m = spectrum(&dc.mu_minus);
        assert!(got_p.iter().zip(plus).all(|(a, b)| (a - b).abs() < 1e-9), "{got_p:?}");
        assert!(got_m.iter().zip(minus).all(|(a, b)| (a - b).abs() < 1e-9), "{got_m:?}");
        assert!((got_p[0] - 0.493_686_2).abs() < 1e-7);
        // μ^± − Π_z^± shares the spectrum of μ^∓.
        let shifted = spectrum(&(&dc.mu_plus - images.get(0, 3)));
        assert!(shifted.iter().zip(&got_m).all(|(a, b)| (a - b).abs() < 1e-9));

        let images = closed_form_pauli_images(1.0, 0.6).unwrap();
        let dc = dual_certificate(&CompatQuery::new(1.0, 0.6, Case::Aligned).unwrap(), &images).unwrap();
        let got = spectrum(&dc.mu_plus);
        assert!((got[0] - 0.6).abs() < 1e-12 && got[1..].iter().all(|e| e.abs() < 1e-12));
        assert!(spectrum(&dc.mu_minus).iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn sylvester_margin_on_grid() {
        for (l, t) in grid(5) {
            let (gp, gm, margin) = complementary_sylvester_margin(l, t);
            assert!(gp >= 0.0 && gm >= 0.0 && margin >= -1e-12, "{l} {t}: {margin}");
        }
    }

    #[test]
    fn certificate_examples() {
        let r = certify(0.5, 0.5, Case::Aligned);
        assert!(r.passed, "{r:?}");
        assert!((r.primal_value - 0.862_372_4).abs() < 1e-7 && r.gap.abs() <= 1e-10);
        let r = certify(0.5, 0.6, Case::Complementary);
        assert!(r.passed, "{r:?}");
        assert!((r.primal_value - 0.647_213_6).abs() < 1e-7 && r.gap.abs() <= 1e-10);
    }

    #[test]
    fn zero_gap_on_grid() {
        for (l, t) in grid(11) {
            for case in Case::ALL {
                let r = certify(l, t, case);
                let s = CompatQuery::new(l, t, case).unwrap().s_max();
                assert!(r.passed, "{case} {l} {t}: {r:?}");
                assert!((r.primal_value - s).abs() <= 1e-9 && (r.dual_value - s).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn rotated_effect_is_suboptimal() {
        let (l, t) = (0.5, 0.5);
        let q = CompatQuery::new(l, t, Case::Aligned).unwrap();
        let images = closed_form_pauli_images(l, t).unwrap();
        let pc = primal_certificate(&q).unwrap().conjugated(&pairwise_rotation(4, 0.1)).unwrap();
        let dc = dual_certificate(&q, &images).unwrap();
        let r = verify_certificates(&images, &pc, &dc, 1e-10);
        assert!(!r.passed && r.primal_value < r.dual_value && r.max_violation > 1e-3, "{r:?}");
    }

    #[test]
    fn shifted_certificates_are_rejected() {
        for case in Case::ALL {
            for (l, t) in [(0.3, 0.4), (0.5, 0.5), (0.8, 0.9)] {
                let q = CompatQuery::new(l, t, case).unwrap();
                let images = closed_form_pauli_images(l, t).unwrap();
                let pc = primal_certificate(&q).unwrap();
                let dc = dual_certificate(&q, &images).unwrap();
                let r = verify_certificates(&images, &pc, &dc.shifted(-1e-2), 1e-10);
                assert!(r.dual_violation > 1e-4 && !r.passed);
            }
        }
    }

    #[test]
    fn blurred_primal_is_rejected_everywhere() {
        for (l, t) in grid(11) {
            let images = closed_form_pauli_images(l, t).unwrap();
            for case in Case::ALL {
                let q = CompatQuery::new(l, t, case).unwrap();
                let pc = primal_certificate(&q).unwrap().blurred(1e-2).unwrap();
                let dc = dual_certificate(&q, &images).unwrap();
                let r = verify_certificates(&images, &pc, &dc, 1e-10);
                assert!(r.projection_defect > 1e-4 && !r.passed, "{case} {l} {t}: {r:?}");
            }
        }
    }

    #[test]
    fn dual_rejects_flipped_images() {
        let q = CompatQuery::new(0.5, 0.5, Case::Aligned).unwrap();
        let images = closed_form_pauli_images(0.5, 0.5).unwrap().with_flipped_z();
        assert!(matches!(dual_certificate(&q, &images), Err(CompatError::DualInfeasible { .. })));
    }

    #[test]
    fn monotonicity_and_coincidence() {
        let h = 0.1;
        for i in 0..=10 {
            let l = i as f64 * h;
            let at_zero = 0.5 * (1.0 - l + ((1.0 - l) * (1.0 + 3.0 * l)).sqrt());
            assert!((s_max_aligned(l, 0.0).unwrap() - at_zero).abs() < 1e-12);
            assert!((s_max_complementary(l, 0.0).unwrap() - at_zero).abs() < 1e-12);
            for j in 0..10 {
                let (t0, t1) = (j as f64 * h, (j + 1) as f64 * h);
                assert!(s_max_aligned(l, t1).unwrap() >= s_max_aligned(l, t0).unwrap());
                assert!(s_max_complementary(l, t1).unwrap() <= s_max_complementary(l, t0).unwrap());
                if i < 10 {
                    let l1 = l + h;
                    assert!(s_max_aligned(l1, t0).unwrap() <= s_max_aligned(l, t0).unwrap() + 1e-15);
                    assert!(s_max_complementary(l1, t0).unwrap() <= s_max_complementary(l, t0).unwrap() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn random_search_respects_weak_duality() {
        let images = closed_form_pauli_images(1.0, 0.7).unwrap();
        let best = random_primal_search(&images, &Frame::aligned(), 10_000, 42);
        assert!((0.665..=0.7 + 1e-9).contains(&best), "best {best}");

        let images = closed_form_pauli_images(0.0, 0.5).unwrap();
        let best = random_primal_search(&images, &Frame::aligned(), 4_000, 7);
        assert!(best <= 1.0 + 1e-9 && best > 0.9, "best {best}");

        let images = closed_form_pauli_images(0.5, 0.6).unwrap();
        let best = random_primal_search(&images, &Frame::complementary(), 2_000, 1);
        assert!(best <= s_max_complementary(0.5, 0.6).unwrap() + 1e-9);
    }

    #[test]
    fn random_search_approaches_certified_optimum() {
        for (l, t) in grid(5) {
            let images = closed_form_pauli_images(l, t).unwrap();
            for case in Case::ALL {
                let s = CompatQuery::new(l, t, case).unwrap().s_max();
                let best = random_primal_search(&images, &Frame::for_case(case), 10_000, 42);
                assert!(best <= s + 1e-9, "{case} {l} {t}: {best} > {s}");
                assert!(best >= 0.95 * s, "{case} {l} {t}: {best} < 0.95 * {s}");
            }
        }
    }

    #[test]
    fn pairwise_rotation_is_orthogonal() {
        for dim in [2, 4, 5] {
            let r = pairwise_rotation::<f64>(dim, 0.3);
            assert!(r.adjoint().matmul(&r).distance(&DenseMatrix::identity(dim)) < 1e-15);
        }
    }
}
