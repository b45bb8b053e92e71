//! The adversary's device for the aligned case.
//!
//! The adversary measures the Lüders instrument of `Z^{s_max}` and then, on
//! outcome `y`, runs a two-qubit circuit `U_y` on the system and a fresh
//! ancilla in `|0⟩`, reading the ancilla with a biased meter `Z̃^{(y)}`. The
//! resulting operations `R^{(y)}_x` satisfy
//! `Z^{λ,t}_x = Σ_y R^{(y)}_x ∘ L_y`, and the outcome-averaged channels
//! `Φ^{(y)} = Σ_x R^{(y)}_x` are amplitude-damping channels with rate
//! `sin²(θ/2)`.
//!
//! Tensor order is system first, ancilla second.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compat::{s_max_aligned, CompatError};
use crate::linalg::{psd_sqrt, DenseMatrix, LinalgError, Tolerance};
use crate::objects::{
    check_range, luders, mixed_instrument, noisy_meter, pauli_matrices, BlochVector, Instrument, Meter,
    ObjectError, Operation,
};
use crate::scalar::{re, Real};

/// Slack on the arcsin domain and on the biased-meter inequalities.
const DOMAIN_SLACK: f64 = 1e-12;
/// Smallest admissible `|2s_max + λ − 1|`.
const DENOMINATOR_FLOOR: f64 = 1e-9;
/// Largest Choi distance accepted as an amplitude-damping fit in `f64`;
/// coarser scalars use `1000 ε`.
pub const DAMPING_FIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("no adversary device at lambda = {lambda}, t = {t}: {condition} (value {value})")]
    ParameterRegion { lambda: f64, t: f64, condition: &'static str, value: f64 },
    #[error("unknown theta formula {0:?} (expected one-minus-lambda or one-plus-lambda)")]
    UnknownFormula(String),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Numerator of the arcsin argument in `θ = 2 arcsin √((1 ∓ λ)/(1 + s_max))`.
///
/// Only [`ThetaFormula::OneMinusLambda`] reproduces `Z^{λ,t}` for `λ > 0`.
/// [`ThetaFormula::OnePlusLambda`] is kept so its failure can be measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaFormula {
    #[default]
    OneMinusLambda,
    OnePlusLambda,
}

impl ThetaFormula {
    pub const ALL: [ThetaFormula; 2] = [ThetaFormula::OneMinusLambda, ThetaFormula::OnePlusLambda];

    pub fn name(self) -> &'static str {
        match self {
            ThetaFormula::OneMinusLambda => "one-minus-lambda",
            ThetaFormula::OnePlusLambda => "one-plus-lambda",
        }
    }

    fn numerator<T: Real>(self, lambda: T) -> T {
        match self {
            ThetaFormula::OneMinusLambda => T::one() - lambda,
            ThetaFormula::OnePlusLambda => T::one() + lambda,
        }
    }

    fn condition(self) -> &'static str {
        match self {
            ThetaFormula::OneMinusLambda => "arcsin argument (1-lambda)/(1+s_max) exceeds 1",
            ThetaFormula::OnePlusLambda => "arcsin argument (1+lambda)/(1+s_max) exceeds 1",
        }
    }
}

impl fmt::Display for ThetaFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThetaFormula {
    type Err = AdversaryError;
    fn from_str(s: &str) -> Result<Self, AdversaryError> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| AdversaryError::UnknownFormula(s.to_string()))
    }
}

/// Gate angle and biased-meter parameters at one `(λ, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversaryParams<T> {
    pub lambda: T,
    pub t: T,
    pub formula: ThetaFormula,
    pub theta: T,
    pub mu_tilde: T,
    pub t_tilde: T,
    /// Aligned threshold, clipped to `≤ 1`.
    pub s_max: T,
}

impl<T: Real> AdversaryParams<T> {
    /// Same parameters with `θ` replaced; for sensitivity checks.
    pub fn with_theta(&self, theta: T) -> Self {
        Self { theta, ..*self }
    }

    /// `sin²(θ/2)`.
    pub fn damping_rate(&self) -> T {
        let s = (self.theta * T::lit(0.5)).sin();
        s * s
    }
}

/// `θ`, `μ̃ = t(s+λ)/(2s+λ−1)` and `t̃ = t(1−s)/(2s+λ−1)` with `s = s_max`.
pub fn adversary_params<T: Real>(lambda: T, t: T, formula: ThetaFormula) -> Result<AdversaryParams<T>, AdversaryError> {
    check_range("lambda", lambda, 0.0, 1.0, "[0, 1]")?;
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    let one = T::one();
    let region = |condition, value: T| AdversaryError::ParameterRegion {
        lambda: lambda.to_f64_lossy(),
        t: t.to_f64_lossy(),
        condition,
        value: value.to_f64_lossy(),
    };
    let s = s_max_aligned(lambda, t)?.min(one);

    let arg = formula.numerator(lambda) / (one + s);
    if arg > one + T::lit(DOMAIN_SLACK) {
        return Err(region(formula.condition(), arg));
    }
    let theta = T::lit(2.0) * arg.min(one).max(T::zero()).sqrt().asin();

    let den = T::lit(2.0) * s + lambda - one;
    if den.abs() <= T::lit(DENOMINATOR_FLOOR) {
        return Err(region("denominator 2*s_max+lambda-1 vanishes", den));
    }
    let mu_tilde = t * (s + lambda) / den;
    let t_tilde = t * (one - s) / den;

    let slack = T::lit(DOMAIN_SLACK);
    let tt = t_tilde.abs();
    if tt > one + slack {
        return Err(region("|t_tilde| exceeds 1", t_tilde));
    }
    for v in [one + mu_tilde, one - mu_tilde] {
        if v < tt - slack || v > T::lit(2.0) - tt + slack {
            return Err(region("biased meter bound |t_tilde| <= 1 +- mu_tilde <= 2 - |t_tilde| violated", mu_tilde));
        }
    }
    Ok(AdversaryParams { lambda, t, formula, theta, mu_tilde, t_tilde, s_max: s })
}

/// Two-qubit gates of the device.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateSet<T: Real> {
    /// Rotation `[[c, −s], [s, c]]`, `c = cos(θ/2)`, on the ancilla when the system is `|1⟩`.
    pub cry: DenseMatrix<T>,
    /// `σ_x` on the system controlled by the ancilla.
    pub cx10: DenseMatrix<T>,
    /// `σ_x ⊗ 1`.
    pub x_system: DenseMatrix<T>,
}

impl<T: Real> GateSet<T> {
    pub fn new(theta: T) -> Self {
        let half = theta * T::lit(0.5);
        let (c, s) = (half.cos(), half.sin());
        let mut cry = DenseMatrix::identity(4);
        cry[(2, 2)] = re(c);
        cry[(2, 3)] = re(-s);
        cry[(3, 2)] = re(s);
        cry[(3, 3)] = re(c);
        let cx10 = DenseMatrix::from_real(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
        ]);
        let [one, x, _, _] = pauli_matrices::<T>();
        let x_system = crate::linalg::kron(&x, &one);
        Self { cry, cx10, x_system }
    }

    /// `U_+ = CX₁₀ (σ_x ⊗ 1) CR_Y(θ) (σ_x ⊗ 1)`, `U_− = CX₁₀ CR_Y(θ)`.
    pub fn unitary(&self, y: usize) -> DenseMatrix<T> {
        match y {
            0 => self.cx10.matmul(&self.x_system).matmul(&self.cry).matmul(&self.x_system),
            _ => self.cx10.matmul(&self.cry),
        }
    }

    /// Max `‖G†G − 1‖_F` over the gates and `U_±`.
    pub fn unitarity_defect(&self) -> T {
        let id = DenseMatrix::identity(4);
        [self.cry.clone(), self.cx10.clone(), self.x_system.clone(), self.unitary(0), self.unitary(1)]
            .iter()
            .map(|g| g.adjoint().matmul(g).distance(&id))
            .fold(T::zero(), T::max)
    }
}

/// `Z̃^{(+)}(±) = ½[(1 ± μ̃)1 ± t̃σ_z]` and `Z̃^{(−)}(±) = Z̃^{(+)}(∓)`.
pub fn biased_meter<T: Real>(p: &AdversaryParams<T>, y: usize) -> Result<Meter<T>, AdversaryError> {
    let [one, _, _, z] = pauli_matrices::<T>();
    let half = T::lit(0.5);
    let plus = (one.scale_re(T::one() + p.mu_tilde) + z.scale_re(p.t_tilde)).scale_re(half);
    let minus = (one.scale_re(T::one() - p.mu_tilde) - z.scale_re(p.t_tilde)).scale_re(half);
    Ok(match y {
        0 => Meter::dichotomic(plus, minus)?,
        _ => Meter::dichotomic(minus, plus)?,
    })
}

/// `R^{(y)}_x`, indexed `[y][x]` with index 0 for `+`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostOps<T: Real> {
    ops: [[Operation<T>; 2]; 2],
}

impl<T: Real> PostOps<T> {
    pub fn get(&self, y: usize, x: usize) -> &Operation<T> {
        &self.ops[y][x]
    }

    /// `Φ^{(y)} = R^{(y)}_+ + R^{(y)}_−`.
    pub fn channel(&self, y: usize) -> Operation<T> {
        Operation::sum(&[&self.ops[y][0], &self.ops[y][1]]).expect("equal shapes")
    }
}

/// Kraus operators `(1 ⊗ ⟨k|)(1 ⊗ √Z̃^{(y)}(x)) U_y (1 ⊗ |0⟩)`, `k ∈ {0, 1}`.
pub fn build_post_ops<T: Real>(p: &AdversaryParams<T>) -> Result<PostOps<T>, AdversaryError> {
    let gates = GateSet::new(p.theta);
    let tol = Tolerance::default();
    let id = DenseMatrix::<T>::identity(2);
    let op = |y: usize, x: usize| -> Result<Operation<T>, AdversaryError> {
        let meter = biased_meter(p, y)?;
        let root = psd_sqrt(meter.effect(x), &tol)?;
        let u = gates.unitary(y);
        // Columns of U with the ancilla input fixed to |0⟩.
        let embedded = DenseMatrix::from_fn(4, 2, |r, c| u[(r, 2 * c)]);
        let read = crate::linalg::kron(&id, &root).matmul(&embedded);
        let kraus = (0..2).map(|k| DenseMatrix::from_fn(2, 2, |r, c| read[(2 * r + k, c)])).collect();
        Ok(Operation::new(kraus)?)
    };
    Ok(PostOps { ops: [[op(0, 0)?, op(0, 1)?], [op(1, 0)?, op(1, 1)?]] })
}

/// Lüders stage, post-processing and the joint instrument
/// `G_{(x,y)} = R^{(y)}_x ∘ L_y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionBundle<T: Real> {
    pub params: AdversaryParams<T>,
    pub luders_stage: Instrument<T>,
    pub post_ops: PostOps<T>,
    /// Outcomes `"x,y"` in the order `(+,+), (+,−), (−,+), (−,−)`.
    pub joint: Instrument<T>,
}

impl<T: Real> DecompositionBundle<T> {
    pub fn new(params: &AdversaryParams<T>) -> Result<Self, AdversaryError> {
        let luders_stage = luders(&noisy_meter(params.s_max, &BlochVector::z_axis())?);
        let post_ops = build_post_ops(params)?;
        let labels = ["+", "-"];
        let mut outcomes = Vec::with_capacity(4);
        let mut operations = Vec::with_capacity(4);
        for x in 0..2 {
            for y in 0..2 {
                outcomes.push(format!("{},{}", labels[x], labels[y]));
                operations.push(post_ops.get(y, x).compose(luders_stage.operation(y))?);
            }
        }
        let joint = Instrument::new(outcomes, operations)?;
        Ok(Self { params: *params, luders_stage, post_ops, joint })
    }

    /// `G_{(x,y)}`.
    pub fn joint_operation(&self, x: usize, y: usize) -> &Operation<T> {
        self.joint.operation(2 * x + y)
    }
}

/// Channel `Φ` matched against `ρ ↦ K₀ρK₀† + K₁ρK₁†` with
/// `K₀ = |g⟩⟨g| + √(1−γ)|e⟩⟨e|`, `K₁ = √γ|g⟩⟨e|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum DampingFit<T: Real> {
    Identified {
        gamma: T,
        /// Ground state `|g⟩⟨g|`: `P_+ = |0⟩⟨0|` or `P_− = |1⟩⟨1|`.
        fixed_point: DenseMatrix<T>,
        /// `+` if `|g⟩ = |0⟩`, `-` otherwise.
        ground: &'static str,
        choi_distance: T,
    },
    Mismatch {
        best_choi_distance: T,
    },
}

impl<T: Real> DampingFit<T> {
    pub fn gamma(&self) -> Option<T> {
        match self {
            DampingFit::Identified { gamma, .. } => Some(*gamma),
            DampingFit::Mismatch { .. } => None,
        }
    }

    pub fn ground(&self) -> Option<&'static str> {
        match self {
            DampingFit::Identified { ground, .. } => Some(ground),
            DampingFit::Mismatch { .. } => None,
        }
    }
}

/// Amplitude damping toward `|g⟩`, `g ∈ {0, 1}`.
pub fn amplitude_damping<T: Real>(gamma: T, ground: usize) -> Result<Operation<T>, AdversaryError> {
    check_range("gamma", gamma, 0.0, 1.0, "[0, 1]")?;
    let e = 1 - ground;
    let mut k0 = DenseMatrix::zeros(2, 2);
    k0[(ground, ground)] = re(T::one());
    k0[(e, e)] = re((T::one() - gamma).sqrt());
    let mut k1 = DenseMatrix::zeros(2, 2);
    k1[(ground, e)] = re(gamma.sqrt());
    Ok(Operation::new(vec![k0, k1])?)
}

/// Best amplitude-damping fit over both ground states; ties prefer `|0⟩`.
/// The rate is read off as `γ = ⟨g|Φ(|e⟩⟨e|)|g⟩`.
pub fn identify_amplitude_damping<T: Real>(ch: &Operation<T>) -> Result<DampingFit<T>, AdversaryError> {
    if ch.input_dim() != 2 || ch.output_dim() != 2 {
        return Err(ObjectError::Shape("amplitude damping needs a qubit channel".into()).into());
    }
    let mut best: Option<(T, T, usize)> = None;
    for ground in 0..2 {
        let e = 1 - ground;
        let decayed = ch.apply(&DenseMatrix::unit(2, e, e))?;
        let gamma = decayed[(ground, ground)].re.max(T::zero()).min(T::one());
        let d = ch.choi_distance(&amplitude_damping(gamma, ground)?);
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, gamma, ground));
        }
    }
    let (d, gamma, ground) = best.expect("two candidates");
    if d > T::lit(DAMPING_FIT_TOL).max(T::epsilon() * T::lit(1e3)) {
        return Ok(DampingFit::Mismatch { best_choi_distance: d });
    }
    Ok(DampingFit::Identified {
        gamma,
        fixed_point: DenseMatrix::unit(2, ground, ground),
        ground: if ground == 0 { "+" } else { "-" },
        choi_distance: d,
    })
}

/// Checks of one decomposition against `Z^{λ,t}` and `Z^{s_max}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport<T: Real> {
    pub params: AdversaryParams<T>,
    /// `‖C(Z_x) − C(Σ_y R^{(y)}_x ∘ L_y)‖_F` for `x = +, −`.
    pub choi_distance: [T; 2],
    /// Max over `x` of the Choi distance between `Σ_y G_{(x,y)}` and `Z_x`.
    pub observer_marginal_error: T,
    /// Max over `y` of `‖Σ_x G_{(x,y)}*(1) − Z^{s_max}(y)‖_F`.
    pub adversary_marginal_error: T,
    /// Max over `y` of `‖Φ^{(y)}*(1) − 1‖_F`.
    pub trace_defect: T,
    pub unitarity_defect: T,
    /// Fits of `Φ^{(+)}` and `Φ^{(−)}`.
    pub damping: [DampingFit<T>; 2],
    /// Max `|γ − sin²(θ/2)|`; infinite on a mismatch.
    pub gamma_error: T,
    /// Fixed points are `P_−` for `Φ^{(+)}` and `P_+` for `Φ^{(−)}`.
    pub fixed_points_ok: bool,
    pub max_violation: T,
    pub passed: bool,
}

/// Verifies the bundle for `params`; `tol` bounds every deviation.
pub fn verify_params<T: Real>(params: &AdversaryParams<T>, tol: T) -> Result<DecompositionReport<T>, AdversaryError> {
    let target = mixed_instrument(params.lambda, params.t, &BlochVector::z_axis())?;
    let bundle = DecompositionBundle::new(params)?;
    let zero = T::zero();

    let mut choi_distance = [zero; 2];
    let mut observer_marginal_error = zero;
    for (x, slot) in choi_distance.iter_mut().enumerate() {
        let composed: Vec<Operation<T>> = (0..2)
            .map(|y| bundle.post_ops.get(y, x).compose(bundle.luders_stage.operation(y)))
            .collect::<Result<_, _>>()?;
        let sum = Operation::sum(&[&composed[0], &composed[1]])?;
        *slot = sum.choi_distance(target.operation(x));
        let marginal = Operation::sum(&[bundle.joint_operation(x, 0), bundle.joint_operation(x, 1)])?;
        observer_marginal_error = observer_marginal_error.max(marginal.choi_distance(target.operation(x)));
    }

    let adversary = noisy_meter(params.s_max, &BlochVector::z_axis())?;
    let mut adversary_marginal_error = zero;
    let mut trace_defect = zero;
    for y in 0..2 {
        let effect = bundle.joint_operation(0, y).heisenberg_identity() + bundle.joint_operation(1, y).heisenberg_identity();
        adversary_marginal_error = adversary_marginal_error.max(effect.distance(adversary.effect(y)));
        trace_defect = trace_defect.max(bundle.post_ops.channel(y).heisenberg_identity().distance(&DenseMatrix::identity(2)));
    }
    let unitarity_defect = GateSet::new(params.theta).unitarity_defect();

    let damping = [
        identify_amplitude_damping(&bundle.post_ops.channel(0))?,
        identify_amplitude_damping(&bundle.post_ops.channel(1))?,
    ];
    let rate = params.damping_rate();
    let gamma_error = damping
        .iter()
        .map(|f| f.gamma().map_or(T::infinity(), |g| (g - rate).abs()))
        .fold(zero, T::max);
    // γ = 0 is the identity channel: both ground states fit and |0⟩ wins the tie.
    let fixed_points_ok = match (damping[0].ground(), damping[1].ground()) {
        (Some(a), Some(b)) => (a == "-" || rate <= tol) && b == "+",
        _ => false,
    };

    let max_violation = [
        choi_distance[0],
        choi_distance[1],
        observer_marginal_error,
        adversary_marginal_error,
        trace_defect,
        unitarity_defect,
        gamma_error,
    ]
    .into_iter()
    .fold(zero, |a, b| if b.is_nan() { T::infinity() } else { a.max(b) });
    Ok(DecompositionReport {
        params: *params,
        choi_distance,
        observer_marginal_error,
        adversary_marginal_error,
        trace_defect,
        unitarity_defect,
        damping,
        gamma_error,
        fixed_points_ok,
        max_violation,
        passed: fixed_points_ok && max_violation <= tol,
    })
}

/// [`adversary_params`] followed by [`verify_params`].
pub fn verify_decomposition<T: Real>(
    lambda: T,
    t: T,
    formula: ThetaFormula,
    tol: T,
) -> Result<DecompositionReport<T>, AdversaryError> {
    verify_params(&adversary_params(lambda, t, formula)?, tol)
}
