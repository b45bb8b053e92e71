use serde::{Deserialize, Serialize};

use super::{check_range, check_state, noisy_meter, BlochVector, Meter, ObjectError, Operation};
use crate::linalg::{hermitian_spectrum, psd_sqrt, DenseMatrix, Tolerance};
use crate::scalar::{re, Real};

/// Outcome labels of every dichotomic device, `+` first.
pub const DICHOTOMIC_LABELS: [&str; 2] = ["+", "-"];

/// Outcome-labelled family of operations summing to a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstrumentRepr<T>", bound(deserialize = "T: Real"))]
pub struct Instrument<T: Real> {
    outcomes: Vec<String>,
    operations: Vec<Operation<T>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct InstrumentRepr<T: Real> {
    outcomes: Vec<String>,
    operations: Vec<Operation<T>>,
}

impl<T: Real> TryFrom<InstrumentRepr<T>> for Instrument<T> {
    type Error = ObjectError;
    fn try_from(r: InstrumentRepr<T>) -> Result<Self, ObjectError> {
        Instrument::new(r.outcomes, r.operations)
    }
}

impl<T: Real> Instrument<T> {
    pub fn new(outcomes: Vec<String>, operations: Vec<Operation<T>>) -> Result<Self, ObjectError> {
        if outcomes.len() != operations.len() || operations.is_empty() {
            return Err(ObjectError::Shape("outcome labels and operations differ in number".into()));
        }
        let (din, dout) = (operations[0].input_dim(), operations[0].output_dim());
        if operations.iter().any(|o| o.input_dim() != din || o.output_dim() != dout) {
            return Err(ObjectError::Shape("operations of different dimensions".into()));
        }
        let inst = Self { outcomes, operations };
        let deviation = inst.total_heisenberg_identity().distance(&DenseMatrix::identity(din));
        if deviation > T::lit(T::DEFAULT_TOL) {
            return Err(ObjectError::NotNormalized { deviation: deviation.to_f64_lossy() });
        }
        Ok(inst)
    }

    pub fn dichotomic(plus: Operation<T>, minus: Operation<T>) -> Result<Self, ObjectError> {
        Self::new(DICHOTOMIC_LABELS.iter().map(|s| s.to_string()).collect(), vec![plus, minus])
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn operations(&self) -> &[Operation<T>] {
        &self.operations
    }

    pub fn operation(&self, k: usize) -> &Operation<T> {
        &self.operations[k]
    }

    pub fn len(&self) -> usize {
        self.operations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.operations[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.operations[0].output_dim()
    }

    fn total_heisenberg_identity(&self) -> DenseMatrix<T> {
        let d = self.input_dim();
        self.operations.iter().fold(DenseMatrix::zeros(d, d), |acc, o| acc + o.heisenberg_identity())
    }

    /// `A(x) = I_x*(1)`.
    pub fn induced_meter(&self) -> Result<Meter<T>, ObjectError> {
        Meter::new(self.outcomes.clone(), self.operations.iter().map(Operation::heisenberg_identity).collect())
    }

    /// `Φ = Σ_x I_x`.
    pub fn induced_channel(&self) -> Operation<T> {
        let refs: Vec<&Operation<T>> = self.operations.iter().collect();
        Operation::sum(&refs).expect("operations share a shape")
    }

    /// Max Choi distance between corresponding operations.
    pub fn choi_distance(&self, other: &Self) -> T {
        self.operations
            .iter()
            .zip(&other.operations)
            .map(|(a, b)| a.choi_distance(b))
            .fold(T::zero(), T::max)
    }
}

/// Lüders instrument `ρ ↦ √A(x) ρ √A(x)`.
pub fn luders<T: Real>(m: &Meter<T>) -> Instrument<T> {
    let tol = Tolerance::default();
    let ops = m
        .effects()
        .iter()
        .map(|e| {
            let root = psd_sqrt(e.matrix(), &tol).expect("validated effect is PSD");
            Operation::new_unchecked(vec![root]).expect("one Kraus operator")
        })
        .collect();
    Instrument { outcomes: m.outcomes().to_vec(), operations: ops }
}

/// Measure-and-prepare instrument `ρ ↦ tr[A(x) ρ] ξ_x`.
///
/// Kraus operators `√(p_i a_j) |e_i⟩⟨a_j|` over the eigen-decompositions of
/// `ξ_x` and `A(x)`; zero-weight terms are dropped.
pub fn measure_and_prepare<T: Real>(
    m: &Meter<T>,
    xi: &[DenseMatrix<T>],
) -> Result<Instrument<T>, ObjectError> {
    if xi.len() != m.len() {
        return Err(ObjectError::Shape(format!("{} states for a {}-outcome meter", xi.len(), m.len())));
    }
    let tol = Tolerance::default();
    let cutoff = T::lit(T::DEFAULT_TOL);
    let mut ops = Vec::with_capacity(m.len());
    for (e, state) in m.effects().iter().zip(xi) {
        check_state(state)?;
        let es = hermitian_spectrum(e.matrix(), &tol)?;
        let ss = hermitian_spectrum(state, &tol)?;
        let ev = es.eigenvectors.as_ref().expect("eigenvectors");
        let sv = ss.eigenvectors.as_ref().expect("eigenvectors");
        let mut kraus = Vec::new();
        for (i, &p) in ss.eigenvalues.iter().enumerate() {
            for (j, &a) in es.eigenvalues.iter().enumerate() {
                let w = p * a;
                if w > cutoff {
                    kraus.push(DenseMatrix::outer(&sv.column(i), &ev.column(j)).scale_re(w.sqrt()));
                }
            }
        }
        if kraus.is_empty() {
            kraus.push(DenseMatrix::zeros(state.rows(), e.dim()));
        }
        ops.push(Operation::new_unchecked(kraus)?);
    }
    Instrument::new(m.outcomes().to_vec(), ops)
}

/// Noisy Lüders family
/// `I_±(ρ) = λ √A(±) ρ √A(±) + (1 − λ) tr[A(±) ρ] 1/2` with `A = A^{t,m}`.
///
/// Each outcome carries the fixed five-operator Kraus list
/// `{√λ √A} ∪ {√((1−λ)/2) |i⟩⟨j| √A : i, j ∈ {0, 1}}` (zero operators kept),
/// so canonical dilations always have a ten-dimensional ancilla.
pub fn mixed_instrument<T: Real>(lambda: T, t: T, m: &BlochVector<T>) -> Result<Instrument<T>, ObjectError> {
    check_range("lambda", lambda, 0.0, 1.0, "[0, 1]")?;
    let meter = noisy_meter(t, m)?;
    let tol = Tolerance::default();
    let coherent = re(lambda.sqrt());
    let incoherent = re(((T::one() - lambda) / T::lit(2.0)).sqrt());
    let ops = meter
        .effects()
        .iter()
        .map(|e| {
            let root = psd_sqrt(e.matrix(), &tol).expect("validated effect is PSD");
            let mut kraus = vec![root.scale(coherent)];
            for i in 0..2 {
                for j in 0..2 {
                    kraus.push(DenseMatrix::unit(2, i, j).matmul(&root).scale(incoherent));
                }
            }
            Operation::new_unchecked(kraus).expect("uniform shapes")
        })
        .collect();
    Ok(Instrument { outcomes: meter.outcomes().to_vec(), operations: ops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, partial_transpose_second};
    use crate::objects::{bloch_state, depolarizing, pauli_matrices};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn z() -> BlochVector<f64> {
        BlochVector::z_axis()
    }

    fn ket0() -> DenseMatrix<f64> {
        DenseMatrix::diag(&[1.0, 0.0])
    }

    fn half_identity() -> DenseMatrix<f64> {
        DenseMatrix::identity(2).scale_re(0.5)
    }

    fn random_unit(theta: f64, phi: f64) -> BlochVector<f64> {
        BlochVector::unit(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()).unwrap()
    }

    #[test]
    fn sharp_luders_keeps_eigenstate() {
        let inst = luders(&noisy_meter(1.0, &z()).unwrap());
        let out = inst.operation(0).apply(&ket0()).unwrap();
        assert!(out.distance(&ket0()) < 1e-15);
        assert!(inst.operation(1).apply(&ket0()).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn unsharp_luders_on_maximally_mixed_state() {
        // By hand: √A ρ √A with ρ = 1/2 gives A/2; A(+) = diag(3/4, 1/4).
        let inst = luders(&noisy_meter(0.5, &z()).unwrap());
        let out = inst.operation(0).apply(&half_identity()).unwrap();
        assert!((out.trace().re - 0.5).abs() < 1e-15);
        assert!(out.scale_re(2.0).distance(&DenseMatrix::diag(&[0.75, 0.25])) < 1e-15);
        let out_m = inst.operation(1).apply(&half_identity()).unwrap();
        assert!((out_m.trace().re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn measure_and_prepare_examples() {
        let m = noisy_meter(0.6, &BlochVector::x_axis()).unwrap();
        let inst = measure_and_prepare(&m, &[half_identity(), half_identity()]).unwrap();
        let rho = bloch_state(&BlochVector::new(0.6, 0.0, 0.0).unwrap());
        let out = inst.induced_channel().apply(&rho).unwrap();
        assert!(out.distance(&half_identity()) < 1e-14);
        assert!(inst.induced_meter().unwrap().distance(&m) < 1e-12);
        assert!(inst.operations().iter().all(|o| o.kraus().len() <= 4));

        let sharp = noisy_meter(1.0, &z()).unwrap();
        let mp = measure_and_prepare(&sharp, &[ket0(), DenseMatrix::diag(&[0.0, 1.0])]).unwrap();
        let lu = luders(&sharp);
        let diag_state = DenseMatrix::diag(&[0.3, 0.7]);
        let a = mp.induced_channel().apply(&diag_state).unwrap();
        let b = lu.induced_channel().apply(&diag_state).unwrap();
        assert!(a.distance(&b) < 1e-14);
    }

    #[test]
    fn measure_and_prepare_is_entanglement_breaking() {
        let m = noisy_meter(0.8, &random_unit(0.4, 1.1)).unwrap();
        let xi = [bloch_state(&BlochVector::new(0.2, 0.1, 0.9).unwrap()), half_identity()];
        let choi = measure_and_prepare(&m, &xi).unwrap().induced_channel().choi();
        let pt = partial_transpose_second(&choi, (2, 2)).unwrap();
        assert!(is_psd(&pt, &Tolerance::default()).unwrap());
        // The identity channel is not: its partial transpose has eigenvalue −1.
        let pt_id = partial_transpose_second(&Operation::<f64>::identity(2).choi(), (2, 2)).unwrap();
        assert!(!is_psd(&pt_id, &Tolerance::default()).unwrap());
    }

    #[test]
    fn measure_and_prepare_rejects_invalid_state() {
        let m = noisy_meter(1.0, &z()).unwrap();
        let bad = DenseMatrix::diag(&[1.5, -0.5]);
        assert!(matches!(measure_and_prepare(&m, &[bad, ket0()]), Err(ObjectError::InvalidState(_))));
    }

    #[test]
    fn mixed_instrument_special_cases() {
        let sharp = mixed_instrument(1.0, 1.0, &z()).unwrap();
        let out = sharp.operation(0).apply(&ket0()).unwrap();
        assert!(out.distance(&ket0()) < 1e-15);

        let rho = bloch_state(&BlochVector::new(0.1, 0.5, -0.3).unwrap());
        let mp = mixed_instrument(0.0, 0.7, &random_unit(1.0, 2.0)).unwrap();
        assert!(mp.induced_channel().apply(&rho).unwrap().distance(&half_identity()) < 1e-14);

        let n = random_unit(0.3, 0.2);
        let l1 = mixed_instrument(1.0, 0.6, &n).unwrap();
        assert!(l1.induced_channel().choi_distance(&luders(&noisy_meter(0.6, &n).unwrap()).induced_channel()) < 1e-12);
        for k in 0..2 {
            assert!(l1.operation(k).choi_distance(luders(&noisy_meter(0.6, &n).unwrap()).operation(k)) < 1e-12);
            assert!(mp.operation(k).choi_distance(
                measure_and_prepare(&noisy_meter(0.7, &random_unit(1.0, 2.0)).unwrap(), &[half_identity(), half_identity()])
                    .unwrap()
                    .operation(k)
            ) < 1e-12);
        }
        assert!(mixed_instrument(1.2, 0.5, &n).is_err());
        assert!(mixed_instrument(0.5, -0.5, &n).is_err());
    }

    #[test]
    fn instrument_must_sum_to_channel() {
        let op = Operation::new(vec![DenseMatrix::<f64>::diag(&[1.0, 0.0])]).unwrap();
        assert!(matches!(Instrument::dichotomic(op.clone(), op), Err(ObjectError::NotNormalized { .. })));
    }

    #[test]
    fn choi_of_each_outcome_is_psd() {
        let inst = mixed_instrument(0.4, 0.3, &random_unit(2.0, 0.5)).unwrap();
        for op in inst.operations() {
            assert!(op.is_completely_positive(&Tolerance::default()));
            assert!(op.choi().trace().re <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn induced_meter_matches_probabilities_on_a_basis() {
        let inst = mixed_instrument(0.3, 0.8, &random_unit(0.7, 0.7)).unwrap();
        let meter = inst.induced_meter().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let unit = DenseMatrix::unit(2, i, j);
                for x in 0..2 {
                    let lhs = meter.effect(x).trace_product(&unit);
                    let rhs = inst.operation(x).apply(&unit).unwrap().trace();
                    assert!((lhs - rhs).norm() < 1e-14);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn luders_induces_its_meter(t in 0.0f64..=1.0, theta in 0.0f64..PI, phi in 0.0f64..TAU) {
            let m = noisy_meter(t, &random_unit(theta, phi)).unwrap();
            prop_assert!(luders(&m).induced_meter().unwrap().distance(&m) < 1e-12);
        }

        #[test]
        fn mixed_instrument_is_depolarized_luders(lambda in 0.0f64..=1.0, t in 0.0f64..=1.0, theta in 0.0f64..PI, phi in 0.0f64..TAU) {
            let n = random_unit(theta, phi);
            let inst = mixed_instrument(lambda, t, &n).unwrap();
            prop_assert!(inst.induced_meter().unwrap().distance(&noisy_meter(t, &n).unwrap()) < 1e-12);
            let lu = luders(&noisy_meter(t, &n).unwrap());
            let d = depolarizing(lambda).unwrap();
            for x in 0..2 {
                let composed = d.compose(lu.operation(x)).unwrap();
                prop_assert!(inst.operation(x).choi_distance(&composed) < 1e-10);
            }
            let [one, ..] = pauli_matrices::<f64>();
            prop_assert!(inst.induced_channel().heisenberg(&one).unwrap().distance(&one) < 1e-10);
        }
    }
}
