use serde::{Deserialize, Serialize};

use super::{check_range, pauli_matrices, ObjectError};
use crate::linalg::{is_psd, kron, min_eigenvalue, DenseMatrix, Tolerance};
use crate::scalar::{re, Real};

/// Completely positive, trace non-increasing map in Kraus form.
///
/// Kraus operators may be rectangular (output × input), e.g. for operations
/// into an ancilla.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperationRepr<T>", bound(deserialize = "T: Real"))]
pub struct Operation<T: Real> {
    kraus: Vec<DenseMatrix<T>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct OperationRepr<T: Real> {
    kraus: Vec<DenseMatrix<T>>,
}

impl<T: Real> TryFrom<OperationRepr<T>> for Operation<T> {
    type Error = ObjectError;
    fn try_from(r: OperationRepr<T>) -> Result<Self, ObjectError> {
        Operation::new(r.kraus)
    }
}

impl<T: Real> Operation<T> {
    /// Validates shapes and `Σ K†K ≤ 1`.
    pub fn new(kraus: Vec<DenseMatrix<T>>) -> Result<Self, ObjectError> {
        let op = Self::new_unchecked(kraus)?;
        let excess = min_eigenvalue(
            &(DenseMatrix::identity(op.input_dim()) - op.heisenberg_identity()),
            &Tolerance::default(),
        )?;
        if excess < -T::lit(T::DEFAULT_TOL) {
            return Err(ObjectError::TraceIncreasing { excess: (-excess).to_f64_lossy() });
        }
        Ok(op)
    }

    /// Shape checks only; used for intermediate maps that are known to be CP
    /// by construction.
    pub(crate) fn new_unchecked(kraus: Vec<DenseMatrix<T>>) -> Result<Self, ObjectError> {
        let first = kraus.first().ok_or_else(|| ObjectError::Shape("no Kraus operators".into()))?;
        let (r, c) = (first.rows(), first.cols());
        if kraus.iter().any(|k| k.rows() != r || k.cols() != c) {
            return Err(ObjectError::Shape("Kraus operators of different shapes".into()));
        }
        Ok(Self { kraus })
    }

    pub fn identity(dim: usize) -> Self {
        Self { kraus: vec![DenseMatrix::identity(dim)] }
    }

    pub fn kraus(&self) -> &[DenseMatrix<T>] {
        &self.kraus
    }

    pub fn input_dim(&self) -> usize {
        self.kraus[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus[0].rows()
    }

    /// Schrödinger picture: `Σ K ρ K†`.
    pub fn apply(&self, rho: &DenseMatrix<T>) -> Result<DenseMatrix<T>, ObjectError> {
        if rho.rows() != self.input_dim() || rho.cols() != self.input_dim() {
            return Err(ObjectError::Shape(format!(
                "{}x{} input for an operation on dimension {}",
                rho.rows(),
                rho.cols(),
                self.input_dim()
            )));
        }
        let d = self.output_dim();
        Ok(self.kraus.iter().fold(DenseMatrix::zeros(d, d), |acc, k| acc + k.sandwich(rho)))
    }

    /// Heisenberg picture: `Σ K† e K`.
    pub fn heisenberg(&self, e: &DenseMatrix<T>) -> Result<DenseMatrix<T>, ObjectError> {
        if e.rows() != self.output_dim() || e.cols() != self.output_dim() {
            return Err(ObjectError::Shape("Heisenberg input does not match output dimension".into()));
        }
        let d = self.input_dim();
        Ok(self
            .kraus
            .iter()
            .fold(DenseMatrix::zeros(d, d), |acc, k| acc + k.adjoint().matmul(e).matmul(k)))
    }

    /// `Σ K†K`.
    pub fn heisenberg_identity(&self) -> DenseMatrix<T> {
        let d = self.input_dim();
        self.kraus.iter().fold(DenseMatrix::zeros(d, d), |acc, k| acc + k.adjoint().matmul(k))
    }

    /// `Σ_{ij} |i⟩⟨j| ⊗ op(|i⟩⟨j|)`.
    pub fn choi(&self) -> DenseMatrix<T> {
        let d = self.input_dim();
        let mut c = DenseMatrix::zeros(d * self.output_dim(), d * self.output_dim());
        for i in 0..d {
            for j in 0..d {
                let unit = DenseMatrix::unit(d, i, j);
                let img = self.apply(&unit).expect("unit matrix matches input dimension");
                c = c + kron(&unit, &img);
            }
        }
        c
    }

    pub fn is_trace_preserving(&self, tol: T) -> bool {
        self.heisenberg_identity().distance(&DenseMatrix::identity(self.input_dim())) <= tol
    }

    /// Choi matrix is PSD (always true in Kraus form; kept as a consistency check).
    pub fn is_completely_positive(&self, tol: &Tolerance<T>) -> bool {
        is_psd(&self.choi(), tol).unwrap_or(false)
    }

    /// `self ∘ first` (apply `first`, then `self`).
    pub fn compose(&self, first: &Self) -> Result<Self, ObjectError> {
        if self.input_dim() != first.output_dim() {
            return Err(ObjectError::Shape("composition dimension mismatch".into()));
        }
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| first.kraus.iter().map(move |b| a.matmul(b)))
            .collect();
        Self::new_unchecked(kraus)
    }

    /// Kraus concatenation: the map `self + other`.
    pub fn sum(ops: &[&Self]) -> Result<Self, ObjectError> {
        Self::new_unchecked(ops.iter().flat_map(|o| o.kraus.iter().cloned()).collect())
    }

    pub fn scaled(&self, p: T) -> Self {
        let s = re(p.sqrt());
        Self { kraus: self.kraus.iter().map(|k| k.scale(s)).collect() }
    }

    /// Frobenius distance between Choi matrices.
    pub fn choi_distance(&self, other: &Self) -> T {
        self.choi().distance(&other.choi())
    }
}

/// Qubit depolarizing channel `D_t(X) = tX + (1 − t) tr[X] 1/2`, `t ∈ [0, 1]`.
pub fn depolarizing<T: Real>(t: T) -> Result<Operation<T>, ObjectError> {
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    let [one, x, y, z] = pauli_matrices::<T>();
    let quarter = T::lit(0.25);
    let keep = ((T::one() + T::lit(3.0) * t) * quarter).sqrt();
    let flip = ((T::one() - t) * quarter).sqrt();
    Operation::new(vec![one.scale_re(keep), x.scale_re(flip), y.scale_re(flip), z.scale_re(flip)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{bloch_state, noisy_meter, BlochVector};
    use proptest::prelude::*;

    fn state(x: f64, y: f64, z: f64) -> DenseMatrix<f64> {
        bloch_state(&BlochVector::new(x, y, z).unwrap())
    }

    #[test]
    fn depolarizing_endpoints() {
        let rho = state(0.3, -0.4, 0.5);
        let id = depolarizing(1.0).unwrap();
        assert!(id.apply(&rho).unwrap().distance(&rho) < 1e-15);
        let full = depolarizing(0.0).unwrap();
        assert!(full.apply(&rho).unwrap().distance(&DenseMatrix::identity(2).scale_re(0.5)) < 1e-15);
        assert_eq!(depolarizing(0.3).unwrap().kraus().len(), 4);
        assert!(depolarizing(0.3).unwrap().is_trace_preserving(1e-12));
    }

    #[test]
    fn depolarizing_rejects_negative_parameter() {
        assert!(depolarizing(-0.2f64).is_err());
        assert!(depolarizing(1.01f64).is_err());
    }

    #[test]
    fn adjoint_depolarizing_adds_meter_noise() {
        let z = BlochVector::z_axis();
        for &t in &[0.0, 0.25, 0.5, 0.9] {
            let sharp = noisy_meter(1.0, &z).unwrap();
            let mixed = depolarizing(t).unwrap().heisenberg(sharp.effect(0)).unwrap();
            assert!(mixed.distance(noisy_meter(t, &z).unwrap().effect(0)) < 1e-12);
        }
    }

    #[test]
    fn identity_choi_is_twice_bell_projector() {
        let c = Operation::<f64>::identity(2).choi();
        let expected = DenseMatrix::from_real(&[
            &[1.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 1.0],
        ]);
        assert_eq!(c, expected);
        assert_eq!(c.trace().re, 2.0);
    }

    #[test]
    fn rejects_trace_increasing_kraus() {
        let k = DenseMatrix::<f64>::identity(2).scale_re(1.1);
        assert!(matches!(Operation::new(vec![k]), Err(ObjectError::TraceIncreasing { .. })));
    }

    #[test]
    fn apply_checks_shape() {
        assert!(Operation::<f64>::identity(2).apply(&DenseMatrix::identity(3)).is_err());
    }

    proptest! {
        #[test]
        fn semigroup(t in 0.0f64..=1.0, tp in 0.0f64..=1.0) {
            let composed = depolarizing(tp).unwrap().compose(&depolarizing(t).unwrap()).unwrap();
            prop_assert!(composed.choi_distance(&depolarizing(t * tp).unwrap()) < 1e-10);
        }

        #[test]
        fn heisenberg_is_trace_dual(
            t in 0.0f64..=1.0,
            r in proptest::collection::vec(-0.57f64..0.57, 3),
            e in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let op = depolarizing(t).unwrap().compose(&crate::objects::luders(&noisy_meter(0.7, &BlochVector::x_axis()).unwrap()).operations()[0]).unwrap();
            let rho = state(r[0], r[1], r[2]);
            let eff = DenseMatrix::from_real(&[&[e[0], e[1]], &[e[1], e[2]]]).hermitian_part() + DenseMatrix::from_fn(2, 2, |i, j| if i != j { num_complex::Complex::new(0.0, if i < j { e[3] } else { -e[3] }) } else { num_complex::Complex::new(0.0, 0.0) });
            let lhs = eff.trace_product(&op.apply(&rho).unwrap());
            let rhs = op.heisenberg(&eff).unwrap().trace_product(&rho);
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
