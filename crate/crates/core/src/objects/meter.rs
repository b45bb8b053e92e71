use serde::{Deserialize, Serialize};

use super::{check_range, pauli, BlochVector, ObjectError};
use crate::linalg::{is_psd, DenseMatrix, Tolerance};
use crate::scalar::{re, Real};

/// Positive operator below the identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Effect<T: Real> {
    matrix: DenseMatrix<T>,
}

impl<T: Real> Effect<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Result<Self, ObjectError> {
        let tol = Tolerance::default();
        let n = matrix.ensure_square()?;
        if !matrix.is_hermitian(&tol) {
            return Err(ObjectError::InvalidEffect("not Hermitian".into()));
        }
        if !is_psd(&matrix, &tol)? {
            return Err(ObjectError::InvalidEffect("not positive".into()));
        }
        if !is_psd(&(DenseMatrix::identity(n) - &matrix), &tol)? {
            return Err(ObjectError::InvalidEffect("exceeds the identity".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Outcome-labelled POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeterRepr<T>", bound(deserialize = "T: Real"))]
pub struct Meter<T: Real> {
    outcomes: Vec<String>,
    effects: Vec<Effect<T>>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct MeterRepr<T: Real> {
    outcomes: Vec<String>,
    effects: Vec<DenseMatrix<T>>,
}

impl<T: Real> TryFrom<MeterRepr<T>> for Meter<T> {
    type Error = ObjectError;
    fn try_from(r: MeterRepr<T>) -> Result<Self, ObjectError> {
        Meter::new(r.outcomes, r.effects)
    }
}

impl<T: Real> Meter<T> {
    pub fn new(outcomes: Vec<String>, effects: Vec<DenseMatrix<T>>) -> Result<Self, ObjectError> {
        if outcomes.len() != effects.len() || effects.is_empty() {
            return Err(ObjectError::Shape(format!(
                "{} labels for {} effects",
                outcomes.len(),
                effects.len()
            )));
        }
        let effects = effects.into_iter().map(Effect::new).collect::<Result<Vec<_>, _>>()?;
        let d = effects[0].dim();
        if effects.iter().any(|e| e.dim() != d) {
            return Err(ObjectError::Shape("effects of different dimension".into()));
        }
        let mut total = DenseMatrix::zeros(d, d);
        for e in &effects {
            total = total + e.matrix();
        }
        let deviation = total.distance(&DenseMatrix::identity(d));
        if deviation > T::lit(T::DEFAULT_TOL) {
            return Err(ObjectError::NotNormalized { deviation: deviation.to_f64_lossy() });
        }
        Ok(Self { outcomes, effects })
    }

    /// Dichotomic meter with labels `+`, `−`.
    pub fn dichotomic(plus: DenseMatrix<T>, minus: DenseMatrix<T>) -> Result<Self, ObjectError> {
        Self::new(super::DICHOTOMIC_LABELS.iter().map(|s| s.to_string()).collect(), vec![plus, minus])
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn effects(&self) -> &[Effect<T>] {
        &self.effects
    }

    pub fn effect(&self, k: usize) -> &DenseMatrix<T> {
        self.effects[k].matrix()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    /// Born-rule outcome probabilities.
    pub fn probabilities(&self, rho: &DenseMatrix<T>) -> Vec<T> {
        self.effects.iter().map(|e| e.matrix().trace_product(rho).re).collect()
    }

    /// Max entry-wise distance between corresponding effects.
    pub fn distance(&self, other: &Self) -> T {
        self.effects
            .iter()
            .zip(&other.effects)
            .map(|(a, b)| a.matrix().distance(b.matrix()))
            .fold(T::zero(), T::max)
    }
}

/// Column-stochastic matrix `ν_{y|x}`, stored as `entries[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix<T> {
    entries: Vec<Vec<T>>,
}

impl<T: Real> StochasticMatrix<T> {
    pub fn new(entries: Vec<Vec<T>>) -> Result<Self, ObjectError> {
        let cols = entries.first().map_or(0, Vec::len);
        if cols == 0 || entries.iter().any(|r| r.len() != cols) {
            return Err(ObjectError::Shape("ragged or empty stochastic matrix".into()));
        }
        let slack = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        for x in 0..cols {
            if let Some(bad) = entries.iter().map(|r| r[x]).find(|&v| v < -slack || v > T::one() + slack) {
                return Err(ObjectError::ParameterRange {
                    name: "nu",
                    value: bad.to_f64_lossy(),
                    range: "[0, 1]",
                });
            }
            let sum: T = entries.iter().map(|r| r[x]).sum();
            if (sum - T::one()).abs() > slack {
                return Err(ObjectError::NotStochastic { column: x, sum: sum.to_f64_lossy() });
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: (0..n)
                .map(|y| (0..n).map(|x| if x == y { T::one() } else { T::zero() }).collect())
                .collect(),
        }
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.entries[y][x]
    }

    pub fn inputs(&self) -> usize {
        self.entries[0].len()
    }

    pub fn outputs(&self) -> usize {
        self.entries.len()
    }

    /// `(self ∘ first)_{z|x} = Σ_y self_{z|y} first_{y|x}`.
    pub fn compose(&self, first: &Self) -> Result<Self, ObjectError> {
        if self.inputs() != first.outputs() {
            return Err(ObjectError::Shape("stochastic composition".into()));
        }
        let entries = (0..self.outputs())
            .map(|z| {
                (0..first.inputs())
                    .map(|x| (0..self.inputs()).map(|y| self.get(z, y) * first.get(y, x)).sum())
                    .collect()
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// `ν^t_{x|y} = t δ_{xy} + (1 − t)/2` on two outcomes.
pub fn noise_stochastic_matrix<T: Real>(t: T) -> Result<StochasticMatrix<T>, ObjectError> {
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    let off = (T::one() - t) / T::lit(2.0);
    StochasticMatrix::new(vec![vec![t + off, off], vec![off, t + off]])
}

/// Unbiased dichotomic meter `A^{t,n}(±) = ½(1 ± t σ_n)`.
pub fn noisy_meter<T: Real>(t: T, n: &BlochVector<T>) -> Result<Meter<T>, ObjectError> {
    check_range("t", t, 0.0, 1.0, "[0, 1]")?;
    let s = pauli(n)?;
    let one = DenseMatrix::identity(2);
    let half = re(T::lit(0.5));
    Meter::dichotomic(
        (&one + &s.scale_re(t)).scale(half),
        (&one - &s.scale_re(t)).scale(half),
    )
}

/// Classical post-processing `B(y) = Σ_x ν_{y|x} A(x)`.
pub fn postprocess<T: Real>(m: &Meter<T>, nu: &StochasticMatrix<T>) -> Result<Meter<T>, ObjectError> {
    if nu.inputs() != m.len() {
        return Err(ObjectError::Shape(format!(
            "stochastic matrix has {} inputs for a {}-outcome meter",
            nu.inputs(),
            m.len()
        )));
    }
    let d = m.dim();
    let effects = (0..nu.outputs())
        .map(|y| {
            (0..m.len()).fold(DenseMatrix::zeros(d, d), |acc, x| acc + m.effect(x).scale_re(nu.get(y, x)))
        })
        .collect();
    let labels = if nu.outputs() == m.len() {
        m.outcomes().to_vec()
    } else {
        (0..nu.outputs()).map(|y| y.to_string()).collect()
    };
    Meter::new(labels, effects)
}
