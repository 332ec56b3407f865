//! Finite-dimensional complex linear algebra: state vectors, density
//! operators, effects, projective measurements and observables.
//!
//! Everything here is double precision with explicit tolerances. Structural
//! checks (normalization, hermiticity, completeness, unitarity) use
//! [`STRUCTURAL_TOL`]; aggregated quantities such as outcome sums use
//! [`AGGREGATE_TOL`].
//!
//! Tensor products use row-major amplitude ordering: in `a ⊗ b` the index of
//! the first factor varies slowest, so `(a ⊗ b)[i * b.dim() + j] = a[i] * b[j]`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

pub const STRUCTURAL_TOL: f64 = 1e-12;
pub const AGGREGATE_TOL: f64 = 1e-9;

/// Eigenvalues closer than this are treated as one degenerate eigenvalue.
const EIGENVALUE_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a state needs at least one amplitude")]
    EmptyState,
    #[error("amplitude arrays differ in length (re: {re}, im: {im})")]
    RaggedAmplitudes { re: usize, im: usize },
    #[error("declared dimension {declared} does not match {actual} amplitudes")]
    DeclaredDimension { declared: usize, actual: usize },
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("density operator has trace {0}, expected 1")]
    BadTrace(f64),
    #[error("eigenvalue {0} is outside the allowed range")]
    EigenvalueOutOfRange(f64),
    #[error("effects do not sum to the identity (max deviation {0:e})")]
    Incomplete(f64),
    #[error("measurement has no effects")]
    EmptyMeasurement,
    #[error("duplicate outcome label {0:?}")]
    DuplicateLabel(String),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("eigenvectors are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("spectrum has {found} eigenvectors, a dimension-{dim} observable needs {dim}")]
    IncompleteSpectrum { dim: usize, found: usize },
    #[error("probability {0} lies outside [0, 1]; the effect is invalid")]
    InvalidProbability(f64),
    #[error("pointer space of dimension {pointer} cannot record {outcomes} outcomes")]
    PointerTooSmall { pointer: usize, outcomes: usize },
}

pub type Result<T, E = HilbertError> = std::result::Result<T, E>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HilbertError::DimensionMismatch { expected, found })
    }
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(HilbertError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Real eigenvalues of a Hermitian matrix, ascending.
fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Unit-norm vector of complex amplitudes.
///
/// Construction through [`StateVector::new`] only requires a non-empty
/// amplitude list; [`StateVector::normalized`] additionally enforces unit
/// norm. Operations that need a physical state check normalization
/// themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorRepr", into = "VectorRepr")]
pub struct StateVector {
    amps: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorRepr {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<VectorRepr> for StateVector {
    type Error = HilbertError;

    fn try_from(repr: VectorRepr) -> Result<Self> {
        if repr.re.len() != repr.im.len() {
            return Err(HilbertError::RaggedAmplitudes {
                re: repr.re.len(),
                im: repr.im.len(),
            });
        }
        if repr.dim != repr.re.len() {
            return Err(HilbertError::DeclaredDimension {
                declared: repr.dim,
                actual: repr.re.len(),
            });
        }
        StateVector::new(
            repr.re
                .iter()
                .zip(&repr.im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect(),
        )
    }
}

impl From<StateVector> for VectorRepr {
    fn from(s: StateVector) -> Self {
        VectorRepr {
            dim: s.dim(),
            re: s.amps.iter().map(|z| z.re).collect(),
            im: s.amps.iter().map(|z| z.im).collect(),
        }
    }
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(HilbertError::EmptyState);
        }
        Ok(StateVector { amps })
    }

    /// Like [`StateVector::new`] but rejects vectors whose squared norm is
    /// not 1 within [`STRUCTURAL_TOL`].
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let s = Self::new(amps)?;
        s.ensure_normalized()?;
        Ok(s)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| c(x)).collect())
    }

    /// Computational basis vector `|index⟩` of a `dim`-dimensional space.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(
            index < dim,
            "basis index {index} out of range for dimension {dim}"
        );
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = c(1.0);
        StateVector { amps }
    }

    pub fn up() -> Self {
        Self::basis(2, 0)
    }

    pub fn down() -> Self {
        Self::basis(2, 1)
    }

    /// `(|↑⟩ + |↓⟩)/√2`
    pub fn plus() -> Self {
        StateVector {
            amps: vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)],
        }
    }

    /// `(|↑⟩ − |↓⟩)/√2`
    pub fn minus() -> Self {
        StateVector {
            amps: vec![c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)],
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= STRUCTURAL_TOL
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(HilbertError::NotNormalized(self.norm_sqr()))
        }
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(HilbertError::ZeroVector);
        }
        Ok(self.scaled(c(1.0 / n)))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        StateVector {
            amps: self.amps.iter().map(|z| z * factor).collect(),
        }
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Unchecked tensor product; see [`tensor`] for the validating version.
    pub fn tensor(&self, other: &StateVector) -> Self {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        StateVector { amps }
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Equality up to a global phase: same dimension and `|⟨a|b⟩| ≥ 1 − tol`.
    pub fn same_ray(&self, other: &StateVector, tol: f64) -> bool {
        match self.inner(other) {
            Ok(z) => z.norm() >= 1.0 - tol,
            Err(_) => false,
        }
    }

    /// `Σ cᵢ |vᵢ⟩` over vectors of a common dimension.
    pub fn superpose(terms: &[(Complex64, &StateVector)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or(HilbertError::EmptyState)?;
        let dim = first.dim();
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        for (coeff, v) in terms {
            check_dims(dim, v.dim())?;
            for (acc, a) in amps.iter_mut().zip(&v.amps) {
                *acc += coeff * a;
            }
        }
        Ok(StateVector { amps })
    }

    pub fn to_column(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amps)
    }

    fn from_column(v: &DVector<Complex64>) -> Self {
        StateVector {
            amps: v.iter().copied().collect(),
        }
    }

    /// `|self⟩⟨self|`
    pub fn outer(&self) -> CMatrix {
        let v = self.to_column();
        &v * v.adjoint()
    }

    /// Haar-random pure state.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let raw = StateVector {
                amps: (0..dim).map(|_| gaussian_complex(rng)).collect(),
            };
            if let Ok(s) = raw.normalize() {
                return s;
            }
        }
    }
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    Complex64::from_polar((-2.0 * u1.ln()).sqrt(), std::f64::consts::TAU * u2)
}

/// Random orthonormal basis of a `dim`-dimensional space (Gram–Schmidt on
/// Gaussian vectors).
pub fn random_basis<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<StateVector> {
    let mut basis: Vec<StateVector> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = StateVector::random(dim, rng);
        for b in &basis {
            let overlap = b.inner(&v).expect("same dimension");
            v = StateVector::superpose(&[(c(1.0), &v), (-overlap, b)]).expect("same dimension");
        }
        if v.norm_sqr() > 1e-6 {
            basis.push(v.normalize().expect("nonzero"));
        }
    }
    basis
}

/// `⟨a|b⟩`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    a.inner(b)
}

/// Tensor product of two normalized states.
pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    a.ensure_normalized()?;
    b.ensure_normalized()?;
    Ok(a.tensor(b))
}

/// Positive semidefinite, unit-trace Hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct DensityOperator {
    matrix: CMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl MatrixRepr {
    fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixRepr { dim: n, re, im }
    }

    fn into_matrix(self) -> Result<CMatrix> {
        if self.re.len() != self.im.len() {
            return Err(HilbertError::RaggedAmplitudes {
                re: self.re.len(),
                im: self.im.len(),
            });
        }
        if self.dim == 0 || self.dim * self.dim != self.re.len() {
            return Err(HilbertError::DeclaredDimension {
                declared: self.dim,
                actual: self.re.len(),
            });
        }
        let n = self.dim;
        Ok(CMatrix::from_fn(n, n, |i, j| {
            Complex64::new(self.re[i * n + j], self.im[i * n + j])
        }))
    }
}

impl TryFrom<MatrixRepr> for DensityOperator {
    type Error = HilbertError;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        DensityOperator::new(repr.into_matrix()?)
    }
}

impl From<DensityOperator> for MatrixRepr {
    fn from(rho: DensityOperator) -> Self {
        MatrixRepr::from_matrix(&rho.matrix)
    }
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        if matrix.nrows() == 0 {
            return Err(HilbertError::EmptyState);
        }
        let defect = hermiticity_defect(&matrix);
        if defect > STRUCTURAL_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > STRUCTURAL_TOL || trace.im.abs() > STRUCTURAL_TOL {
            return Err(HilbertError::BadTrace(trace.re));
        }
        if let Some(&low) = hermitian_eigenvalues(&matrix).first() {
            if low < -STRUCTURAL_TOL {
                return Err(HilbertError::EigenvalueOutOfRange(low));
            }
        }
        Ok(DensityOperator { matrix })
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        state.ensure_normalized()?;
        Ok(DensityOperator {
            matrix: state.outer(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

/// One POVM element (or projector) with its outcome label.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    label: String,
    matrix: CMatrix,
}

impl Effect {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        if matrix.nrows() == 0 {
            return Err(HilbertError::EmptyState);
        }
        let defect = hermiticity_defect(&matrix);
        if defect > STRUCTURAL_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        let eig = hermitian_eigenvalues(&matrix);
        for &v in [eig.first(), eig.last()].into_iter().flatten() {
            if !(-STRUCTURAL_TOL..=1.0 + STRUCTURAL_TOL).contains(&v) {
                return Err(HilbertError::EigenvalueOutOfRange(v));
            }
        }
        Ok(Effect {
            label: label.into(),
            matrix,
        })
    }

    /// Rank-one projector `|s⟩⟨s|` onto a normalized state.
    pub fn projector(label: impl Into<String>, state: &StateVector) -> Result<Self> {
        state.ensure_normalized()?;
        Ok(Effect {
            label: label.into(),
            matrix: state.outer(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `E₁ ⊗ E₂` labelled `(l₁,l₂)`.
    pub fn tensor(&self, other: &Effect) -> Effect {
        Effect {
            label: format!("({},{})", self.label, other.label),
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectRepr {
    label: String,
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Complete set of effects summing to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementRepr", into = "MeasurementRepr")]
pub struct Measurement {
    effects: Vec<Effect>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementRepr {
    dim: usize,
    effects: Vec<EffectRepr>,
}

impl TryFrom<MeasurementRepr> for Measurement {
    type Error = HilbertError;

    fn try_from(repr: MeasurementRepr) -> Result<Self> {
        let effects = repr
            .effects
            .into_iter()
            .map(|e| {
                let matrix = MatrixRepr {
                    dim: e.dim,
                    re: e.re,
                    im: e.im,
                }
                .into_matrix()?;
                check_dims(repr.dim, matrix.nrows())?;
                Effect::new(e.label, matrix)
            })
            .collect::<Result<Vec<_>>>()?;
        Measurement::new(effects)
    }
}

impl From<Measurement> for MeasurementRepr {
    fn from(m: Measurement) -> Self {
        MeasurementRepr {
            dim: m.dim(),
            effects: m
                .effects
                .into_iter()
                .map(|e| {
                    let MatrixRepr { dim, re, im } = MatrixRepr::from_matrix(&e.matrix);
                    EffectRepr {
                        label: e.label,
                        dim,
                        re,
                        im,
                    }
                })
                .collect(),
        }
    }
}

impl Measurement {
    pub fn new(effects: Vec<Effect>) -> Result<Self> {
        let dim = effects.first().ok_or(HilbertError::EmptyMeasurement)?.dim();
        let mut sum = CMatrix::zeros(dim, dim);
        let mut seen = std::collections::BTreeSet::new();
        for e in &effects {
            check_dims(dim, e.dim())?;
            if !seen.insert(e.label.as_str()) {
                return Err(HilbertError::DuplicateLabel(e.label.clone()));
            }
            sum += &e.matrix;
        }
        let defect = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if defect > STRUCTURAL_TOL {
            return Err(HilbertError::Incomplete(defect));
        }
        Ok(Measurement { effects })
    }

    /// Projective measurement onto the given states, one labelled outcome per
    /// state.
    pub fn projective<S: AsRef<str>>(labels: &[S], states: &[StateVector]) -> Result<Self> {
        check_dims(labels.len(), states.len())?;
        let effects = labels
            .iter()
            .zip(states)
            .map(|(l, s)| Effect::projector(l.as_ref(), s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(effects)
    }

    /// Computational-basis measurement with outcomes `"0"`, `"1"`, ...
    pub fn computational(dim: usize) -> Self {
        let labels: Vec<String> = (0..dim).map(|i| i.to_string()).collect();
        let states: Vec<StateVector> = (0..dim).map(|i| StateVector::basis(dim, i)).collect();
        Self::projective(&labels, &states).expect("basis projectors are complete")
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.effects.iter().map(|e| e.label())
    }

    pub fn effect(&self, label: &str) -> Option<&Effect> {
        self.effects.iter().find(|e| e.label == label)
    }

    /// Outcome probabilities in effect order.
    pub fn probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        self.effects
            .iter()
            .map(|e| born_probability(rho, e))
            .collect()
    }

    /// Product measurement: every pair of effects, first factor slowest.
    pub fn tensor(&self, other: &Measurement) -> Measurement {
        let effects = self
            .effects
            .iter()
            .flat_map(|a| other.effects.iter().map(move |b| a.tensor(b)))
            .collect();
        Measurement { effects }
    }
}

/// `Tr(ρE)`, clamped into `[0, 1]`.
pub fn born_probability(rho: &DensityOperator, effect: &Effect) -> Result<f64> {
    check_dims(rho.dim(), effect.dim())?;
    let n = rho.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho.matrix[(i, j)] * effect.matrix[(j, i)];
        }
    }
    let p = acc.re;
    if !(-AGGREGATE_TOL..=1.0 + AGGREGATE_TOL).contains(&p) || acc.im.abs() > AGGREGATE_TOL {
        return Err(HilbertError::InvalidProbability(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Hermitian operator carried together with an orthonormal eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservableRepr", into = "ObservableRepr")]
pub struct Observable {
    matrix: CMatrix,
    spectrum: Vec<(f64, StateVector)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenpairRepr {
    value: f64,
    vector: StateVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservableRepr {
    dim: usize,
    spectrum: Vec<EigenpairRepr>,
}

impl TryFrom<ObservableRepr> for Observable {
    type Error = HilbertError;

    fn try_from(repr: ObservableRepr) -> Result<Self> {
        let obs = Observable::from_spectrum(
            repr.spectrum
                .into_iter()
                .map(|p| (p.value, p.vector))
                .collect(),
        )?;
        check_dims(repr.dim, obs.dim())?;
        Ok(obs)
    }
}

impl From<Observable> for ObservableRepr {
    fn from(o: Observable) -> Self {
        ObservableRepr {
            dim: o.dim(),
            spectrum: o
                .spectrum
                .into_iter()
                .map(|(value, vector)| EigenpairRepr { value, vector })
                .collect(),
        }
    }
}

impl Observable {
    /// Builds `Σ vᵢ |eᵢ⟩⟨eᵢ|` from a complete orthonormal eigenbasis.
    pub fn from_spectrum(spectrum: Vec<(f64, StateVector)>) -> Result<Self> {
        let dim = spectrum
            .first()
            .ok_or(HilbertError::IncompleteSpectrum { dim: 0, found: 0 })?
            .1
            .dim();
        if spectrum.len() != dim {
            return Err(HilbertError::IncompleteSpectrum {
                dim,
                found: spectrum.len(),
            });
        }
        let mut worst: f64 = 0.0;
        for (i, (_, a)) in spectrum.iter().enumerate() {
            check_dims(dim, a.dim())?;
            for (j, (_, b)) in spectrum.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.inner(b)? - c(expected)).norm());
            }
        }
        if worst > STRUCTURAL_TOL {
            return Err(HilbertError::NotOrthonormal(worst));
        }
        let mut matrix = CMatrix::zeros(dim, dim);
        for (value, v) in &spectrum {
            matrix += v.outer() * c(*value);
        }
        Ok(Observable { matrix, spectrum })
    }

    /// Diagonalizes a Hermitian matrix. Eigenpairs are ordered by descending
    /// eigenvalue.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let defect = hermiticity_defect(&matrix);
        if defect > STRUCTURAL_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let mut spectrum: Vec<(f64, StateVector)> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(&v, col)| (v, StateVector::from_column(&col.into_owned())))
            .collect();
        spectrum.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(Observable { matrix, spectrum })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_spectrum(
            (0..dim)
                .map(|i| (1.0, StateVector::basis(dim, i)))
                .collect(),
        )
        .expect("computational basis is orthonormal")
    }

    /// σ_z: `|↑⟩ ↦ +1`, `|↓⟩ ↦ −1`.
    pub fn pauli_z() -> Self {
        Self::from_spectrum(vec![(1.0, StateVector::up()), (-1.0, StateVector::down())])
            .expect("orthonormal")
    }

    /// σ_x: `|+⟩ ↦ +1`, `|−⟩ ↦ −1`.
    pub fn pauli_x() -> Self {
        Self::from_spectrum(vec![
            (1.0, StateVector::plus()),
            (-1.0, StateVector::minus()),
        ])
        .expect("orthonormal")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &[(f64, StateVector)] {
        &self.spectrum
    }

    /// Distinct eigenvalues in spectrum order; degenerate eigenvalues
    /// appear once.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (v, _) in &self.spectrum {
            if !out.iter().any(|u| (u - v).abs() <= EIGENVALUE_MERGE_TOL) {
                out.push(*v);
            }
        }
        out
    }

    /// Projector onto the eigenspace of `value`, if it is an eigenvalue.
    pub fn eigenspace_projector(&self, value: f64) -> Option<CMatrix> {
        let n = self.dim();
        let mut proj = CMatrix::zeros(n, n);
        let mut found = false;
        for (v, vec) in &self.spectrum {
            if (v - value).abs() <= EIGENVALUE_MERGE_TOL {
                proj += vec.outer();
                found = true;
            }
        }
        found.then_some(proj)
    }

    /// Lifts the observable to the `position`-th factor of a product space
    /// with the given factor dimensions (identity elsewhere).
    pub fn embed(&self, dims: &[usize], position: usize) -> Result<Observable> {
        check_dims(dims[position], self.dim())?;
        let mut spectrum = vec![(1.0, StateVector::basis(1, 0))];
        for (i, &d) in dims.iter().enumerate() {
            let factor: Vec<(f64, StateVector)> = if i == position {
                self.spectrum.clone()
            } else {
                (0..d).map(|k| (1.0, StateVector::basis(d, k))).collect()
            };
            spectrum = spectrum
                .iter()
                .flat_map(|(va, a)| factor.iter().map(move |(vb, b)| (va * vb, a.tensor(b))))
                .collect();
        }
        Observable::from_spectrum(spectrum)
    }
}

/// Applies a unitary to a state, rejecting non-unitary matrices.
pub fn apply_unitary(u: &CMatrix, s: &StateVector) -> Result<StateVector> {
    let n = check_square(u)?;
    check_dims(n, s.dim())?;
    let defect = max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)));
    if defect > STRUCTURAL_TOL {
        return Err(HilbertError::NotUnitary(defect));
    }
    Ok(StateVector::from_column(&(u * s.to_column())))
}

/// Unitary that correlates a pointer with the eigenspaces of `observable`:
/// `U = Σ_g P_g ⊗ Sᵍ`, where `P_g` projects onto the g-th distinct
/// eigenspace and `S` is the cyclic shift on the pointer. Starting from the
/// pointer state `|0⟩`, eigenspace `g` leaves the pointer in `|g⟩`.
pub fn measurement_unitary(observable: &Observable, pointer_dim: usize) -> Result<CMatrix> {
    let values = observable.eigenvalues();
    if pointer_dim < values.len() {
        return Err(HilbertError::PointerTooSmall {
            pointer: pointer_dim,
            outcomes: values.len(),
        });
    }
    let n = observable.dim();
    let mut u = CMatrix::zeros(n * pointer_dim, n * pointer_dim);
    for (g, &v) in values.iter().enumerate() {
        let proj = observable
            .eigenspace_projector(v)
            .expect("listed eigenvalue");
        let shift = CMatrix::from_fn(pointer_dim, pointer_dim, |i, j| {
            if i == (j + g) % pointer_dim {
                c(1.0)
            } else {
                c(0.0)
            }
        });
        u += proj.kronecker(&shift);
    }
    Ok(u)
}

/// The four product states `|ω₁⟩…|ω₄⟩`: `↑↑`, `↑+`, `+↑`, `++`.
pub fn pbr_product_states() -> [StateVector; 4] {
    let (up, plus) = (StateVector::up(), StateVector::plus());
    [
        up.tensor(&up),
        up.tensor(&plus),
        plus.tensor(&up),
        plus.tensor(&plus),
    ]
}

/// The entangled basis `|χ₁⟩…|χ₄⟩`, each orthogonal to the matching `|ωₖ⟩`.
pub fn pbr_basis_states() -> [StateVector; 4] {
    let (up, down, plus, minus) = (
        StateVector::up(),
        StateVector::down(),
        StateVector::plus(),
        StateVector::minus(),
    );
    let pair = |a: &StateVector, b: &StateVector, x: &StateVector, y: &StateVector| {
        StateVector::superpose(&[
            (c(FRAC_1_SQRT_2), &a.tensor(b)),
            (c(FRAC_1_SQRT_2), &x.tensor(y)),
        ])
        .expect("two-qubit states")
    };
    [
        pair(&up, &down, &down, &up),
        pair(&up, &minus, &down, &plus),
        pair(&plus, &down, &minus, &up),
        pair(&plus, &minus, &minus, &plus),
    ]
}

pub const PBR_OUTCOMES: [&str; 4] = ["chi1", "chi2", "chi3", "chi4"];

/// Projective measurement onto `|χ₁⟩…|χ₄⟩` with outcomes `chi1`…`chi4`.
pub fn pbr_measurement() -> Measurement {
    Measurement::projective(&PBR_OUTCOMES, &pbr_basis_states())
        .expect("the four entangled states form an orthonormal basis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() <= EPS
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn inner_product_examples() {
        let z = inner_product(&StateVector::up(), &StateVector::plus()).unwrap();
        assert!(close(z, c(0.7071067811865476)));
        let one = inner_product(&StateVector::up(), &StateVector::up()).unwrap();
        assert!(close(one, c(1.0)));
        let omega = pbr_product_states();
        let chi = pbr_basis_states();
        assert!(inner_product(&omega[0], &chi[0]).unwrap().norm() < EPS);
    }

    #[test]
    fn inner_product_rejects_dimension_mismatch() {
        let err = inner_product(&StateVector::up(), &StateVector::basis(3, 0)).unwrap_err();
        assert_eq!(
            err,
            HilbertError::DimensionMismatch {
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_argument() {
        let i = Complex64::new(0.0, 1.0);
        let a = StateVector::up().scaled(i);
        let z = inner_product(&a, &StateVector::up()).unwrap();
        assert!(close(z, -i));
    }

    #[test]
    fn tensor_examples() {
        let up = StateVector::up();
        let uu = tensor(&up, &up).unwrap();
        assert_eq!(uu, StateVector::from_real(&[1.0, 0.0, 0.0, 0.0]).unwrap());
        assert_eq!(uu, pbr_product_states()[0]);

        let unit = StateVector::basis(1, 0);
        let plus = StateVector::plus();
        assert_eq!(tensor(&plus, &unit).unwrap(), plus);

        // (1,1)/√2 ⊗ (1,−1)/√2 expanded by hand
        let pm = tensor(&StateVector::plus(), &StateVector::minus()).unwrap();
        let expected = [0.5, -0.5, 0.5, -0.5];
        for (z, e) in pm.amplitudes().iter().zip(expected) {
            assert!(close(*z, c(e)));
        }
    }

    #[test]
    fn tensor_requires_normalized_inputs() {
        let big = StateVector::from_real(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            tensor(&big, &StateVector::up()),
            Err(HilbertError::NotNormalized(_))
        ));
    }

    #[test]
    fn born_probability_examples() {
        let up = StateVector::up();
        let rho = DensityOperator::from_pure(&up).unwrap();
        let e = Effect::projector("up", &up).unwrap();
        assert!((born_probability(&rho, &e).unwrap() - 1.0).abs() < EPS);

        let omega = pbr_product_states();
        let chi = pbr_basis_states();
        let rho1 = DensityOperator::from_pure(&omega[0]).unwrap();
        let chi1 = Effect::projector("chi1", &chi[0]).unwrap();
        assert!(born_probability(&rho1, &chi1).unwrap().abs() < EPS);

        // χ₁ = (0,1,1,0)/√2 and ω₄ = (1,1,1,1)/2, so ⟨χ₁|ω₄⟩ = 1/√2.
        let rho4 = DensityOperator::from_pure(&omega[3]).unwrap();
        assert!((born_probability(&rho4, &chi1).unwrap() - 0.5).abs() < EPS);
    }

    #[test]
    fn born_probability_rejects_mismatch_and_bad_effects() {
        let rho = DensityOperator::from_pure(&StateVector::up()).unwrap();
        let e = Effect::projector("x", &StateVector::basis(3, 0)).unwrap();
        assert!(matches!(
            born_probability(&rho, &e),
            Err(HilbertError::DimensionMismatch { .. })
        ));
        let twice = CMatrix::identity(2, 2) * c(2.0);
        assert!(matches!(
            Effect::new("bad", twice),
            Err(HilbertError::EigenvalueOutOfRange(_))
        ));
    }

    #[test]
    fn product_states_in_order() {
        let omega = pbr_product_states();
        let up = StateVector::up();
        assert_eq!(omega[0], up.tensor(&up));
        for z in omega[3].amplitudes() {
            assert!(close(*z, c(0.5)));
        }
        for s in &omega {
            assert!((s.norm_sqr() - 1.0).abs() < EPS);
        }
    }

    #[test]
    fn pbr_measurement_is_antidistinguishing_basis() {
        let omega = pbr_product_states();
        let chi = pbr_basis_states();
        for k in 0..4 {
            assert!(chi[k].inner(&omega[k]).unwrap().norm() < EPS, "k = {k}");
            assert!((chi[k].inner(&chi[k]).unwrap() - c(1.0)).norm() < EPS);
        }
        // Gram matrix against the identity, entry by entry
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(close(chi[i].inner(&chi[j]).unwrap(), c(expected)));
            }
        }
        let m = pbr_measurement();
        let mut sum = CMatrix::zeros(4, 4);
        for e in m.effects() {
            sum += e.matrix();
        }
        assert!(max_abs(&(sum - CMatrix::identity(4, 4))) < EPS);
    }

    #[test]
    fn apply_unitary_examples() {
        let plus = StateVector::plus();
        assert_eq!(
            apply_unitary(&CMatrix::identity(2, 2), &plus).unwrap(),
            plus
        );

        let x = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        assert_eq!(
            apply_unitary(&x, &StateVector::up()).unwrap(),
            StateVector::down()
        );

        let not_unitary = CMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(0.0), c(1.0)]);
        assert!(matches!(
            apply_unitary(&not_unitary, &plus),
            Err(HilbertError::NotUnitary(_))
        ));
    }

    #[test]
    fn entangling_unitary_reproduces_third_person_map() {
        let (c1, c2) = (Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        let (p, m) = (StateVector::plus(), StateVector::minus());
        let sys = StateVector::superpose(&[(c1, &p), (c2, &m)]).unwrap();
        let init = StateVector::basis(2, 0);
        let u = measurement_unitary(&Observable::pauli_x(), 2).unwrap();
        let out = apply_unitary(&u, &sys.tensor(&init)).unwrap();
        let (ptr_plus, ptr_minus) = (StateVector::basis(2, 0), StateVector::basis(2, 1));
        let target =
            StateVector::superpose(&[(c1, &p.tensor(&ptr_plus)), (c2, &m.tensor(&ptr_minus))])
                .unwrap();
        assert!((out.fidelity(&target).unwrap() - 1.0).abs() < EPS);
        assert!((out.norm_sqr() - 1.0).abs() < EPS);
    }

    #[test]
    fn observable_spectral_round_trip() {
        let x = Observable::pauli_x();
        let rebuilt = Observable::from_matrix(x.matrix().clone()).unwrap();
        assert!(max_abs(&(rebuilt.matrix() - x.matrix())) < EPS);
        assert_eq!(rebuilt.eigenvalues().len(), 2);
        assert!((rebuilt.spectrum()[0].0 - 1.0).abs() < EPS);
        assert!(rebuilt.spectrum()[0].1.same_ray(&StateVector::plus(), EPS));
        assert_eq!(Observable::identity(3).eigenvalues(), vec![1.0]);
    }

    #[test]
    fn observable_rejects_non_orthonormal_spectrum() {
        let err =
            Observable::from_spectrum(vec![(1.0, StateVector::up()), (-1.0, StateVector::plus())]);
        assert!(matches!(err, Err(HilbertError::NotOrthonormal(_))));
    }

    #[test]
    fn embedded_observable_acts_on_one_factor() {
        let lifted = Observable::pauli_x().embed(&[2, 2], 0).unwrap();
        let expected = Observable::pauli_x()
            .matrix()
            .kronecker(&CMatrix::identity(2, 2));
        assert!(max_abs(&(lifted.matrix() - expected)) < EPS);
    }

    #[test]
    fn density_operator_validation() {
        assert!(matches!(
            DensityOperator::new(CMatrix::identity(2, 2)),
            Err(HilbertError::BadTrace(_))
        ));
        let neg = CMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(matches!(
            DensityOperator::new(neg),
            Err(HilbertError::EigenvalueOutOfRange(_))
        ));
        let mixed = CMatrix::identity(2, 2) * c(0.5);
        assert!(DensityOperator::new(mixed).is_ok());
    }

    #[test]
    fn measurement_requires_completeness() {
        let up = StateVector::up();
        let err = Measurement::projective(&["up"], &[up]).unwrap_err();
        assert!(matches!(err, HilbertError::Incomplete(_)));
    }

    #[test]
    fn json_layout_is_stable() {
        let s =
            StateVector::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0)]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"dim":2,"re":[1.0,0.0],"im":[0.0,-1.0]}"#);
        let bad: std::result::Result<StateVector, _> =
            serde_json::from_str(r#"{"dim":3,"re":[1.0],"im":[0.0]}"#);
        assert!(bad.is_err());
        let m = Measurement::computational(2);
        let back: Measurement = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn random_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = random_basis(4, &mut rng);
        let m = Measurement::projective(&["a", "b", "c", "d"], &basis).unwrap();
        assert_eq!(m.dim(), 4);
    }
}
