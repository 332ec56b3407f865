//! Observer-indexed state ledger.
//!
//! Every assignment names a system (a list of factor names, first factor
//! slowest in the amplitude ordering), the observer it is relative to, and
//! whether it records a quantum state or an ontic state. The ledger is a
//! sequence of time steps. Events never mutate a step: they copy the latest
//! one, change what they are allowed to change, and append the result.

mod scenarios;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::FeasibilityError;
use crate::hilbert::{
    measurement_unitary, CMatrix, HilbertError, Observable, StateVector, STRUCTURAL_TOL,
};
use crate::ontmodel::ModelError;

pub use scenarios::{
    relational_pbr_alice_bob, relational_pbr_single_observer, run_scenario, setting_superposition,
    third_person_initial, third_person_scenario, Assertion, AssertionOutcome, FeasibilitySection,
    Observers, SStarMode, ScenarioConfig, ScenarioReport, Setting, Verdict, SCENARIOS,
};

pub type ObserverId = String;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RqmError {
    #[error("observer {0:?} cannot interact with itself")]
    SameSystem(String),
    #[error("no {role} assignment for {system} relative to {observer:?}")]
    MissingAssignment {
        system: String,
        observer: String,
        role: Role,
    },
    #[error("{0} is not an eigenvalue of the observable")]
    NotAnEigenvalue(f64),
    #[error("outcome {0} has zero probability in the current state")]
    ImpossibleOutcome(f64),
    #[error("interaction needs either an outcome or a seed")]
    NoOutcomeSource,
    #[error("preparation setting {setting} out of range for {options} options")]
    BadSetting { setting: usize, options: usize },
    #[error("invalid scenario configuration: {0}")]
    BadConfig(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

pub type Result<T, E = RqmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    QuantumState,
    OnticState,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::QuantumState => "quantum_state",
            Role::OnticState => "ontic_state",
        })
    }
}

/// `|ψ⟩_{system/observer}` or `λ_{system/observer}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationalAssignment {
    pub system: Vec<String>,
    /// Dimension of each factor of `system`.
    pub dims: Vec<usize>,
    pub observer: ObserverId,
    pub role: Role,
    pub state: StateVector,
}

impl RelationalAssignment {
    pub fn new(
        system: &[&str],
        dims: &[usize],
        observer: &str,
        role: Role,
        state: StateVector,
    ) -> Self {
        RelationalAssignment {
            system: system.iter().map(|s| s.to_string()).collect(),
            dims: dims.to_vec(),
            observer: observer.to_string(),
            role,
            state,
        }
    }

    pub fn system_name(&self) -> String {
        system_name(&self.system)
    }

    fn key(&self) -> (Vec<String>, String, Role) {
        (self.system.clone(), self.observer.clone(), self.role)
    }

    fn position(&self, factor: &str) -> Option<usize> {
        self.system.iter().position(|s| s == factor)
    }
}

/// Factors joined with `⊗`.
pub fn system_name(factors: &[String]) -> String {
    factors.join("⊗")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// `observer` measured an observable on `system`.
    Interaction {
        observer: ObserverId,
        system: String,
        eigenvalues: Vec<f64>,
        outcome: f64,
        sampled: bool,
    },
    /// `preparer` prepared `system` in option `setting`, keeping the
    /// setting in its own record.
    Preparation {
        preparer: ObserverId,
        system: String,
        options: usize,
        setting: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerStep {
    pub time: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub event: Option<Event>,
    pub assignments: Vec<RelationalAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationalLedger {
    steps: Vec<LedgerStep>,
}

impl Default for RelationalLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl RelationalLedger {
    /// A ledger with an empty step at time 0.
    pub fn new() -> Self {
        RelationalLedger {
            steps: vec![LedgerStep {
                time: 0,
                event: None,
                assignments: Vec::new(),
            }],
        }
    }

    pub fn steps(&self) -> &[LedgerStep] {
        &self.steps
    }

    pub fn current(&self) -> &LedgerStep {
        self.steps.last().expect("a ledger always has a step")
    }

    pub fn time(&self) -> usize {
        self.current().time
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.steps.iter().filter_map(|s| s.event.as_ref())
    }

    /// Adds an assignment to the latest step. The assignment must be
    /// normalized, match its declared dimensions and not clash with an
    /// existing (system, observer, role) entry.
    pub fn assign(&self, assignment: RelationalAssignment) -> Result<Self> {
        assignment.state.ensure_normalized()?;
        let expected: usize = assignment.dims.iter().product();
        if expected != assignment.state.dim() || assignment.dims.len() != assignment.system.len() {
            return Err(HilbertError::DimensionMismatch {
                expected,
                found: assignment.state.dim(),
            }
            .into());
        }
        if self
            .current()
            .assignments
            .iter()
            .any(|a| a.key() == assignment.key())
        {
            return Err(RqmError::BadConfig(format!(
                "duplicate {} assignment for {} relative to {:?}",
                assignment.role,
                assignment.system_name(),
                assignment.observer
            )));
        }
        Ok(self.insert_unchecked(assignment))
    }

    /// Adds an assignment to the latest step without any validation. Meant
    /// for exercising [`consistency_audit`].
    pub fn insert_unchecked(&self, assignment: RelationalAssignment) -> Self {
        let mut next = self.clone();
        next.steps
            .last_mut()
            .expect("non-empty")
            .assignments
            .push(assignment);
        next
    }

    /// Exact lookup in the latest step.
    pub fn get(
        &self,
        system: &[&str],
        observer: &str,
        role: Role,
    ) -> Option<&RelationalAssignment> {
        self.current()
            .assignments
            .iter()
            .find(|a| a.observer == observer && a.role == role && a.system.iter().eq(system.iter()))
    }

    fn require(
        &self,
        system: &[&str],
        observer: &str,
        role: Role,
    ) -> Result<&RelationalAssignment> {
        self.get(system, observer, role)
            .ok_or_else(|| RqmError::MissingAssignment {
                system: system.join("⊗"),
                observer: observer.to_string(),
                role,
            })
    }

    /// Smallest assignment (exact match first, then composites in ledger
    /// order) whose system contains every factor in `system`.
    fn containing(
        &self,
        system: &[&str],
        observer: &str,
        role: Role,
    ) -> Option<&RelationalAssignment> {
        self.get(system, observer, role).or_else(|| {
            self.current().assignments.iter().find(|a| {
                a.observer == observer
                    && a.role == role
                    && system.iter().all(|f| a.position(f).is_some())
            })
        })
    }

    fn push_step(&self, event: Event, assignments: Vec<RelationalAssignment>) -> Self {
        let mut next = self.clone();
        let time = self.time() + 1;
        next.steps.push(LedgerStep {
            time,
            event: Some(event),
            assignments,
        });
        next
    }
}

/// Applies `op` to the factors at `positions` of a state on a product space
/// with factor dimensions `dims`. The operator's own index runs over the
/// chosen factors in the order given, first slowest.
pub fn apply_on_factors(
    state: &StateVector,
    dims: &[usize],
    positions: &[usize],
    op: &CMatrix,
) -> Result<StateVector> {
    let total: usize = dims.iter().product();
    if total != state.dim() {
        return Err(HilbertError::DimensionMismatch {
            expected: total,
            found: state.dim(),
        }
        .into());
    }
    let sub: usize = positions.iter().map(|&p| dims[p]).product();
    if op.nrows() != sub || op.ncols() != sub {
        return Err(HilbertError::DimensionMismatch {
            expected: sub,
            found: op.nrows(),
        }
        .into());
    }
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    // offsets[t] is the full-space offset of sub-index t.
    let offsets: Vec<usize> = (0..sub)
        .map(|mut t| {
            let mut off = 0;
            for &p in positions.iter().rev() {
                off += (t % dims[p]) * strides[p];
                t /= dims[p];
            }
            off
        })
        .collect();
    let amps = state.amplitudes();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    for (x, slot) in out.iter_mut().enumerate() {
        let mut s = 0;
        let mut base = x;
        for &p in positions {
            let digit = (x / strides[p]) % dims[p];
            s = s * dims[p] + digit;
            base -= digit * strides[p];
        }
        *slot = (0..sub).map(|t| op[(s, t)] * amps[base + offsets[t]]).sum();
    }
    Ok(StateVector::new(out)?)
}

/// Reorders the factors of a product-space state: factor `i` of the result
/// is factor `order[i]` of the input.
pub fn permute_factors(
    state: &StateVector,
    dims: &[usize],
    order: &[usize],
) -> Result<(StateVector, Vec<usize>)> {
    let total: usize = dims.iter().product();
    if total != state.dim() || order.len() != dims.len() {
        return Err(HilbertError::DimensionMismatch {
            expected: total,
            found: state.dim(),
        }
        .into());
    }
    let new_dims: Vec<usize> = order.iter().map(|&i| dims[i]).collect();
    let mut old_strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        old_strides[i] = old_strides[i + 1] * dims[i + 1];
    }
    let amps = state.amplitudes();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    for (y, slot) in out.iter_mut().enumerate() {
        let mut rest = y;
        let mut x = 0;
        for k in (0..order.len()).rev() {
            let digit = rest % new_dims[k];
            rest /= new_dims[k];
            x += digit * old_strides[order[k]];
        }
        *slot = amps[x];
    }
    Ok((StateVector::new(out)?, new_dims))
}

/// Completes `v` to an orthonormal basis, `v` first, by Gram–Schmidt
/// against the computational basis.
pub fn complete_basis(v: &StateVector) -> Result<Vec<StateVector>> {
    v.ensure_normalized()?;
    let n = v.dim();
    let mut basis = vec![v.clone()];
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut candidate = StateVector::basis(n, i);
        for b in &basis {
            let overlap = b.inner(&candidate)?;
            let terms = [(Complex64::new(1.0, 0.0), &candidate), (-overlap, b)];
            candidate = StateVector::superpose(&terms)?;
        }
        if candidate.norm_sqr() > 1e-8 {
            basis.push(candidate.normalize()?);
        }
    }
    Ok(basis)
}

/// Unitary whose first column is `v`.
fn unitary_from(v: &StateVector) -> Result<CMatrix> {
    let basis = complete_basis(v)?;
    let n = v.dim();
    Ok(DMatrix::from_fn(n, n, |i, j| basis[j].amplitudes()[i]))
}

fn eigenvalue_match(observable: &Observable, value: f64) -> Option<f64> {
    observable
        .eigenvalues()
        .into_iter()
        .find(|v| (v - value).abs() <= 1e-9)
}

/// Probability of each distinct eigenvalue of `observable` (acting on the
/// factors at `positions`) in `state`.
fn outcome_distribution(
    state: &StateVector,
    dims: &[usize],
    positions: &[usize],
    observable: &Observable,
) -> Result<Vec<(f64, f64)>> {
    observable
        .eigenvalues()
        .into_iter()
        .map(|v| {
            let proj = observable
                .eigenspace_projector(v)
                .expect("listed eigenvalue");
            let projected = apply_on_factors(state, dims, positions, &proj)?;
            Ok((v, projected.norm_sqr()))
        })
        .collect()
}

/// `observer` measures `observable` on `system`.
///
/// Relative to the observer, every assignment that contains `system` is
/// projected onto the eigenspace of the outcome and renormalized. The
/// outcome is the given one, or is drawn from the Born distribution of the
/// observer's quantum state for `system` with a ChaCha8 generator seeded
/// by `seed`. Relative to any other observer whose assignment contains
/// both `system` and `observer`, that composite evolves by the unitary
/// `Σ_g P_g ⊗ Sᵍ` that correlates the observer's pointer with the outcome.
/// Nothing else changes.
pub fn interact(
    ledger: &RelationalLedger,
    observer: &str,
    system: &str,
    observable: &Observable,
    outcome: Option<f64>,
    seed: Option<u64>,
) -> Result<RelationalLedger> {
    if observer == system {
        return Err(RqmError::SameSystem(observer.to_string()));
    }
    let own = ledger.require(&[system], observer, Role::QuantumState)?;
    let distribution = outcome_distribution(&own.state, &own.dims, &[0], observable)?;
    let (value, sampled) = match (outcome, seed) {
        (Some(v), _) => {
            let v = eigenvalue_match(observable, v).ok_or(RqmError::NotAnEigenvalue(v))?;
            (v, false)
        }
        (None, Some(seed)) => {
            let u: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
            let mut acc = 0.0;
            let mut chosen = None;
            for (v, p) in &distribution {
                acc += p;
                if *p > STRUCTURAL_TOL && u < acc {
                    chosen = Some(*v);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below 1; fall back to the last
            // outcome with positive probability.
            let v = chosen.or_else(|| {
                distribution
                    .iter()
                    .rev()
                    .find(|(_, p)| *p > STRUCTURAL_TOL)
                    .map(|(v, _)| *v)
            });
            (v.ok_or(RqmError::ImpossibleOutcome(f64::NAN))?, true)
        }
        (None, None) => return Err(RqmError::NoOutcomeSource),
    };
    let projector = observable
        .eigenspace_projector(value)
        .expect("matched eigenvalue");

    let mut next = ledger.current().assignments.clone();
    for a in next.iter_mut() {
        let Some(sys_pos) = a.position(system) else {
            continue;
        };
        if a.observer == observer {
            let projected = apply_on_factors(&a.state, &a.dims, &[sys_pos], &projector)?;
            if projected.norm_sqr() <= STRUCTURAL_TOL {
                return Err(RqmError::ImpossibleOutcome(value));
            }
            a.state = projected.normalize()?;
        } else if let Some(obs_pos) = a.position(observer) {
            let u = measurement_unitary(observable, a.dims[obs_pos])?;
            a.state = apply_on_factors(&a.state, &a.dims, &[sys_pos, obs_pos], &u)?;
        }
    }
    Ok(ledger.push_step(
        Event::Interaction {
            observer: observer.to_string(),
            system: system.to_string(),
            eigenvalues: observable.eigenvalues(),
            outcome: value,
            sampled,
        },
        next,
    ))
}

/// `preparer` prepares `system` in `options[setting]`.
///
/// Preparation is treated as a measurement by the preparer: relative to the
/// preparer, assignments containing `system` are projected onto the chosen
/// option, which must have nonzero probability. Relative to any other
/// observer whose assignment contains both `system` and `preparer`, the
/// composite evolves by the controlled preparation `Σ_i V_i ⊗ |i⟩⟨i|`,
/// where `V_i` takes basis state `|0⟩` of `system` to `options[i]` and
/// `|i⟩` is the preparer's record of the setting.
pub fn prepare(
    ledger: &RelationalLedger,
    preparer: &str,
    system: &str,
    options: &[StateVector],
    setting: usize,
) -> Result<RelationalLedger> {
    if preparer == system {
        return Err(RqmError::SameSystem(preparer.to_string()));
    }
    let chosen = options.get(setting).ok_or(RqmError::BadSetting {
        setting,
        options: options.len(),
    })?;
    ledger.require(&[system], preparer, Role::QuantumState)?;
    let projector = chosen.outer();
    let controlled: Vec<CMatrix> = options.iter().map(unitary_from).collect::<Result<_>>()?;

    let mut next = ledger.current().assignments.clone();
    for a in next.iter_mut() {
        let Some(sys_pos) = a.position(system) else {
            continue;
        };
        if a.observer == preparer {
            let projected = apply_on_factors(&a.state, &a.dims, &[sys_pos], &projector)?;
            if projected.norm_sqr() <= STRUCTURAL_TOL {
                return Err(RqmError::ImpossibleOutcome(setting as f64));
            }
            a.state = projected.normalize()?;
        } else if let Some(rec_pos) = a.position(preparer) {
            let (n, r) = (a.dims[sys_pos], a.dims[rec_pos]);
            if r < options.len() {
                return Err(HilbertError::PointerTooSmall {
                    pointer: r,
                    outcomes: options.len(),
                }
                .into());
            }
            let mut u = CMatrix::zeros(n * r, n * r);
            for i in 0..r {
                let v = controlled
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| CMatrix::identity(n, n));
                let mut sel = CMatrix::zeros(r, r);
                sel[(i, i)] = Complex64::new(1.0, 0.0);
                u += v.kronecker(&sel);
            }
            a.state = apply_on_factors(&a.state, &a.dims, &[sys_pos, rec_pos], &u)?;
        }
    }
    Ok(ledger.push_step(
        Event::Preparation {
            preparer: preparer.to_string(),
            system: system.to_string(),
            options: options.len(),
            setting,
        },
        next,
    ))
}

/// Eigenstate–eigenvalue link relative to `observer`.
///
/// Uses the observer's quantum state for `system`, or for the first
/// composite that contains it. The system has a definite value `v` iff the
/// probability of `v` is at least `1 − 1e-12`; the value is returned then.
pub fn eel_definite(
    ledger: &RelationalLedger,
    system: &[&str],
    observer: &str,
    observable: &Observable,
) -> Result<Option<f64>> {
    let a = ledger
        .containing(system, observer, Role::QuantumState)
        .ok_or_else(|| RqmError::MissingAssignment {
            system: system.join("⊗"),
            observer: observer.to_string(),
            role: Role::QuantumState,
        })?;
    let positions: Vec<usize> = system
        .iter()
        .map(|f| a.position(f).expect("contained"))
        .collect();
    let distribution = outcome_distribution(&a.state, &a.dims, &positions, observable)?;
    Ok(distribution
        .into_iter()
        .find(|(_, p)| *p >= 1.0 - STRUCTURAL_TOL)
        .map(|(v, _)| v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateAssignment,
    NotNormalized,
    DimensionMismatch,
    Factorization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Violation {
    pub time: usize,
    pub system: Vec<String>,
    pub observer: ObserverId,
    pub role: Role,
    pub kind: ViolationKind,
    pub detail: String,
}

/// Per-observer invariants at every step: one assignment per (system,
/// observer, role), normalized states whose dimension matches their
/// factors, and composites that agree (fidelity 1 within 1e-12) with the
/// tensor product of any prefix/suffix split whose parts are both assigned
/// by the same observer in the same role.
pub fn consistency_audit(ledger: &RelationalLedger) -> Vec<Violation> {
    let mut out = Vec::new();
    for step in ledger.steps() {
        let violation = |a: &RelationalAssignment, kind, detail: String| Violation {
            time: step.time,
            system: a.system.clone(),
            observer: a.observer.clone(),
            role: a.role,
            kind,
            detail,
        };
        let mut counts: BTreeMap<(Vec<String>, String, Role), usize> = BTreeMap::new();
        for a in &step.assignments {
            *counts.entry(a.key()).or_default() += 1;
        }
        let mut reported = BTreeMap::new();
        for a in &step.assignments {
            let n = counts[&a.key()];
            if n > 1 && reported.insert(a.key(), ()).is_none() {
                out.push(violation(
                    a,
                    ViolationKind::DuplicateAssignment,
                    format!("{n} assignments"),
                ));
            }
            let dim: usize = a.dims.iter().product();
            if dim != a.state.dim() || a.dims.len() != a.system.len() {
                out.push(violation(
                    a,
                    ViolationKind::DimensionMismatch,
                    format!(
                        "factor dimensions {:?} but state dimension {}",
                        a.dims,
                        a.state.dim()
                    ),
                ));
                continue;
            }
            if !a.state.is_normalized() {
                out.push(violation(
                    a,
                    ViolationKind::NotNormalized,
                    format!("norm² = {}", a.state.norm_sqr()),
                ));
                continue;
            }
            if let Some(detail) = factorization_defect(step, a) {
                out.push(violation(a, ViolationKind::Factorization, detail));
            }
        }
    }
    out
}

fn unique_part<'a>(
    step: &'a LedgerStep,
    system: &[String],
    observer: &str,
    role: Role,
) -> Option<&'a RelationalAssignment> {
    let mut matches = step
        .assignments
        .iter()
        .filter(|b| b.observer == observer && b.role == role && b.system == system);
    let first = matches.next()?;
    matches.next().is_none().then_some(first)
}

fn factorization_defect(step: &LedgerStep, a: &RelationalAssignment) -> Option<String> {
    for cut in 1..a.system.len() {
        let (Some(left), Some(right)) = (
            unique_part(step, &a.system[..cut], &a.observer, a.role),
            unique_part(step, &a.system[cut..], &a.observer, a.role),
        ) else {
            continue;
        };
        if !left.state.is_normalized() || !right.state.is_normalized() {
            continue;
        }
        let product = left.state.tensor(&right.state);
        let fidelity = product.fidelity(&a.state).unwrap_or(0.0);
        if fidelity < 1.0 - STRUCTURAL_TOL {
            return Some(format!(
                "disagrees with {} ⊗ {} (fidelity {fidelity})",
                left.system_name(),
                right.system_name()
            ));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn third_person_start(c1: f64, c2: f64) -> RelationalLedger {
        let psi = StateVector::superpose(&[
            (c(c1), &StateVector::plus()),
            (c(c2), &StateVector::minus()),
        ])
        .unwrap();
        RelationalLedger::new()
            .assign(RelationalAssignment::new(
                &["s1"],
                &[2],
                "s2",
                Role::QuantumState,
                psi.clone(),
            ))
            .unwrap()
            .assign(RelationalAssignment::new(
                &["s1", "s2"],
                &[2, 2],
                "s3",
                Role::QuantumState,
                psi.tensor(&StateVector::basis(2, 0)),
            ))
            .unwrap()
    }

    #[test]
    fn participant_collapses_bystander_entangles() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let l = third_person_start(h, h);
        let o = Observable::pauli_x();
        let after = interact(&l, "s2", "s1", &o, Some(1.0), None).unwrap();
        let rel_s2 = after.get(&["s1"], "s2", Role::QuantumState).unwrap();
        assert!(rel_s2.state.same_ray(&StateVector::plus(), 1e-12));
        let rel_s3 = after.get(&["s1", "s2"], "s3", Role::QuantumState).unwrap();
        let target = StateVector::superpose(&[
            (c(h), &StateVector::plus().tensor(&StateVector::basis(2, 0))),
            (
                c(h),
                &StateVector::minus().tensor(&StateVector::basis(2, 1)),
            ),
        ])
        .unwrap();
        assert!((rel_s3.state.fidelity(&target).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(eel_definite(&after, &["s1"], "s2", &o).unwrap(), Some(1.0));
        assert_eq!(eel_definite(&after, &["s1"], "s3", &o).unwrap(), None);
        assert!(consistency_audit(&after).is_empty());
    }

    #[test]
    fn eigenstates_are_fixed_points_and_identity_is_always_definite() {
        let l = third_person_start(1.0, 0.0);
        let o = Observable::pauli_x();
        let after = interact(&l, "s2", "s1", &o, None, Some(9)).unwrap();
        assert_eq!(
            after.get(&["s1"], "s2", Role::QuantumState).unwrap().state,
            l.get(&["s1"], "s2", Role::QuantumState).unwrap().state
        );
        assert_eq!(
            eel_definite(&l, &["s1"], "s3", &Observable::identity(2)).unwrap(),
            Some(1.0)
        );
    }

    #[test]
    fn interaction_errors() {
        let l = third_person_start(1.0, 0.0);
        let o = Observable::pauli_x();
        assert!(matches!(
            interact(&l, "s1", "s1", &o, Some(1.0), None),
            Err(RqmError::SameSystem(_))
        ));
        assert!(matches!(
            interact(&l, "s2", "s1", &o, Some(0.5), None),
            Err(RqmError::NotAnEigenvalue(_))
        ));
        assert!(matches!(
            interact(&l, "s2", "s1", &o, Some(-1.0), None),
            Err(RqmError::ImpossibleOutcome(_))
        ));
        assert!(matches!(
            interact(&l, "s9", "s1", &o, Some(1.0), None),
            Err(RqmError::MissingAssignment { .. })
        ));
        assert!(matches!(
            interact(&l, "s2", "s1", &o, None, None),
            Err(RqmError::NoOutcomeSource)
        ));
    }

    #[test]
    fn preparation_with_unknown_setting() {
        let options = [StateVector::up(), StateVector::plus()];
        let rec = StateVector::superpose(&[
            (c(1.0), &StateVector::basis(2, 0)),
            (c(1.0), &StateVector::basis(2, 1)),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        let l = RelationalLedger::new()
            .assign(RelationalAssignment::new(
                &["s2"],
                &[2],
                "B",
                Role::QuantumState,
                StateVector::up(),
            ))
            .unwrap()
            .assign(RelationalAssignment::new(
                &["s2", "B"],
                &[2, 2],
                "A",
                Role::QuantumState,
                StateVector::up().tensor(&rec),
            ))
            .unwrap();
        let after = prepare(&l, "B", "s2", &options, 1).unwrap();
        assert!(after
            .get(&["s2"], "B", Role::QuantumState)
            .unwrap()
            .state
            .same_ray(&StateVector::plus(), 1e-12));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rel_alice = StateVector::superpose(&[
            (c(h), &StateVector::up().tensor(&StateVector::basis(2, 0))),
            (c(h), &StateVector::plus().tensor(&StateVector::basis(2, 1))),
        ])
        .unwrap();
        let rel_a = &after
            .get(&["s2", "B"], "A", Role::QuantumState)
            .unwrap()
            .state;
        assert!((rel_a.fidelity(&rel_alice).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn factor_helpers() {
        let a = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let b = StateVector::plus();
        let (swapped, dims) = permute_factors(&a.tensor(&b), &[2, 2], &[1, 0]).unwrap();
        assert_eq!(dims, vec![2, 2]);
        assert!(swapped.same_ray(&b.tensor(&a), 1e-15));

        let x = Observable::pauli_x().matrix().clone();
        let flipped = apply_on_factors(
            &StateVector::up().tensor(&StateVector::up()),
            &[2, 2],
            &[1],
            &x,
        )
        .unwrap();
        assert!(flipped.same_ray(&StateVector::up().tensor(&StateVector::down()), 1e-15));

        let basis = complete_basis(&StateVector::plus()).unwrap();
        assert!(basis[1].same_ray(&StateVector::minus(), 1e-12));
    }

    #[test]
    fn audit_catches_injected_faults() {
        let l = third_person_start(1.0, 0.0);
        assert!(consistency_audit(&l).is_empty());

        let dup = l.insert_unchecked(RelationalAssignment::new(
            &["s1"],
            &[2],
            "s2",
            Role::QuantumState,
            StateVector::minus(),
        ));
        let v = consistency_audit(&dup);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::DuplicateAssignment);

        let unnormalized = StateVector::new(vec![c(1.0), c(1.0)]).unwrap();
        let bad = l.insert_unchecked(RelationalAssignment::new(
            &["s4"],
            &[2],
            "s2",
            Role::QuantumState,
            unnormalized,
        ));
        let v = consistency_audit(&bad);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::NotNormalized);
    }

    #[test]
    fn audit_checks_factorization() {
        let l = RelationalLedger::new()
            .assign(RelationalAssignment::new(
                &["a"],
                &[2],
                "o",
                Role::OnticState,
                StateVector::up(),
            ))
            .unwrap()
            .assign(RelationalAssignment::new(
                &["b"],
                &[2],
                "o",
                Role::OnticState,
                StateVector::plus(),
            ))
            .unwrap();
        let good = l
            .assign(RelationalAssignment::new(
                &["a", "b"],
                &[2, 2],
                "o",
                Role::OnticState,
                StateVector::up().tensor(&StateVector::plus()),
            ))
            .unwrap();
        assert!(consistency_audit(&good).is_empty());
        let bad = l
            .assign(RelationalAssignment::new(
                &["a", "b"],
                &[2, 2],
                "o",
                Role::OnticState,
                StateVector::up().tensor(&StateVector::minus()),
            ))
            .unwrap();
        let v = consistency_audit(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Factorization);
    }
}
