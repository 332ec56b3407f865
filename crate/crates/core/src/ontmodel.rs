//! Ontological models over finite ontic spaces.
//!
//! A model assigns every preparation a distribution `p(λ|P)` over an
//! explicitly enumerated ontic space and every measurement a response
//! function `ξ(k|λ)`. Weights are either exact rationals or floats; support
//! questions are answered exactly whenever the weights are rational.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num::{BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hilbert::{
    born_probability, DensityOperator, HilbertError, Measurement, StateVector, STRUCTURAL_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("ontic space is empty")]
    EmptyOnticSpace,
    #[error("duplicate {kind} {id:?}")]
    Duplicate { kind: &'static str, id: String },
    #[error("{context} refers to unknown ontic state {label:?}")]
    UnknownLabel { context: String, label: String },
    #[error("unknown preparation {0:?}")]
    UnknownPreparation(String),
    #[error("unknown measurement {0:?}")]
    UnknownMeasurement(String),
    #[error("measurement {measurement:?} has no outcome {outcome:?}")]
    UnknownOutcome {
        measurement: String,
        outcome: String,
    },
    #[error("weight {value} in {context} lies outside [0, 1]")]
    WeightOutOfRange { context: String, value: String },
    #[error("distribution of preparation {prep:?} sums to {sum}")]
    DistributionSum { prep: String, sum: String },
    #[error("response of {measurement:?} at {label:?} sums to {sum}")]
    ResponseSum {
        measurement: String,
        label: String,
        sum: String,
    },
    #[error("classification needs at least two distinct quantum states, found {0}")]
    TooFewStates(usize),
    #[error("ontic label {0:?} occurs in both factor models")]
    SharedLabel(String),
    #[error("invalid weight {0:?}")]
    BadWeight(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// A probability: exact rational or float.
///
/// Serialized as a `"p/q"` string when exact and as a JSON number otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Exact(BigRational),
    Float(f64),
}

impl Weight {
    pub fn zero() -> Self {
        Weight::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Weight::Exact(BigRational::one())
    }

    pub fn ratio(numer: i64, denom: i64) -> Self {
        Weight::Exact(BigRational::new(numer.into(), denom.into()))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Weight::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Weight::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            Weight::Exact(r) => Some(r),
            Weight::Float(_) => None,
        }
    }

    /// Strictly positive. Exact for rationals; floats count as positive only
    /// when they are not a rounding residue of zero.
    pub fn is_positive(&self) -> bool {
        match self {
            Weight::Exact(r) => r.is_positive(),
            Weight::Float(x) => *x > STRUCTURAL_TOL,
        }
    }

    fn in_unit_interval(&self) -> bool {
        match self {
            Weight::Exact(r) => !r.is_negative() && *r <= BigRational::one(),
            Weight::Float(x) => (-STRUCTURAL_TOL..=1.0 + STRUCTURAL_TOL).contains(x),
        }
    }

    pub fn mul(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Exact(a), Weight::Exact(b)) => Weight::Exact(a * b),
            _ => Weight::Float(self.to_f64() * other.to_f64()),
        }
    }

    fn add(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Exact(a), Weight::Exact(b)) => Weight::Exact(a + b),
            _ => Weight::Float(self.to_f64() + other.to_f64()),
        }
    }

    fn is_one(&self) -> bool {
        match self {
            Weight::Exact(r) => r.is_one(),
            Weight::Float(x) => (x - 1.0).abs() <= STRUCTURAL_TOL,
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Exact(r) => write!(f, "{r}"),
            Weight::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Weight::Exact(r) => s.serialize_str(&format_rational(r)),
            Weight::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => parse_rational(&t)
                .map(Weight::Exact)
                .map_err(serde::de::Error::custom),
            Raw::Number(x) => Ok(Weight::Float(x)),
        }
    }
}

/// `"p/q"`, with integers written as `"p/1"`.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(text: &str) -> Result<BigRational> {
    let bad = || ModelError::BadWeight(text.to_string());
    let r = BigRational::from_str(text.trim()).map_err(|_| bad())?;
    Ok(r)
}

/// The finite set Λ of ontic states.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OnticSpace {
    labels: Vec<String>,
}

impl OnticSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ModelError::EmptyOnticSpace);
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ModelError::Duplicate {
                    kind: "ontic state",
                    id: l.clone(),
                });
            }
        }
        Ok(OnticSpace { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

impl<'de> Deserialize<'de> for OnticSpace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        OnticSpace::new(labels).map_err(serde::de::Error::custom)
    }
}

/// A preparation procedure: its quantum state and the epistemic
/// distribution `p(λ|P)` it induces. Labels absent from the map have
/// weight zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationProcedure {
    pub id: String,
    pub quantum_state: StateVector,
    pub distribution: BTreeMap<String, Weight>,
}

impl PreparationProcedure {
    pub fn weight(&self, label: &str) -> Weight {
        self.distribution
            .get(label)
            .cloned()
            .unwrap_or_else(Weight::zero)
    }

    /// Labels with strictly positive weight, in map order.
    pub fn support(&self) -> BTreeSet<&str> {
        self.distribution
            .iter()
            .filter(|(_, w)| w.is_positive())
            .map(|(l, _)| l.as_str())
            .collect()
    }
}

/// Response function `ξ(k|λ)` of one measurement, stored as
/// outcome → (label → weight). Missing entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseFunction {
    pub measurement: String,
    pub quantum_measurement: Measurement,
    pub outcomes: BTreeMap<String, BTreeMap<String, Weight>>,
}

impl ResponseFunction {
    pub fn xi(&self, outcome: &str, label: &str) -> Weight {
        self.outcomes
            .get(outcome)
            .and_then(|row| row.get(label))
            .cloned()
            .unwrap_or_else(Weight::zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OntologicalModel {
    ontic_space: OnticSpace,
    preparations: Vec<PreparationProcedure>,
    responses: Vec<ResponseFunction>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    ontic_space: OnticSpace,
    preparations: Vec<PreparationProcedure>,
    #[serde(default)]
    responses: Vec<ResponseFunction>,
}

impl<'de> Deserialize<'de> for OntologicalModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ModelRepr::deserialize(d)?;
        OntologicalModel::new(r.ontic_space, r.preparations, r.responses)
            .map_err(serde::de::Error::custom)
    }
}

fn sum_weights<'a>(ws: impl Iterator<Item = &'a Weight>) -> Weight {
    ws.fold(Weight::zero(), |acc, w| acc.add(w))
}

impl OntologicalModel {
    pub fn new(
        ontic_space: OnticSpace,
        preparations: Vec<PreparationProcedure>,
        responses: Vec<ResponseFunction>,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for p in &preparations {
            if !ids.insert(p.id.as_str()) {
                return Err(ModelError::Duplicate {
                    kind: "preparation",
                    id: p.id.clone(),
                });
            }
            p.quantum_state.ensure_normalized()?;
            let context = format!("preparation {:?}", p.id);
            for (label, w) in &p.distribution {
                if !ontic_space.contains(label) {
                    return Err(ModelError::UnknownLabel {
                        context,
                        label: label.clone(),
                    });
                }
                if !w.in_unit_interval() {
                    return Err(ModelError::WeightOutOfRange {
                        context,
                        value: w.to_string(),
                    });
                }
            }
            let total = sum_weights(p.distribution.values());
            if !total.is_one() {
                return Err(ModelError::DistributionSum {
                    prep: p.id.clone(),
                    sum: total.to_string(),
                });
            }
        }

        let mut ids = BTreeSet::new();
        for r in &responses {
            if !ids.insert(r.measurement.as_str()) {
                return Err(ModelError::Duplicate {
                    kind: "measurement",
                    id: r.measurement.clone(),
                });
            }
            let known: BTreeSet<&str> = r.quantum_measurement.labels().collect();
            for (outcome, row) in &r.outcomes {
                if !known.contains(outcome.as_str()) {
                    return Err(ModelError::UnknownOutcome {
                        measurement: r.measurement.clone(),
                        outcome: outcome.clone(),
                    });
                }
                let context = format!("response {:?}/{:?}", r.measurement, outcome);
                for (label, w) in row {
                    if !ontic_space.contains(label) {
                        return Err(ModelError::UnknownLabel {
                            context,
                            label: label.clone(),
                        });
                    }
                    if !w.in_unit_interval() {
                        return Err(ModelError::WeightOutOfRange {
                            context,
                            value: w.to_string(),
                        });
                    }
                }
            }
            for label in ontic_space.labels() {
                let total = sum_weights(r.outcomes.values().filter_map(|row| row.get(label)));
                if !total.is_one() {
                    return Err(ModelError::ResponseSum {
                        measurement: r.measurement.clone(),
                        label: label.clone(),
                        sum: total.to_string(),
                    });
                }
            }
        }

        Ok(OntologicalModel {
            ontic_space,
            preparations,
            responses,
        })
    }

    pub fn ontic_space(&self) -> &OnticSpace {
        &self.ontic_space
    }

    pub fn preparations(&self) -> &[PreparationProcedure] {
        &self.preparations
    }

    pub fn responses(&self) -> &[ResponseFunction] {
        &self.responses
    }

    pub fn preparation(&self, id: &str) -> Result<&PreparationProcedure> {
        self.preparations
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| ModelError::UnknownPreparation(id.to_string()))
    }

    pub fn response(&self, measurement: &str) -> Result<&ResponseFunction> {
        self.responses
            .iter()
            .find(|r| r.measurement == measurement)
            .ok_or_else(|| ModelError::UnknownMeasurement(measurement.to_string()))
    }

    fn predicted_weight(&self, prep: &str, meas: &str, outcome: &str) -> Result<Weight> {
        let p = self.preparation(prep)?;
        let r = self.response(meas)?;
        if r.quantum_measurement.effect(outcome).is_none() {
            return Err(ModelError::UnknownOutcome {
                measurement: meas.to_string(),
                outcome: outcome.to_string(),
            });
        }
        Ok(self
            .ontic_space
            .labels()
            .iter()
            .fold(Weight::zero(), |acc, l| {
                acc.add(&r.xi(outcome, l).mul(&p.weight(l)))
            }))
    }
}

/// `Σ_λ ξ(k|λ) p(λ|P)`.
pub fn predicted_probability(
    model: &OntologicalModel,
    prep: &str,
    meas: &str,
    outcome: &str,
) -> Result<f64> {
    Ok(model
        .predicted_weight(prep, meas, outcome)?
        .to_f64()
        .clamp(0.0, 1.0))
}

/// Exact version of [`predicted_probability`]; `None` when a float weight is
/// involved.
pub fn predicted_probability_exact(
    model: &OntologicalModel,
    prep: &str,
    meas: &str,
    outcome: &str,
) -> Result<Option<BigRational>> {
    Ok(model
        .predicted_weight(prep, meas, outcome)?
        .exact()
        .cloned())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BornDeviation {
    pub preparation: String,
    pub measurement: String,
    pub outcome: String,
    pub predicted: f64,
    pub born: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BornCheck {
    pub reproduces: bool,
    pub max_deviation: f64,
    pub worst: Option<BornDeviation>,
}

/// Compares every model prediction with `Tr(ρ E_k)`.
pub fn reproduces_born(model: &OntologicalModel, tol: f64) -> Result<BornCheck> {
    let mut worst: Option<BornDeviation> = None;
    for p in &model.preparations {
        let rho = DensityOperator::from_pure(&p.quantum_state)?;
        for r in &model.responses {
            for effect in r.quantum_measurement.effects() {
                let predicted =
                    predicted_probability(model, &p.id, &r.measurement, effect.label())?;
                let born = born_probability(&rho, effect)?;
                let deviation = (predicted - born).abs();
                if worst.as_ref().is_none_or(|w| deviation > w.deviation) {
                    worst = Some(BornDeviation {
                        preparation: p.id.clone(),
                        measurement: r.measurement.clone(),
                        outcome: effect.label().to_string(),
                        predicted,
                        born,
                        deviation,
                    });
                }
            }
        }
    }
    let max_deviation = worst.as_ref().map_or(0.0, |w| w.deviation);
    Ok(BornCheck {
        reproduces: max_deviation <= tol,
        max_deviation,
        worst,
    })
}

/// First ontic state (in Λ order) in the support of both preparations.
pub fn overlap_exists(
    model: &OntologicalModel,
    prep_a: &str,
    prep_b: &str,
) -> Result<Option<String>> {
    let a = model.preparation(prep_a)?;
    let b = model.preparation(prep_b)?;
    Ok(model
        .ontic_space
        .labels()
        .iter()
        .find(|l| a.weight(l).mul(&b.weight(l)).is_positive())
        .cloned())
}

/// Quantum states are distinct when `|⟨ψ|φ⟩| < 1 − 1e-12`.
pub fn distinct_states(a: &StateVector, b: &StateVector) -> bool {
    !a.same_ray(b, STRUCTURAL_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiClass {
    PsiOntic,
    PsiEpistemic,
}

impl fmt::Display for PsiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiClass::PsiOntic => "psi_ontic",
            PsiClass::PsiEpistemic => "psi_epistemic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapWitness {
    pub prep_a: String,
    pub prep_b: String,
    pub ontic_state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub class: PsiClass,
    pub witness: Option<OverlapWitness>,
}

fn count_distinct_states(model: &OntologicalModel) -> usize {
    let mut reps: Vec<&StateVector> = Vec::new();
    for p in &model.preparations {
        if reps.iter().all(|r| distinct_states(r, &p.quantum_state)) {
            reps.push(&p.quantum_state);
        }
    }
    reps.len()
}

/// ψ-epistemic iff two preparations of distinct quantum states share an
/// ontic state; overlap between preparations of the same state is ignored.
pub fn classify(model: &OntologicalModel) -> Result<Classification> {
    let n = count_distinct_states(model);
    if n < 2 {
        return Err(ModelError::TooFewStates(n));
    }
    let preps = &model.preparations;
    for (i, a) in preps.iter().enumerate() {
        for b in &preps[i + 1..] {
            if !distinct_states(&a.quantum_state, &b.quantum_state) {
                continue;
            }
            if let Some(l) = overlap_exists(model, &a.id, &b.id)? {
                return Ok(Classification {
                    class: PsiClass::PsiEpistemic,
                    witness: Some(OverlapWitness {
                        prep_a: a.id.clone(),
                        prep_b: b.id.clone(),
                        ontic_state: l,
                    }),
                });
            }
        }
    }
    Ok(Classification {
        class: PsiClass::PsiOntic,
        witness: None,
    })
}

/// ψ-complete: the map from quantum states to supports is well defined and
/// injective, every support is a single ontic state, and the supports cover Λ.
pub fn is_psi_complete(model: &OntologicalModel) -> bool {
    // (representative state, its singleton support)
    let mut classes: Vec<(&StateVector, &str)> = Vec::new();
    for p in &model.preparations {
        let support = p.support();
        if support.len() != 1 {
            return false;
        }
        let label = *support.iter().next().expect("len 1");
        match classes
            .iter()
            .find(|(s, _)| !distinct_states(s, &p.quantum_state))
        {
            Some((_, l)) if *l != label => return false,
            Some(_) => {}
            None => {
                if classes.iter().any(|(_, l)| *l == label) {
                    return false;
                }
                classes.push((&p.quantum_state, label));
            }
        }
    }
    let covered: BTreeSet<&str> = classes.iter().map(|(_, l)| *l).collect();
    model
        .ontic_space
        .labels()
        .iter()
        .all(|l| covered.contains(l.as_str()))
}

/// Harrigan–Spekkens position of a model. ψ-supplemented means ψ-ontic but
/// not ψ-complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Taxonomy {
    pub class: PsiClass,
    pub psi_complete: bool,
    pub psi_supplemented: bool,
    pub witness: Option<OverlapWitness>,
}

pub fn taxonomy(model: &OntologicalModel) -> Result<Taxonomy> {
    let Classification { class, witness } = classify(model)?;
    let psi_complete = class == PsiClass::PsiOntic && is_psi_complete(model);
    Ok(Taxonomy {
        class,
        psi_complete,
        psi_supplemented: class == PsiClass::PsiOntic && !psi_complete,
        witness,
    })
}

fn pair_label(a: &str, b: &str) -> String {
    format!("({a},{b})")
}

/// Product of two models under preparation independence.
///
/// Ontic states are pairs `(λ₁,λ₂)`, preparations are all pairs with
/// `p(λ₁,λ₂|Pa,Pb) = p(λ₁|Pa)·p(λ₂|Pb)` and joint state `ψa ⊗ ψb`, and
/// responses are products over product measurements. Pairs are enumerated
/// with the first factor varying slowest.
pub fn product_model(m1: &OntologicalModel, m2: &OntologicalModel) -> Result<OntologicalModel> {
    if let Some(shared) = m1
        .ontic_space
        .labels()
        .iter()
        .find(|l| m2.ontic_space.contains(l))
    {
        return Err(ModelError::SharedLabel(shared.clone()));
    }
    let labels: Vec<String> = m1
        .ontic_space
        .labels()
        .iter()
        .flat_map(|a| {
            m2.ontic_space
                .labels()
                .iter()
                .map(move |b| pair_label(a, b))
        })
        .collect();

    let mut preparations = Vec::new();
    for pa in &m1.preparations {
        for pb in &m2.preparations {
            let mut distribution = BTreeMap::new();
            for (la, wa) in &pa.distribution {
                for (lb, wb) in &pb.distribution {
                    let w = wa.mul(wb);
                    if w.is_positive() {
                        distribution.insert(pair_label(la, lb), w);
                    }
                }
            }
            preparations.push(PreparationProcedure {
                id: pair_label(&pa.id, &pb.id),
                quantum_state: pa.quantum_state.tensor(&pb.quantum_state),
                distribution,
            });
        }
    }

    let mut responses = Vec::new();
    for ra in &m1.responses {
        for rb in &m2.responses {
            let quantum_measurement = ra.quantum_measurement.tensor(&rb.quantum_measurement);
            let mut outcomes = BTreeMap::new();
            for ka in ra.quantum_measurement.labels() {
                for kb in rb.quantum_measurement.labels() {
                    let mut row = BTreeMap::new();
                    for la in m1.ontic_space.labels() {
                        for lb in m2.ontic_space.labels() {
                            let w = ra.xi(ka, la).mul(&rb.xi(kb, lb));
                            if w.is_positive() {
                                row.insert(pair_label(la, lb), w);
                            }
                        }
                    }
                    outcomes.insert(pair_label(ka, kb), row);
                }
            }
            responses.push(ResponseFunction {
                measurement: pair_label(&ra.measurement, &rb.measurement),
                quantum_measurement,
                outcomes,
            });
        }
    }

    OntologicalModel::new(OnticSpace::new(labels)?, preparations, responses)
}

/// Canonical ψ-complete model: one ontic state `lambda{i}` per input state,
/// preparations `P{i}` that are deltas on their own ontic state, and
/// responses `M{j}` equal to the Born probabilities of each ontic state's
/// quantum state.
pub fn delta_model(
    states: &[StateVector],
    measurements: &[Measurement],
) -> Result<OntologicalModel> {
    let labels: Vec<String> = (0..states.len()).map(|i| format!("lambda{i}")).collect();
    let preparations = states
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (s, l))| PreparationProcedure {
            id: format!("P{i}"),
            quantum_state: s.clone(),
            distribution: BTreeMap::from([(l.clone(), Weight::one())]),
        })
        .collect();
    let mut responses = Vec::new();
    for (j, m) in measurements.iter().enumerate() {
        let mut outcomes: BTreeMap<String, BTreeMap<String, Weight>> = BTreeMap::new();
        for (s, l) in states.iter().zip(&labels) {
            let rho = DensityOperator::from_pure(s)?;
            for e in m.effects() {
                let p = born_probability(&rho, e)?;
                outcomes
                    .entry(e.label().to_string())
                    .or_default()
                    .insert(l.clone(), Weight::Float(p));
            }
        }
        responses.push(ResponseFunction {
            measurement: format!("M{j}"),
            quantum_measurement: m.clone(),
            outcomes,
        });
    }
    OntologicalModel::new(OnticSpace::new(labels)?, preparations, responses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn updown() -> Measurement {
        Measurement::projective(&["up", "down"], &[StateVector::up(), StateVector::down()]).unwrap()
    }

    fn delta() -> OntologicalModel {
        delta_model(&[StateVector::up(), StateVector::plus()], &[updown()]).unwrap()
    }

    /// Three ontic states, two preparations with uniform (hence overlapping)
    /// distributions, deterministic responses.
    fn uniform_overlap() -> OntologicalModel {
        let space = OnticSpace::new(["a", "b", "c"]).unwrap();
        let uniform: BTreeMap<String, Weight> = ["a", "b", "c"]
            .iter()
            .map(|l| (l.to_string(), Weight::ratio(1, 3)))
            .collect();
        let preps = vec![
            PreparationProcedure {
                id: "Pup".into(),
                quantum_state: StateVector::up(),
                distribution: uniform.clone(),
            },
            PreparationProcedure {
                id: "Pplus".into(),
                quantum_state: StateVector::plus(),
                distribution: uniform,
            },
        ];
        let resp = ResponseFunction {
            measurement: "Z".into(),
            quantum_measurement: updown(),
            outcomes: BTreeMap::from([
                (
                    "up".to_string(),
                    BTreeMap::from([
                        ("a".to_string(), Weight::one()),
                        ("b".to_string(), Weight::ratio(1, 2)),
                    ]),
                ),
                (
                    "down".to_string(),
                    BTreeMap::from([
                        ("b".to_string(), Weight::ratio(1, 2)),
                        ("c".to_string(), Weight::one()),
                    ]),
                ),
            ]),
        };
        OntologicalModel::new(space, preps, vec![resp]).unwrap()
    }

    #[test]
    fn predicted_probability_examples() {
        let m = delta();
        assert_eq!(predicted_probability(&m, "P0", "M0", "up").unwrap(), 1.0);
        let half = predicted_probability(&m, "P1", "M0", "up").unwrap();
        let oracle = StateVector::up().fidelity(&StateVector::plus()).unwrap();
        assert!((half - oracle).abs() < 1e-12);
        for p in ["P0", "P1"] {
            let total: f64 = ["up", "down"]
                .iter()
                .map(|k| predicted_probability(&m, p, "M0", k).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn predicted_probability_is_exact_for_rational_models() {
        let m = uniform_overlap();
        let p = predicted_probability_exact(&m, "Pup", "Z", "up")
            .unwrap()
            .unwrap();
        assert_eq!(p, BigRational::new(1.into(), 2.into()));
        assert!(predicted_probability_exact(&delta(), "P0", "M0", "up")
            .unwrap()
            .is_none());
    }

    #[test]
    fn unknown_identifiers_rejected() {
        let m = delta();
        assert!(matches!(
            predicted_probability(&m, "nope", "M0", "up"),
            Err(ModelError::UnknownPreparation(_))
        ));
        assert!(matches!(
            predicted_probability(&m, "P0", "nope", "up"),
            Err(ModelError::UnknownMeasurement(_))
        ));
        assert!(matches!(
            predicted_probability(&m, "P0", "M0", "sideways"),
            Err(ModelError::UnknownOutcome { .. })
        ));
    }

    #[test]
    fn reproduces_born_examples() {
        let check = reproduces_born(&delta(), 1e-10).unwrap();
        assert!(check.reproduces, "{check:?}");

        let mut corrupted = delta();
        let row = corrupted.responses[0].outcomes.get_mut("up").unwrap();
        row.insert("lambda1".into(), Weight::Float(0.9));
        corrupted.responses[0]
            .outcomes
            .get_mut("down")
            .unwrap()
            .insert("lambda1".into(), Weight::Float(0.1));
        let check = reproduces_born(&corrupted, 1e-10).unwrap();
        assert!(!check.reproduces);
        let worst = check.worst.unwrap();
        assert_eq!(worst.preparation, "P1");
        assert!((worst.deviation - 0.4).abs() < 1e-12);

        let empty = OntologicalModel::new(OnticSpace::new(["x"]).unwrap(), vec![], vec![]).unwrap();
        let check = reproduces_born(&empty, 1e-10).unwrap();
        assert!(check.reproduces);
        assert!(check.worst.is_none());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_exists(&delta(), "P0", "P1").unwrap(), None);
        assert_eq!(
            overlap_exists(&uniform_overlap(), "Pup", "Pplus")
                .unwrap()
                .as_deref(),
            Some("a")
        );
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(&delta()).unwrap().class, PsiClass::PsiOntic);
        let c = classify(&uniform_overlap()).unwrap();
        assert_eq!(c.class, PsiClass::PsiEpistemic);
        assert_eq!(c.witness.unwrap().ontic_state, "a");

        // Two preparations of the same state overlap, plus a third disjoint
        // state: the same-state overlap does not count.
        let space = OnticSpace::new(["a", "b", "c"]).unwrap();
        let preps = vec![
            PreparationProcedure {
                id: "P".into(),
                quantum_state: StateVector::up(),
                distribution: BTreeMap::from([
                    ("a".into(), Weight::ratio(1, 2)),
                    ("b".into(), Weight::ratio(1, 2)),
                ]),
            },
            PreparationProcedure {
                id: "P'".into(),
                quantum_state: StateVector::up().scaled(num_complex::Complex64::new(0.0, 1.0)),
                distribution: BTreeMap::from([("b".into(), Weight::one())]),
            },
            PreparationProcedure {
                id: "Q".into(),
                quantum_state: StateVector::down(),
                distribution: BTreeMap::from([("c".into(), Weight::one())]),
            },
        ];
        let m = OntologicalModel::new(space, preps, vec![]).unwrap();
        assert_eq!(classify(&m).unwrap().class, PsiClass::PsiOntic);
        assert!(!is_psi_complete(&m));
    }

    #[test]
    fn classification_needs_two_distinct_states() {
        let m = delta_model(&[StateVector::up()], &[]).unwrap();
        assert_eq!(classify(&m).unwrap_err(), ModelError::TooFewStates(1));
    }

    #[test]
    fn psi_completeness_examples() {
        assert!(is_psi_complete(&delta()));

        let mut extra = delta();
        extra.ontic_space = OnticSpace::new(["lambda0", "lambda1", "unused"]).unwrap();
        assert!(!is_psi_complete(&extra));

        let space = OnticSpace::new(["a", "b", "c"]).unwrap();
        let preps = vec![
            PreparationProcedure {
                id: "P".into(),
                quantum_state: StateVector::up(),
                distribution: BTreeMap::from([
                    ("a".into(), Weight::ratio(1, 2)),
                    ("b".into(), Weight::ratio(1, 2)),
                ]),
            },
            PreparationProcedure {
                id: "Q".into(),
                quantum_state: StateVector::down(),
                distribution: BTreeMap::from([("c".into(), Weight::one())]),
            },
        ];
        let supplemented = OntologicalModel::new(space, preps, vec![]).unwrap();
        let t = taxonomy(&supplemented).unwrap();
        assert_eq!(t.class, PsiClass::PsiOntic);
        assert!(!t.psi_complete);
        assert!(t.psi_supplemented);
    }

    #[test]
    fn product_of_deltas_is_delta_on_pairs() {
        let a = delta_model(&[StateVector::up(), StateVector::down()], &[]).unwrap();
        let b = OntologicalModel::new(
            OnticSpace::new(["mu0", "mu1"]).unwrap(),
            vec![
                PreparationProcedure {
                    id: "Q0".into(),
                    quantum_state: StateVector::plus(),
                    distribution: BTreeMap::from([("mu0".into(), Weight::one())]),
                },
                PreparationProcedure {
                    id: "Q1".into(),
                    quantum_state: StateVector::minus(),
                    distribution: BTreeMap::from([("mu1".into(), Weight::one())]),
                },
            ],
            vec![],
        )
        .unwrap();
        let joint = product_model(&a, &b).unwrap();
        assert_eq!(joint.ontic_space().len(), 4);
        for p in joint.preparations() {
            assert_eq!(p.support().len(), 1);
            assert_eq!(p.weight(p.support().iter().next().unwrap()), Weight::one());
        }
        assert!(is_psi_complete(&joint));
    }

    #[test]
    fn product_rejects_shared_labels() {
        assert_eq!(
            product_model(&delta(), &delta()).unwrap_err(),
            ModelError::SharedLabel("lambda0".into())
        );
    }

    #[test]
    fn validation_errors() {
        let space = OnticSpace::new(["a"]).unwrap();
        let prep = |w: Weight| PreparationProcedure {
            id: "P".into(),
            quantum_state: StateVector::up(),
            distribution: BTreeMap::from([("a".into(), w)]),
        };
        assert!(matches!(
            OntologicalModel::new(space.clone(), vec![prep(Weight::ratio(1, 2))], vec![]),
            Err(ModelError::DistributionSum { .. })
        ));
        assert!(matches!(
            OntologicalModel::new(space.clone(), vec![prep(Weight::ratio(3, 2))], vec![]),
            Err(ModelError::WeightOutOfRange { .. })
        ));
        assert!(OnticSpace::new(Vec::<String>::new()).is_err());
        assert!(OnticSpace::new(["a", "a"]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_exact_weights() {
        let m = uniform_overlap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""a":"1/3""#), "{text}");
        let back: OntologicalModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let truncated = &text[..text.len() / 2];
        assert!(serde_json::from_str::<OntologicalModel>(truncated).is_err());
    }
}
