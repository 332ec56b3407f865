//! The PBR argument as a constraint system.
//!
//! Only support structure enters the constraints. Each block of the system
//! belongs to one observer (or to nobody, in the plain non-relational case)
//! and contributes response variables `ξ(k|λ)` over that observer's ontic
//! labels. A block whose observer performs the PBR measurement also carries
//! the Born-zero constraints on the supports of its preparations.

use std::collections::{BTreeMap, BTreeSet};

use num::{BigRational, Zero};
use serde::Serialize;

use super::{
    solve, Assumption, Constraint, ConstraintSystem, FeasibilityError, FeasibilityVerdict,
    Rational, Relation, Result, Status, SupportRecord, Variable,
};
use crate::hilbert::{
    born_probability, pbr_basis_states, pbr_measurement, pbr_product_states, DensityOperator,
    StateVector, PBR_OUTCOMES, STRUCTURAL_TOL,
};
use crate::ontmodel::{
    delta_model, predicted_probability, predicted_probability_exact, product_model,
    reproduces_born, OnticSpace, OntologicalModel, PreparationProcedure, ResponseFunction, Weight,
};

pub const DEFAULT_OVERLAP_LABEL: &str = "overlap";

/// Id of the PBR measurement in witness models.
const PBR_MEASUREMENT_ID: &str = "PBR";

/// Single-system model for system `system` (`"1"` or `"2"`).
///
/// The ontic labels are `{system}:up`, `{system}:{overlap_label}` and
/// `{system}:plus`, with preparations `{system}:Pup` and `{system}:Pplus`.
/// With `overlap` set, each preparation puts weight 1/2 on its private label
/// and 1/2 on the shared one. Without it both preparations are deltas and
/// the shared label is absent. Only the supports matter downstream.
pub fn single_system_model(
    system: &str,
    overlap_label: &str,
    overlap: bool,
) -> Result<OntologicalModel> {
    let up = format!("{system}:up");
    let shared = format!("{system}:{overlap_label}");
    let plus = format!("{system}:plus");
    let (labels, dist_up, dist_plus) = if overlap {
        let half = || Weight::ratio(1, 2);
        (
            vec![up.clone(), shared.clone(), plus.clone()],
            BTreeMap::from([(up.clone(), half()), (shared.clone(), half())]),
            BTreeMap::from([(shared.clone(), half()), (plus.clone(), half())]),
        )
    } else {
        (
            vec![up.clone(), plus.clone()],
            BTreeMap::from([(up.clone(), Weight::one())]),
            BTreeMap::from([(plus.clone(), Weight::one())]),
        )
    };
    let preparations = vec![
        PreparationProcedure {
            id: format!("{system}:Pup"),
            quantum_state: StateVector::up(),
            distribution: dist_up,
        },
        PreparationProcedure {
            id: format!("{system}:Pplus"),
            quantum_state: StateVector::plus(),
            distribution: dist_plus,
        },
    ];
    Ok(OntologicalModel::new(
        OnticSpace::new(labels)?,
        preparations,
        vec![],
    )?)
}

/// Joint model of two independently prepared systems. Its preparations are
/// ω₁…ω₄ in order.
pub fn pbr_setup_model(overlap_label: &str, overlap: bool) -> Result<OntologicalModel> {
    let m1 = single_system_model("1", overlap_label, overlap)?;
    let m2 = single_system_model("2", overlap_label, overlap)?;
    Ok(product_model(&m1, &m2)?)
}

/// The joint label shared by all four product preparations when both
/// systems overlap.
pub fn lambda_star(overlap_label: &str) -> String {
    format!("(1:{overlap_label},2:{overlap_label})")
}

/// One observer's share of a relational constraint system.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverBlock {
    pub observer: String,
    /// Preparations relative to this observer; only their supports and
    /// quantum states are read.
    pub model: OntologicalModel,
    /// Whether this observer performs the PBR measurement.
    pub measures: bool,
}

struct Block {
    observer: Option<String>,
    atoms: Vec<String>,
    preparations: Vec<(String, StateVector, BTreeSet<String>)>,
    measures: bool,
}

impl Block {
    fn from_model(observer: Option<String>, model: &OntologicalModel, measures: bool) -> Block {
        Block {
            observer,
            atoms: model.ontic_space().labels().to_vec(),
            preparations: model
                .preparations()
                .iter()
                .map(|p| {
                    (
                        p.id.clone(),
                        p.quantum_state.clone(),
                        p.support().into_iter().map(str::to_string).collect(),
                    )
                })
                .collect(),
            measures,
        }
    }

    /// Folds another block into this one: labels are appended in first-seen
    /// order and preparations with the same id pool their supports.
    fn absorb(&mut self, other: &Block) -> Result<()> {
        for a in &other.atoms {
            if !self.atoms.contains(a) {
                self.atoms.push(a.clone());
            }
        }
        for (id, state, support) in &other.preparations {
            match self.preparations.iter_mut().find(|(own, _, _)| own == id) {
                Some((_, own_state, own_support)) => {
                    if own_state.dim() != state.dim() || !own_state.same_ray(state, STRUCTURAL_TOL)
                    {
                        return Err(FeasibilityError::Inconsistency(format!(
                            "preparation {id:?} carries different quantum states in merged blocks"
                        )));
                    }
                    own_support.extend(support.iter().cloned());
                }
                None => self
                    .preparations
                    .push((id.clone(), state.clone(), support.clone())),
            }
        }
        self.measures |= other.measures;
        Ok(())
    }
}

fn tagged(base: String, observer: &Option<String>) -> String {
    match observer {
        Some(o) => format!("{base}@{o}"),
        None => base,
    }
}

/// Outcomes of the PBR measurement with vanishing Born probability for
/// `state`.
fn born_zero_outcomes(state: &StateVector, tol: f64) -> Result<Vec<&'static str>> {
    let rho = DensityOperator::from_pure(state)?;
    let measurement = pbr_measurement();
    let mut zeros = Vec::new();
    for (label, effect) in PBR_OUTCOMES.iter().zip(measurement.effects()) {
        if born_probability(&rho, effect)? <= tol {
            zeros.push(*label);
        }
    }
    Ok(zeros)
}

#[derive(Default)]
struct Builder {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    bounds: Vec<Constraint>,
    supports: Vec<SupportRecord>,
}

impl Builder {
    fn probability(&mut self, id: String, observer: &Option<String>) -> String {
        self.variables.push(Variable {
            id: id.clone(),
            probability: true,
            observer: observer.clone(),
        });
        let mut ub = Constraint::new(
            format!("ub[{id}]"),
            &[(&id, Rational::one())],
            Relation::Le,
            Rational::one(),
        );
        ub.assumption = Assumption::Bound;
        ub.observer = observer.clone();
        self.bounds.push(ub);
        id
    }

    fn push(&mut self, mut c: Constraint, assumption: Assumption, observer: &Option<String>) {
        c.id = tagged(c.id, observer);
        c.assumption = assumption;
        c.observer = observer.clone();
        self.constraints.push(c);
    }

    fn add_block(&mut self, block: &Block, preparation_independence: bool, tol: f64) -> Result<()> {
        let obs = &block.observer;
        let xi = |k: &str, l: &str| tagged(format!("xi[{k}|{l}]"), obs);

        for l in &block.atoms {
            let ids: Vec<String> = PBR_OUTCOMES
                .iter()
                .map(|k| self.probability(xi(k, l), obs))
                .collect();
            let terms: Vec<(&str, Rational)> =
                ids.iter().map(|v| (v.as_str(), Rational::one())).collect();
            self.push(
                Constraint::new(format!("norm[{l}]"), &terms, Relation::Eq, Rational::one()),
                Assumption::ResponseNormalization,
                obs,
            );
        }
        if !block.measures {
            return Ok(());
        }

        if preparation_independence {
            let mut seen = BTreeSet::new();
            for (id, state, support) in &block.preparations {
                self.supports.push(SupportRecord {
                    preparation: id.clone(),
                    observer: obs.clone(),
                    support: block
                        .atoms
                        .iter()
                        .filter(|a| support.contains(*a))
                        .cloned()
                        .collect(),
                });
                for k in born_zero_outcomes(state, tol)? {
                    for l in block.atoms.iter().filter(|a| support.contains(*a)) {
                        if seen.insert((k, l.clone())) {
                            let v = xi(k, l);
                            self.push(
                                Constraint::new(
                                    format!("zero[{k}|{l}]"),
                                    &[(&v, Rational::one())],
                                    Relation::Eq,
                                    Rational::zero(),
                                ),
                                Assumption::BornZero,
                                obs,
                            );
                        }
                    }
                }
            }
        } else {
            let mut per_label: Vec<Vec<String>> = vec![Vec::new(); block.atoms.len()];
            for (id, state, _) in &block.preparations {
                let mus: Vec<String> = block
                    .atoms
                    .iter()
                    .map(|l| self.probability(tagged(format!("mu[{id}|{l}]"), obs), obs))
                    .collect();
                let terms: Vec<(&str, Rational)> =
                    mus.iter().map(|v| (v.as_str(), Rational::one())).collect();
                self.push(
                    Constraint::new(format!("dist[{id}]"), &terms, Relation::Eq, Rational::one()),
                    Assumption::Distribution,
                    obs,
                );
                for (slot, mu) in per_label.iter_mut().zip(&mus) {
                    slot.push(mu.clone());
                }
                for k in born_zero_outcomes(state, tol)? {
                    for (l, mu) in block.atoms.iter().zip(&mus) {
                        let v = xi(k, l);
                        self.push(
                            Constraint::new(
                                format!("excl[{k}|{id}|{l}]"),
                                &[(mu, Rational::one()), (&v, Rational::one())],
                                Relation::Le,
                                Rational::one(),
                            ),
                            Assumption::SupportExclusion,
                            obs,
                        );
                    }
                }
            }
            for (l, mus) in block.atoms.iter().zip(&per_label) {
                let terms: Vec<(&str, Rational)> =
                    mus.iter().map(|v| (v.as_str(), Rational::one())).collect();
                self.push(
                    Constraint::new(
                        format!("disjoint[{l}]"),
                        &terms,
                        Relation::Le,
                        Rational::one(),
                    ),
                    Assumption::SupportExclusivity,
                    obs,
                );
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ConstraintSystem> {
        self.constraints.append(&mut self.bounds);
        ConstraintSystem::new(self.variables, self.constraints, self.supports)
    }
}

fn build_blocks(
    blocks: &[Block],
    preparation_independence: bool,
    tol: f64,
) -> Result<ConstraintSystem> {
    let mut b = Builder::default();
    for block in blocks {
        b.add_block(block, preparation_independence, tol)?;
    }
    b.finish()
}

/// The PBR constraint system over the joint ontic space of two overlapping
/// single-system models.
///
/// With `preparation_independence` the joint supports are the products of
/// the single-system supports, so `(1:o,2:o)` (for `o = overlap_label`)
/// lies in all four of them and inherits all four Born zeros. Without it
/// the joint distributions become free variables `μ(P|λ)` and a label may
/// only carry weight under `P` if it never fires an outcome that `P`
/// forbids.
pub fn build_pbr_system(
    overlap_label: &str,
    preparation_independence: bool,
) -> Result<ConstraintSystem> {
    let model = pbr_setup_model(overlap_label, true)?;
    build_blocks(
        &[Block::from_model(None, &model, true)],
        preparation_independence,
        STRUCTURAL_TOL,
    )
}

/// Observer-indexed system. Blocks sharing an observer name are merged and
/// every variable and constraint carries its observer index.
///
/// With `collapse` all blocks merge into a single unindexed block, which is
/// the non-relational system again.
pub fn build_pbr_system_from(
    blocks: &[ObserverBlock],
    collapse: bool,
    preparation_independence: bool,
) -> Result<ConstraintSystem> {
    let mut merged: Vec<Block> = Vec::new();
    for ob in blocks {
        let key = if collapse {
            None
        } else {
            Some(ob.observer.clone())
        };
        let block = Block::from_model(key.clone(), &ob.model, ob.measures);
        match merged.iter_mut().find(|b| b.observer == key) {
            Some(existing) => existing.absorb(&block)?,
            None => merged.push(block),
        }
    }
    build_blocks(&merged, preparation_independence, STRUCTURAL_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbrOptions {
    pub preparation_independence: bool,
    pub overlap: bool,
    pub tol: f64,
    pub overlap_label: String,
}

impl Default for PbrOptions {
    fn default() -> Self {
        PbrOptions {
            preparation_independence: true,
            overlap: true,
            tol: STRUCTURAL_TOL,
            overlap_label: DEFAULT_OVERLAP_LABEL.to_string(),
        }
    }
}

/// Numerical check that ω_k ⟂ χ_k and that the χ_k are orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityCheck {
    /// `|⟨ω_k|χ_k⟩|` for k = 1..4.
    pub overlaps: Vec<f64>,
    /// Largest entry of `|G − I|` for the Gram matrix of the χ_k.
    pub gram_defect: f64,
    pub tol: f64,
    pub holds: bool,
}

impl OrthogonalityCheck {
    pub fn run(tol: f64) -> Result<OrthogonalityCheck> {
        let omegas = pbr_product_states();
        let chis = pbr_basis_states();
        let mut overlaps = Vec::with_capacity(4);
        for (w, c) in omegas.iter().zip(&chis) {
            overlaps.push(w.inner(c)?.norm());
        }
        let mut gram_defect: f64 = 0.0;
        for (i, a) in chis.iter().enumerate() {
            for (j, b) in chis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                gram_defect = gram_defect.max((a.inner(b)? - target).norm());
            }
        }
        let holds =
            tol.is_finite() && tol > 0.0 && overlaps.iter().all(|o| *o < tol) && gram_defect <= tol;
        Ok(OrthogonalityCheck {
            overlaps,
            gram_defect,
            tol,
            holds,
        })
    }
}

/// How a feasible verdict's witness was re-checked against quantum theory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCheck {
    /// `"joint_model"` (built from the solver's witness) or `"delta_model"`.
    pub kind: String,
    pub model: OntologicalModel,
    /// See [`zero_predictions_hold`].
    pub zero_predictions: bool,
    pub supports_disjoint: bool,
    /// Worst Born deviation, when the model is meant to reproduce Born
    /// probabilities in full.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub born_max_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoGoReport {
    pub preparation_independence: bool,
    pub overlap: bool,
    pub orthogonality: OrthogonalityCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<String>,
    pub variables: usize,
    pub constraints: usize,
    pub expected: Status,
    pub verdict: FeasibilityVerdict,
    /// Certificate constraints written out in full.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_constraints: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessCheck>,
    /// The verdict is the expected one and its witness, if any, passed its
    /// re-check.
    pub holds: bool,
}

/// True when every zero Born prediction of the PBR measurement (as judged
/// at `tol`) is also predicted as zero by `model`'s response function
/// `measurement`. Rational models must give an exact zero; models with
/// float entries must stay within `tol`.
pub fn zero_predictions_hold(
    model: &OntologicalModel,
    measurement: &str,
    tol: f64,
) -> Result<bool> {
    for p in model.preparations() {
        for k in born_zero_outcomes(&p.quantum_state, tol)? {
            let holds = match predicted_probability_exact(model, &p.id, measurement, k)? {
                Some(v) => v.is_zero(),
                None => predicted_probability(model, &p.id, measurement, k)? <= tol,
            };
            if !holds {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn pairwise_disjoint(model: &OntologicalModel) -> bool {
    let supports: Vec<BTreeSet<&str>> = model.preparations().iter().map(|p| p.support()).collect();
    supports
        .iter()
        .enumerate()
        .all(|(i, a)| supports[i + 1..].iter().all(|b| a.is_disjoint(b)))
}

/// Joint model read off a witness of the system without Preparation
/// Independence.
fn witness_joint_model(
    setup: &OntologicalModel,
    witness: &BTreeMap<String, Rational>,
) -> Result<OntologicalModel> {
    let atoms = setup.ontic_space().labels();
    let value = |id: String| -> Result<BigRational> {
        witness
            .get(&id)
            .map(|r| r.0.clone())
            .ok_or_else(|| FeasibilityError::Inconsistency(format!("witness lacks {id}")))
    };
    let mut preparations = Vec::new();
    for p in setup.preparations() {
        let mut distribution = BTreeMap::new();
        for l in atoms {
            let w = value(format!("mu[{}|{l}]", p.id))?;
            if !w.is_zero() {
                distribution.insert(l.clone(), Weight::Exact(w));
            }
        }
        preparations.push(PreparationProcedure {
            id: p.id.clone(),
            quantum_state: p.quantum_state.clone(),
            distribution,
        });
    }
    let mut outcomes: BTreeMap<String, BTreeMap<String, Weight>> = BTreeMap::new();
    for k in PBR_OUTCOMES {
        let row = outcomes.entry(k.to_string()).or_default();
        for l in atoms {
            let w = value(format!("xi[{k}|{l}]"))?;
            if !w.is_zero() {
                row.insert(l.clone(), Weight::Exact(w));
            }
        }
    }
    let response = ResponseFunction {
        measurement: PBR_MEASUREMENT_ID.to_string(),
        quantum_measurement: pbr_measurement(),
        outcomes,
    };
    Ok(OntologicalModel::new(
        setup.ontic_space().clone(),
        preparations,
        vec![response],
    )?)
}

/// Runs the whole chain: orthogonality, single-system models, product
/// model, constraint system, exact solve, and a re-check of whatever the
/// solver returns.
///
/// Fails with [`FeasibilityError::Inconsistency`] when the orthogonality
/// check does not hold at `options.tol` or when the Born zeros found while
/// building the system differ from the expected diagonal pattern.
pub fn pbr_no_go(options: &PbrOptions) -> Result<NoGoReport> {
    let orthogonality = OrthogonalityCheck::run(options.tol)?;
    if !orthogonality.holds {
        return Err(FeasibilityError::Inconsistency(format!(
            "orthogonality check fails at tol {:e}: overlaps {:?}, Gram defect {:e}",
            options.tol, orthogonality.overlaps, orthogonality.gram_defect
        )));
    }

    let setup = pbr_setup_model(&options.overlap_label, options.overlap)?;
    for (k, p) in setup.preparations().iter().enumerate() {
        let zeros = born_zero_outcomes(&p.quantum_state, options.tol)?;
        if zeros != [PBR_OUTCOMES[k]] {
            return Err(FeasibilityError::Inconsistency(format!(
                "preparation {} has Born zeros {zeros:?}, expected [{}]",
                p.id, PBR_OUTCOMES[k]
            )));
        }
    }

    let system = build_blocks(
        &[Block::from_model(None, &setup, true)],
        options.preparation_independence,
        options.tol,
    )?;
    let verdict = solve(&system)?;
    let expected = if options.preparation_independence && options.overlap {
        Status::Infeasible
    } else {
        Status::Feasible
    };

    let mut holds = verdict.status == expected;
    let mut certificate_constraints = None;
    let mut witness = None;
    match (&verdict.certificate, &verdict.witness) {
        (Some(cert), _) => {
            certificate_constraints = Some(
                cert.iter()
                    .map(|id| {
                        system
                            .constraint(id)
                            .map(|c| c.to_string())
                            .unwrap_or_default()
                    })
                    .collect(),
            );
        }
        (None, Some(assignment)) => {
            let check = if options.preparation_independence {
                let omegas = setup
                    .preparations()
                    .iter()
                    .map(|p| p.quantum_state.clone())
                    .collect::<Vec<_>>();
                let model = delta_model(&omegas, &[pbr_measurement()])?;
                let born = reproduces_born(&model, 1e-10)?;
                WitnessCheck {
                    kind: "delta_model".into(),
                    zero_predictions: zero_predictions_hold(&model, "M0", options.tol)?,
                    supports_disjoint: pairwise_disjoint(&model),
                    born_max_deviation: Some(born.max_deviation),
                    model,
                }
            } else {
                let model = witness_joint_model(&setup, assignment)?;
                WitnessCheck {
                    kind: "joint_model".into(),
                    zero_predictions: zero_predictions_hold(
                        &model,
                        PBR_MEASUREMENT_ID,
                        options.tol,
                    )?,
                    supports_disjoint: pairwise_disjoint(&model),
                    born_max_deviation: None,
                    model,
                }
            };
            holds &= check.zero_predictions
                && check.supports_disjoint
                && check.born_max_deviation.is_none_or(|d| d <= 1e-10);
            witness = Some(check);
        }
        (None, None) => {
            return Err(FeasibilityError::Inconsistency(
                "verdict without witness or certificate".into(),
            ));
        }
    }

    Ok(NoGoReport {
        preparation_independence: options.preparation_independence,
        overlap: options.overlap,
        orthogonality,
        lambda_star: (options.preparation_independence && options.overlap)
            .then(|| lambda_star(&options.overlap_label)),
        variables: system.variables().len(),
        constraints: system.constraints().len(),
        expected,
        verdict,
        certificate_constraints,
        witness,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_system_contains_the_contradiction_at_lambda_star() {
        let sys = build_pbr_system(DEFAULT_OVERLAP_LABEL, true).unwrap();
        let star = lambda_star(DEFAULT_OVERLAP_LABEL);
        assert!(sys.constraint(&format!("norm[{star}]")).is_some());
        for k in PBR_OUTCOMES {
            assert!(
                sys.constraint(&format!("zero[{k}|{star}]")).is_some(),
                "{k}"
            );
        }
        // 3 × 3 joint labels, four outcomes each.
        assert_eq!(sys.variables().len(), 4 * 9);
    }

    #[test]
    fn no_pi_system_has_no_forced_label() {
        let sys = build_pbr_system(DEFAULT_OVERLAP_LABEL, false).unwrap();
        assert!(sys
            .constraints()
            .iter()
            .all(|c| c.assumption != Assumption::BornZero));
        assert!(sys.supports().is_empty());
    }

    #[test]
    fn default_no_go_is_infeasible_with_five_constraints() {
        let report = pbr_no_go(&PbrOptions::default()).unwrap();
        assert!(report.holds);
        let cert = report.verdict.certificate.unwrap();
        let star = lambda_star(DEFAULT_OVERLAP_LABEL);
        let mut expected = vec![format!("norm[{star}]")];
        expected.extend(PBR_OUTCOMES.iter().map(|k| format!("zero[{k}|{star}]")));
        let mut got = cert.clone();
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn relaxations_are_feasible() {
        let no_pi = pbr_no_go(&PbrOptions {
            preparation_independence: false,
            ..PbrOptions::default()
        })
        .unwrap();
        assert_eq!(no_pi.verdict.status, Status::Feasible);
        let w = no_pi.witness.unwrap();
        assert!(w.zero_predictions && w.supports_disjoint, "{w:?}");

        let no_overlap = pbr_no_go(&PbrOptions {
            overlap: false,
            ..PbrOptions::default()
        })
        .unwrap();
        assert!(no_overlap.holds);
        assert_eq!(no_overlap.witness.unwrap().kind, "delta_model");
    }

    #[test]
    fn collapsed_single_block_matches_plain_system() {
        let model = pbr_setup_model(DEFAULT_OVERLAP_LABEL, true).unwrap();
        let blocks = [ObserverBlock {
            observer: "s".into(),
            model,
            measures: true,
        }];
        let collapsed = build_pbr_system_from(&blocks, true, true).unwrap();
        let plain = build_pbr_system(DEFAULT_OVERLAP_LABEL, true).unwrap();
        assert_eq!(collapsed.to_canonical_json(), plain.to_canonical_json());
    }

    #[test]
    fn tiny_tolerance_is_unmeetable() {
        let err = pbr_no_go(&PbrOptions {
            tol: 1e-30,
            ..PbrOptions::default()
        });
        assert!(
            matches!(err, Err(FeasibilityError::Inconsistency(_))),
            "{err:?}"
        );
    }
}
