//! The Third Person scenario and the two relational PBR scenarios.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    consistency_audit, eel_definite, interact, permute_factors, prepare, Event,
    RelationalAssignment, RelationalLedger, Result, Role, RqmError,
};
use crate::feasibility::{
    build_pbr_system, build_pbr_system_from, lambda_star, pbr_setup_model, solve, ConstraintSystem,
    FeasibilityVerdict, ObserverBlock, Status, DEFAULT_OVERLAP_LABEL,
};
use crate::hilbert::{Observable, StateVector, AGGREGATE_TOL, STRUCTURAL_TOL};
use crate::ontmodel::{OnticSpace, OntologicalModel, PreparationProcedure, Weight};

pub const SCENARIOS: [&str; 3] = [
    "third-person",
    "relational-pbr-single",
    "relational-pbr-alice-bob",
];

/// Names used for the systems and observers of a scenario. Each scenario
/// reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Observers {
    pub system1: String,
    pub system2: String,
    pub participant: String,
    pub bystander: String,
    pub preparer: String,
    pub measurer: String,
    pub alice: String,
    pub bob: String,
}

impl Default for Observers {
    fn default() -> Self {
        Observers {
            system1: "s1".into(),
            system2: "s2".into(),
            participant: "s2".into(),
            bystander: "s3".into(),
            preparer: "s".into(),
            measurer: "s*".into(),
            alice: "A".into(),
            bob: "B".into(),
        }
    }
}

/// How `λ_{12/s*}` is represented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SStarMode {
    /// After its interaction `s*` holds a definite product state, with the
    /// preparers' records definite too.
    #[default]
    PostInteraction,
    /// `s*` does not know the settings: an equal superposition over them,
    /// each branch entangled with the preparers' records.
    Entangled,
}

/// Which of `|↑⟩`, `|+⟩` a preparer chooses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Up,
    Plus,
}

impl Setting {
    fn index(self) -> usize {
        match self {
            Setting::Up => 0,
            Setting::Plus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Amplitudes of `|+⟩` and `|−⟩` in the Third Person scenario, written
    /// as `[re, im]`.
    pub c1: Complex64,
    pub c2: Complex64,
    /// Seed for outcome sampling. Without a seed and without an explicit
    /// outcome, the Third Person scenario reports outcome +1.
    pub seed: Option<u64>,
    pub outcome: Option<f64>,
    pub observers: Observers,
    /// Preparation settings for the first and second system.
    pub settings: [Setting; 2],
    pub collapse_indices: bool,
    pub s_star_mode: SStarMode,
    pub overlap_label: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        ScenarioConfig {
            c1: h,
            c2: h,
            seed: None,
            outcome: None,
            observers: Observers::default(),
            settings: [Setting::Up, Setting::Plus],
            collapse_indices: false,
            s_star_mode: SStarMode::default(),
            overlap_label: DEFAULT_OVERLAP_LABEL.into(),
        }
    }
}

impl ScenarioConfig {
    fn check_names(&self, names: &[&String]) -> Result<()> {
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains('@') || n.contains('⊗') {
                return Err(RqmError::BadConfig(format!("invalid name {n:?}")));
            }
            if names[..i].contains(n) {
                return Err(RqmError::BadConfig(format!("name {n:?} used twice")));
            }
        }
        Ok(())
    }

    fn check_common(&self) -> Result<()> {
        let norm = self.c1.norm_sqr() + self.c2.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > STRUCTURAL_TOL {
            return Err(RqmError::BadConfig(format!(
                "|c1|² + |c2|² = {norm}, expected 1"
            )));
        }
        if let Some(v) = self.outcome {
            if !v.is_finite() {
                return Err(RqmError::BadConfig("outcome must be finite".into()));
            }
        }
        if self.overlap_label.is_empty() || self.overlap_label.contains(['(', ')', ',', '|', '@']) {
            return Err(RqmError::BadConfig(format!(
                "invalid overlap label {:?}",
                self.overlap_label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssertionOutcome {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub id: String,
    pub description: String,
    /// Observer indices the assertion reads. Equality is only ever checked
    /// between assignments sharing one index.
    pub observers: Vec<String>,
    pub outcome: AssertionOutcome,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilitySection {
    /// Observer indices present in the system; empty once collapsed.
    pub observers: Vec<String>,
    pub collapsed: bool,
    pub variables: usize,
    pub constraints: usize,
    pub verdict: FeasibilityVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_constraints: Option<Vec<String>>,
}

impl FeasibilitySection {
    fn run(system: &ConstraintSystem, collapsed: bool) -> Result<Self> {
        let verdict = solve(system)?;
        let mut observers: Vec<String> = system
            .variables()
            .iter()
            .filter_map(|v| v.observer.clone())
            .collect();
        observers.dedup();
        let certificate_constraints = verdict.certificate.as_ref().map(|ids| {
            ids.iter()
                .filter_map(|id| system.constraint(id).map(|c| c.to_string()))
                .collect()
        });
        Ok(FeasibilitySection {
            observers,
            collapsed,
            variables: system.variables().len(),
            constraints: system.constraints().len(),
            verdict,
            certificate_constraints,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub ledger: RelationalLedger,
    pub assertions: Vec<Assertion>,
    /// The observer-indexed system (or its collapse, when requested).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilitySection>,
    /// The same blocks with every index identified.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<FeasibilitySection>,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl ScenarioReport {
    fn new(scenario: &str, config: &ScenarioConfig, ledger: RelationalLedger) -> Self {
        ScenarioReport {
            scenario: scenario.into(),
            config: config.clone(),
            ledger,
            assertions: Vec::new(),
            feasibility: None,
            reduction: None,
            notes: Vec::new(),
            verdict: Verdict::Pass,
        }
    }

    fn check(
        &mut self,
        id: &str,
        description: &str,
        observers: &[&str],
        outcome: AssertionOutcome,
        detail: String,
    ) {
        self.assertions.push(Assertion {
            id: id.into(),
            description: description.into(),
            observers: observers.iter().map(|s| s.to_string()).collect(),
            outcome,
            detail,
        });
    }

    fn audit(&mut self) {
        let violations = consistency_audit(&self.ledger);
        let outcome = pass_if(violations.is_empty());
        let detail = if violations.is_empty() {
            "no violations".to_string()
        } else {
            serde_json::to_string(&violations).expect("violations serialize")
        };
        self.check(
            "consistency_audit",
            "per-observer invariants hold at every step",
            &[],
            outcome,
            detail,
        );
    }

    /// PASS iff no assertion failed. Not-applicable assertions do not fail
    /// a report.
    fn finish(mut self) -> Self {
        self.verdict = if self
            .assertions
            .iter()
            .any(|a| a.outcome == AssertionOutcome::Fail)
        {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
        self
    }

    pub fn assertion(&self, id: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.id == id)
    }
}

fn pass_if(ok: bool) -> AssertionOutcome {
    if ok {
        AssertionOutcome::Pass
    } else {
        AssertionOutcome::Fail
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn options() -> [StateVector; 2] {
    [StateVector::up(), StateVector::plus()]
}

/// `(1/√n) Σ_i options[i] ⊗ |i⟩` on system ⊗ record: the state a
/// bystander assigns to a freshly prepared system and its preparer when
/// the setting is unknown.
pub fn setting_superposition(options: &[StateVector]) -> Result<StateVector> {
    let n = options.len();
    let records: Vec<StateVector> = (0..n).map(|i| StateVector::basis(n, i)).collect();
    let branches: Vec<StateVector> = options
        .iter()
        .zip(&records)
        .map(|(o, r)| o.tensor(r))
        .collect();
    let amp = c(1.0 / (n as f64).sqrt());
    let terms: Vec<(Complex64, &StateVector)> = branches.iter().map(|b| (amp, b)).collect();
    Ok(StateVector::superpose(&terms)?)
}

fn record_superposition() -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_real(&[h, h]).expect("normalized")
}

// ---------------------------------------------------------------------------
// Third Person

/// Ledger before the interaction: `c₁|+⟩ + c₂|−⟩` for the system relative
/// to the participant, and that state times the pointer's `|0⟩` for the
/// system-participant composite relative to the bystander.
pub fn third_person_initial(config: &ScenarioConfig) -> Result<RelationalLedger> {
    config.check_common()?;
    let o = &config.observers;
    config.check_names(&[&o.system1, &o.participant, &o.bystander])?;
    let psi = StateVector::superpose(&[
        (config.c1, &StateVector::plus()),
        (config.c2, &StateVector::minus()),
    ])?;
    RelationalLedger::new()
        .assign(RelationalAssignment::new(
            &[&o.system1],
            &[2],
            &o.participant,
            Role::QuantumState,
            psi.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[&o.system1, &o.participant],
            &[2, 2],
            &o.bystander,
            Role::QuantumState,
            psi.tensor(&StateVector::basis(2, 0)),
        ))
}

pub fn third_person_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let o = &config.observers;
    let (s1, s2, s3) = (
        o.system1.as_str(),
        o.participant.as_str(),
        o.bystander.as_str(),
    );
    let initial = third_person_initial(config)?;
    let observable = Observable::pauli_x();
    let outcome = match (config.outcome, config.seed) {
        (None, None) => Some(1.0),
        (given, _) => given,
    };
    let ledger = interact(&initial, s2, s1, &observable, outcome, config.seed)?;
    let Some(Event::Interaction { outcome: value, .. }) = ledger.events().last().cloned() else {
        unreachable!("interact appends an interaction event");
    };
    let pointer = observable
        .eigenvalues()
        .iter()
        .position(|v| *v == value)
        .expect("outcome is an eigenvalue");
    let eigenvector = if pointer == 0 {
        StateVector::plus()
    } else {
        StateVector::minus()
    };
    let degenerate = eel_definite(&initial, &[s1], s2, &observable)?.is_some();

    let mut report = ScenarioReport::new("third-person", config, ledger.clone());

    let definite = eel_definite(&ledger, &[s1], s2, &observable)?;
    report.check(
        "eel_participant",
        "the system has a definite value of O relative to the participant",
        &[s2],
        pass_if(definite == Some(value)),
        format!("definite value {definite:?}, outcome {value}"),
    );

    let rel_participant = &ledger
        .get(&[s1], s2, Role::QuantumState)
        .expect("assigned")
        .state;
    let f = rel_participant.fidelity(&eigenvector)?;
    report.check(
        "participant_state",
        "relative to the participant the system is the eigenstate of the outcome",
        &[s2],
        pass_if((f - 1.0).abs() <= STRUCTURAL_TOL),
        format!("fidelity {f}"),
    );

    let rel_bystander = &ledger
        .get(&[s1, s2], s3, Role::QuantumState)
        .expect("assigned")
        .state;
    let target = StateVector::superpose(&[
        (
            config.c1,
            &StateVector::plus().tensor(&StateVector::basis(2, 0)),
        ),
        (
            config.c2,
            &StateVector::minus().tensor(&StateVector::basis(2, 1)),
        ),
    ])?;
    let f = rel_bystander.fidelity(&target)?;
    report.check(
        "bystander_state",
        "relative to the bystander the composite is c1|+⟩|plus⟩ + c2|−⟩|minus⟩",
        &[s3],
        pass_if((f - 1.0).abs() <= STRUCTURAL_TOL),
        format!("fidelity {f}"),
    );

    let bystander_value = eel_definite(&ledger, &[s1], s3, &observable)?;
    report.check(
        "eel_bystander",
        "the system has no definite value of O relative to the bystander",
        &[s3],
        if degenerate {
            AssertionOutcome::NotApplicable
        } else {
            pass_if(bystander_value.is_none())
        },
        if degenerate {
            format!("initial state is already an eigenstate; definite value {bystander_value:?}")
        } else {
            format!("definite value {bystander_value:?}")
        },
    );

    // What the bystander would hold if it shared the participant's account.
    let shared_account = eigenvector.tensor(&StateVector::basis(2, pointer));
    let f = rel_bystander.fidelity(&shared_account)?;
    report.check(
        "accounts_differ",
        "the two observers give different accounts of the same interaction",
        &[s2, s3],
        if degenerate {
            AssertionOutcome::NotApplicable
        } else {
            pass_if(f < 1.0 - STRUCTURAL_TOL)
        },
        format!("fidelity between the bystander's state and the participant's account {f}"),
    );

    report.audit();
    report.notes.push(format!(
        "{s2} and {s3} describe the same interaction differently; each description is complete relative to its own observer"
    ));
    Ok(report.finish())
}

// ---------------------------------------------------------------------------
// Relational PBR, one preparer

fn single_blocks(config: &ScenarioConfig) -> Result<Vec<ObserverBlock>> {
    let o = &config.observers;
    Ok(vec![
        ObserverBlock {
            observer: o.preparer.clone(),
            model: pbr_setup_model(&config.overlap_label, true)?,
            measures: false,
        },
        ObserverBlock {
            observer: o.measurer.clone(),
            model: pbr_setup_model(&config.overlap_label, false)?,
            measures: true,
        },
    ])
}

pub fn relational_pbr_single_observer(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.check_common()?;
    let o = &config.observers;
    let (s1, s2, s, star) = (
        o.system1.as_str(),
        o.system2.as_str(),
        o.preparer.as_str(),
        o.measurer.as_str(),
    );
    config.check_names(&[&o.system1, &o.system2, &o.preparer])?;
    config.check_names(&[&o.system1, &o.system2, &o.measurer])?;
    let same_observer = s == star;
    let opts = options();
    let (a, b) = (config.settings[0].index(), config.settings[1].index());

    let mut ledger = RelationalLedger::new()
        .assign(RelationalAssignment::new(
            &[s1],
            &[2],
            s,
            Role::QuantumState,
            StateVector::up(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2],
            &[2],
            s,
            Role::QuantumState,
            StateVector::up(),
        ))?;
    ledger = prepare(&ledger, s, s1, &opts, a)?;
    ledger = prepare(&ledger, s, s2, &opts, b)?;
    let lambda_s = opts[a].tensor(&opts[b]);
    ledger = ledger
        .assign(RelationalAssignment::new(
            &[s1],
            &[2],
            s,
            Role::OnticState,
            opts[a].clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2],
            &[2],
            s,
            Role::OnticState,
            opts[b].clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s1, s2],
            &[2, 2],
            s,
            Role::OnticState,
            lambda_s.clone(),
        ))?;
    if !same_observer {
        let lambda_star_state = match config.s_star_mode {
            SStarMode::PostInteraction => RelationalAssignment::new(
                &[s1, s2],
                &[2, 2],
                star,
                Role::OnticState,
                lambda_s.clone(),
            ),
            SStarMode::Entangled => {
                let first = setting_superposition(&opts)?;
                let joint = first.tensor(&first);
                let (state, _) = permute_factors(&joint, &[2, 2, 2, 2], &[0, 2, 1, 3])?;
                RelationalAssignment::new(&[s1, s2, s], &[2, 2, 4], star, Role::OnticState, state)
            }
        };
        ledger = ledger.assign(lambda_star_state)?;
    }

    let mut report = ScenarioReport::new("relational-pbr-single", config, ledger.clone());
    report.check(
        "indices_distinct",
        "λ12 relative to the preparer and relative to the measurer carry different indices",
        &[s, star],
        pass_if(!same_observer),
        format!("preparer {s:?}, measurer {star:?}"),
    );

    let (outcome, detail) = if same_observer {
        (
            AssertionOutcome::NotApplicable,
            "one observer holds both roles".to_string(),
        )
    } else {
        let other = ledger
            .get(&[s1, s2], star, Role::OnticState)
            .or_else(|| ledger.get(&[s1, s2, s], star, Role::OnticState))
            .expect("assigned above");
        if other.state.dim() != lambda_s.dim() {
            (
                AssertionOutcome::Pass,
                format!(
                    "different relational systems ({} and {})",
                    "s1⊗s2",
                    other.system_name()
                ),
            )
        } else {
            let f = other.state.fidelity(&lambda_s)?;
            if f < 1.0 - AGGREGATE_TOL {
                (AssertionOutcome::Pass, format!("fidelity {f}"))
            } else {
                (
                    AssertionOutcome::NotApplicable,
                    format!(
                        "states coincide (fidelity {f}); distinctness rests on the index alone"
                    ),
                )
            }
        }
    };
    report.check(
        "states_distinct",
        "λ12 relative to the preparer differs from λ12 relative to the measurer",
        &[s, star],
        outcome,
        detail,
    );

    let blocks = single_blocks(config)?;
    let system = build_pbr_system_from(&blocks, config.collapse_indices, true)?;
    let main = FeasibilitySection::run(&system, config.collapse_indices)?;
    let reduced = build_pbr_system_from(&blocks, true, true)?;
    let reduction = FeasibilitySection::run(&reduced, true)?;

    report.check(
        "no_contradiction",
        "the support constraints relative to the preparer and the Born zeros relative to the measurer are jointly satisfiable",
        &[s, star],
        pass_if(main.verdict.is_feasible()),
        main.verdict.status.to_string(),
    );
    let cert_len = reduction.verdict.certificate.as_ref().map_or(0, Vec::len);
    report.check(
        "reduction_infeasible",
        "identifying every observer index recovers the PBR contradiction",
        &[],
        pass_if(reduction.verdict.status == Status::Infeasible && cert_len == 5),
        format!(
            "{} with a {cert_len}-constraint certificate",
            reduction.verdict.status
        ),
    );
    let plain = build_pbr_system(&config.overlap_label, true)?;
    report.check(
        "reduction_matches_pbr",
        "the collapsed system is the non-relational PBR system",
        &[],
        pass_if(reduced.to_canonical_json() == plain.to_canonical_json()),
        "canonical serializations compared".into(),
    );
    report.audit();

    report.notes.push(if main.verdict.is_feasible() {
        "no contradiction because of the difference in their relativization targets".into()
    } else {
        "INFEASIBLE: with a single relativization index the original PBR contradiction returns"
            .into()
    });
    report.feasibility = Some(main);
    report.reduction = Some(reduction);
    Ok(report.finish())
}

// ---------------------------------------------------------------------------
// Relational PBR, Alice, Bob and s*

/// Alice's and Bob's blocks put all of their preparations on one shared
/// label, so each observer's ontic state is compatible with both of its
/// options. The measurer's block has disjoint supports.
fn alice_bob_blocks(config: &ScenarioConfig) -> Result<Vec<ObserverBlock>> {
    let o = &config.observers;
    let setup = pbr_setup_model(&config.overlap_label, true)?;
    let shared = lambda_star(&config.overlap_label);
    let block = |observer: &str, range: std::ops::Range<usize>| -> Result<ObserverBlock> {
        let preparations = setup.preparations()[range]
            .iter()
            .map(|p| PreparationProcedure {
                id: p.id.clone(),
                quantum_state: p.quantum_state.clone(),
                distribution: BTreeMap::from([(shared.clone(), Weight::one())]),
            })
            .collect();
        Ok(ObserverBlock {
            observer: observer.into(),
            model: OntologicalModel::new(OnticSpace::new([shared.clone()])?, preparations, vec![])?,
            measures: false,
        })
    };
    Ok(vec![
        block(&o.alice, 0..2)?,
        block(&o.bob, 2..4)?,
        ObserverBlock {
            observer: o.measurer.clone(),
            model: pbr_setup_model(&config.overlap_label, false)?,
            measures: true,
        },
    ])
}

/// Splits a state on system ⊗ record into the (unnormalized) system
/// vectors attached to each record basis state.
fn branches(state: &StateVector, system_dim: usize, record_dim: usize) -> Vec<StateVector> {
    (0..record_dim)
        .map(|r| {
            let amps = (0..system_dim)
                .map(|i| state.amplitudes()[i * record_dim + r])
                .collect();
            StateVector::new(amps).expect("non-empty")
        })
        .collect()
}

fn branch_check(state: &StateVector, opts: &[StateVector]) -> (bool, String) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, (branch, option)) in branches(state, 2, opts.len()).iter().zip(opts).enumerate() {
        let amp = branch.norm_sqr().sqrt();
        let same = branch
            .normalize()
            .map(|b| b.same_ray(option, STRUCTURAL_TOL))
            .unwrap_or(false);
        ok &= (amp - h).abs() <= STRUCTURAL_TOL && same;
        parts.push(format!("record {r}: amplitude {amp}"));
    }
    (ok, parts.join(", "))
}

pub fn relational_pbr_alice_bob(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.check_common()?;
    let o = &config.observers;
    config.check_names(&[&o.system1, &o.system2, &o.alice, &o.bob, &o.measurer])?;
    let (s1, s2, alice, bob, star) = (
        o.system1.as_str(),
        o.system2.as_str(),
        o.alice.as_str(),
        o.bob.as_str(),
        o.measurer.as_str(),
    );
    let opts = options();
    let (a, b) = (config.settings[0].index(), config.settings[1].index());
    let unknown = StateVector::up().tensor(&record_superposition());

    let mut ledger = RelationalLedger::new()
        .assign(RelationalAssignment::new(
            &[s1],
            &[2],
            alice,
            Role::QuantumState,
            StateVector::up(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2],
            &[2],
            bob,
            Role::QuantumState,
            StateVector::up(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2, bob],
            &[2, 2],
            alice,
            Role::QuantumState,
            unknown.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s1, alice],
            &[2, 2],
            bob,
            Role::QuantumState,
            unknown.clone(),
        ))?;
    if config.s_star_mode == SStarMode::Entangled {
        ledger = ledger
            .assign(RelationalAssignment::new(
                &[s1, alice],
                &[2, 2],
                star,
                Role::QuantumState,
                unknown.clone(),
            ))?
            .assign(RelationalAssignment::new(
                &[s2, bob],
                &[2, 2],
                star,
                Role::QuantumState,
                unknown.clone(),
            ))?;
    }
    ledger = prepare(&ledger, alice, s1, &opts, a)?;
    ledger = prepare(&ledger, bob, s2, &opts, b)?;

    let quantum = |sys: &[&str], obs: &str| {
        ledger
            .get(sys, obs, Role::QuantumState)
            .expect("assigned")
            .state
            .clone()
    };
    let rel_alice = quantum(&[s2, bob], alice);
    let rel_bob = quantum(&[s1, alice], bob);
    let lambda_a = opts[a].tensor(&rel_alice);
    let lambda_b = opts[b].tensor(&rel_bob);
    let record = |i: usize| StateVector::basis(2, i);
    let lambda_star_state = match config.s_star_mode {
        SStarMode::PostInteraction => opts[a]
            .tensor(&opts[b])
            .tensor(&record(a))
            .tensor(&record(b)),
        SStarMode::Entangled => {
            let joint = quantum(&[s1, alice], star).tensor(&quantum(&[s2, bob], star));
            permute_factors(&joint, &[2, 2, 2, 2], &[0, 2, 1, 3])?.0
        }
    };
    ledger = ledger
        .assign(RelationalAssignment::new(
            &[s1],
            &[2],
            alice,
            Role::OnticState,
            opts[a].clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2, bob],
            &[2, 2],
            alice,
            Role::OnticState,
            rel_alice.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s1, s2, bob],
            &[2, 2, 2],
            alice,
            Role::OnticState,
            lambda_a.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2],
            &[2],
            bob,
            Role::OnticState,
            opts[b].clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s1, alice],
            &[2, 2],
            bob,
            Role::OnticState,
            rel_bob.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s2, s1, alice],
            &[2, 2, 2],
            bob,
            Role::OnticState,
            lambda_b.clone(),
        ))?
        .assign(RelationalAssignment::new(
            &[s1, s2, alice, bob],
            &[2, 2, 2, 2],
            star,
            Role::OnticState,
            lambda_star_state.clone(),
        ))?;

    let mut report = ScenarioReport::new("relational-pbr-alice-bob", config, ledger);

    let (ok, detail) = branch_check(&rel_alice, &opts);
    report.check(
        "alice_view_of_bob",
        "relative to Alice, s2 and Bob are (|↑⟩|up⟩ + |+⟩|plus⟩)/√2",
        &[alice],
        pass_if(ok),
        detail,
    );
    let (ok, detail) = branch_check(&rel_bob, &opts);
    report.check(
        "bob_view_of_alice",
        "relative to Bob, s1 and Alice are (|↑⟩|up⟩ + |+⟩|plus⟩)/√2",
        &[bob],
        pass_if(ok),
        detail,
    );

    // Option states in each observer's own factor order.
    let alice_options: Vec<StateVector> = opts.iter().map(|x| x.tensor(&rel_alice)).collect();
    let bob_options: Vec<StateVector> = opts.iter().map(|x| x.tensor(&rel_bob)).collect();
    let support = |lambda: &StateVector, options: &[StateVector]| -> Result<(bool, String)> {
        let overlaps: Vec<f64> = options
            .iter()
            .map(|w| w.fidelity(lambda))
            .collect::<Result<_, _>>()?;
        Ok((
            overlaps.iter().all(|p| *p > STRUCTURAL_TOL),
            format!("squared overlaps {overlaps:?}"),
        ))
    };
    let (ok, detail) = support(&lambda_a, &alice_options)?;
    report.check(
        "alice_support",
        "λ12 relative to Alice is compatible with both of Alice's options",
        &[alice],
        pass_if(ok),
        detail,
    );
    let (ok, detail) = support(&lambda_b, &bob_options)?;
    report.check(
        "bob_support",
        "λ12 relative to Bob is compatible with both of Bob's options",
        &[bob],
        pass_if(ok),
        detail,
    );

    // Common frame s1 ⊗ s2 ⊗ A ⊗ B, adding each observer's own record.
    let canon_alice = |state: &StateVector, setting: usize| -> Result<StateVector> {
        Ok(permute_factors(
            &state.tensor(&record(setting)),
            &[2, 2, 2, 2],
            &[0, 1, 3, 2],
        )?
        .0)
    };
    let canon_bob = |state: &StateVector, setting: usize| -> Result<StateVector> {
        Ok(permute_factors(
            &state.tensor(&record(setting)),
            &[2, 2, 2, 2],
            &[1, 0, 2, 3],
        )?
        .0)
    };
    let alice_canon: Vec<StateVector> = alice_options
        .iter()
        .enumerate()
        .map(|(i, s)| canon_alice(s, i))
        .collect::<Result<_>>()?;
    let bob_canon: Vec<StateVector> = bob_options
        .iter()
        .enumerate()
        .map(|(i, s)| canon_bob(s, i))
        .collect::<Result<_>>()?;

    let blocks = alice_bob_blocks(config)?;
    let indexed = build_pbr_system_from(&blocks, false, true)?;
    let cross_labels = indexed
        .supports()
        .iter()
        .all(|r| r.observer.as_deref() == Some(star));
    let mut cross_ok = cross_labels;
    let mut pairings = Vec::new();
    for (k, wa) in alice_canon.iter().enumerate() {
        for (j, wb) in bob_canon.iter().enumerate() {
            let f = wa.fidelity(wb)?;
            cross_ok &= f < 1.0 - AGGREGATE_TOL;
            pairings.push(format!("(ω{}_A, ω{}_B): {f}", k + 1, j + 3));
        }
    }
    report.check(
        "cross_observer_zeros",
        "Alice's options carry no weight in Bob's indexed label space and conversely, and no option of one coincides with an option of the other",
        &[alice, bob],
        pass_if(cross_ok),
        format!("labels disjoint by index: {cross_labels}; fidelities {}", pairings.join(", ")),
    );

    let lambdas = [
        ("λ12/A", alice, alice_canon[a].clone()),
        ("λ12/B", bob, bob_canon[b].clone()),
        ("λ12/s*", star, lambda_star_state),
    ];
    let mut distinct = true;
    let mut parts = Vec::new();
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let f = lambdas[i].2.fidelity(&lambdas[j].2)?;
            distinct &= f < 1.0 - AGGREGATE_TOL;
            parts.push(format!("({}, {}): {f}", lambdas[i].0, lambdas[j].0));
        }
    }
    report.check(
        "ontic_states_distinct",
        "the three observers assign pairwise different ontic states to s12",
        &[alice, bob, star],
        pass_if(distinct),
        parts.join(", "),
    );

    let system = if config.collapse_indices {
        build_pbr_system_from(&blocks, true, true)?
    } else {
        indexed
    };
    let main = FeasibilitySection::run(&system, config.collapse_indices)?;
    let reduction = FeasibilitySection::run(&build_pbr_system_from(&blocks, true, true)?, true)?;
    report.check(
        "no_contradiction",
        "the multi-observer constraint system is satisfiable",
        &[alice, bob, star],
        pass_if(main.verdict.is_feasible()),
        main.verdict.status.to_string(),
    );
    report.check(
        "reduction_infeasible",
        "identifying every observer index recovers the PBR contradiction",
        &[],
        pass_if(reduction.verdict.status == Status::Infeasible),
        reduction.verdict.status.to_string(),
    );
    report.audit();
    report.notes.push(if main.verdict.is_feasible() {
        "Alice, Bob and s* assign different ontic states to s12, so no contradiction arises among their perspectives"
            .into()
    } else {
        "INFEASIBLE: with a single relativization index the original PBR contradiction returns".into()
    });
    report.feasibility = Some(main);
    report.reduction = Some(reduction);
    Ok(report.finish())
}

/// Runs a scenario by its command-line name.
pub fn run_scenario(name: &str, config: &ScenarioConfig) -> Result<ScenarioReport> {
    match name {
        "third-person" => third_person_scenario(config),
        "relational-pbr-single" => relational_pbr_single_observer(config),
        "relational-pbr-alice-bob" => relational_pbr_alice_bob(config),
        other => Err(RqmError::UnknownScenario(other.into())),
    }
}
