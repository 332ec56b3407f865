//! Exact-rational linear feasibility.
//!
//! A [`ConstraintSystem`] is a set of linear equalities and inequalities over
//! nonnegative variables with rational coefficients. [`solve`] decides it
//! exactly and returns either a witness assignment or a minimal infeasible
//! subset of constraints. Nonnegativity of every variable is part of the
//! domain, so certificates never list it.

mod pbr;
mod solver;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{BigRational, One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hilbert::HilbertError;
use crate::ontmodel::{format_rational, parse_rational, ModelError};

pub use pbr::{
    build_pbr_system, build_pbr_system_from, lambda_star, pbr_no_go, pbr_setup_model,
    single_system_model, zero_predictions_hold, NoGoReport, ObserverBlock, OrthogonalityCheck,
    PbrOptions, WitnessCheck, DEFAULT_OVERLAP_LABEL,
};
pub use solver::{is_feasible, solve, MAX_CONSTRAINTS, MAX_VARIABLES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("system too large for the desk-scale solver: {variables} variables, {constraints} constraints")]
    TooLarge {
        variables: usize,
        constraints: usize,
    },
    #[error("constraint {constraint:?} refers to undeclared variable {variable:?}")]
    UndeclaredVariable {
        constraint: String,
        variable: String,
    },
    #[error("variable {0:?} appears in no constraint")]
    UnusedVariable(String),
    #[error("probability variable {0:?} has no upper bound constraint")]
    MissingBound(String),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

pub type Result<T, E = FeasibilityError> = std::result::Result<T, E>;

/// Exact rational, serialized as `"p/q"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn int(n: i64) -> Self {
        Rational(BigRational::from_integer(n.into()))
    }

    pub fn new(numer: i64, denom: i64) -> Self {
        Rational(BigRational::new(numer.into(), denom.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.0))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text)
            .map(Rational)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    fn holds(self, lhs: &BigRational, rhs: &BigRational) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        })
    }
}

/// What a constraint encodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// `Σ_k ξ(k|λ) = 1`: the measurement responds to λ alone.
    ResponseNormalization,
    /// `ξ(k|λ) = 0` on the support of a preparation whose Born probability
    /// for `k` vanishes.
    BornZero,
    /// `x ≤ 1` for a probability variable.
    Bound,
    /// `Σ_λ μ(λ) = 1` for a free joint distribution.
    Distribution,
    /// `μ_P(λ) + ξ(k|λ) ≤ 1`: λ may carry weight under `P` only if it never
    /// yields an outcome `P` forbids.
    SupportExclusion,
    /// `Σ_P μ_P(λ) ≤ 1`: distinct preparations do not share λ.
    SupportExclusivity,
    /// Anything supplied by a caller.
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub id: String,
    /// Probabilities must carry an explicit `≤ 1` bound.
    #[serde(default)]
    pub probability: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub id: String,
    pub terms: BTreeMap<String, Rational>,
    pub relation: Relation,
    pub rhs: Rational,
    #[serde(default)]
    pub assumption: Assumption,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<String>,
}

impl Constraint {
    pub fn new(
        id: impl Into<String>,
        terms: &[(&str, Rational)],
        relation: Relation,
        rhs: Rational,
    ) -> Self {
        Constraint {
            id: id.into(),
            terms: terms
                .iter()
                .map(|(v, c)| (v.to_string(), c.clone()))
                .collect(),
            relation,
            rhs,
            assumption: Assumption::Other,
            observer: None,
        }
    }

    pub fn satisfied_by(&self, assignment: &BTreeMap<String, Rational>) -> bool {
        let zero = BigRational::zero();
        let lhs: BigRational = self
            .terms
            .iter()
            .map(|(v, c)| &c.0 * &assignment.get(v).map_or(&zero, |r| &r.0).clone())
            .sum();
        self.relation.holds(&lhs, &self.rhs.0)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.id)?;
        for (i, (v, c)) in self.terms.iter().enumerate() {
            let sign = if c.0.is_negative() { "-" } else { "+" };
            let mag = c.0.abs();
            if i > 0 || sign == "-" {
                write!(f, "{sign} ")?;
            }
            if mag.is_one() {
                write!(f, "{v} ")?;
            } else {
                write!(f, "{} {v} ", format_rational(&mag))?;
            }
        }
        write!(f, "{} {}", self.relation, self.rhs)
    }
}

/// Support of one preparation, kept as metadata next to the constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportRecord {
    pub preparation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<String>,
    pub support: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintSystem {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    supports: Vec<SupportRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRepr {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    #[serde(default)]
    supports: Vec<SupportRecord>,
}

impl<'de> Deserialize<'de> for ConstraintSystem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SystemRepr::deserialize(d)?;
        ConstraintSystem::new(r.variables, r.constraints, r.supports)
            .map_err(serde::de::Error::custom)
    }
}

impl ConstraintSystem {
    /// Validates ids, variable references, variable usage and the `≤ 1`
    /// bound on every probability variable.
    pub fn new(
        variables: Vec<Variable>,
        constraints: Vec<Constraint>,
        supports: Vec<SupportRecord>,
    ) -> Result<Self> {
        let mut declared = BTreeSet::new();
        for v in &variables {
            if !declared.insert(v.id.as_str()) {
                return Err(FeasibilityError::DuplicateId {
                    kind: "variable",
                    id: v.id.clone(),
                });
            }
        }
        let mut ids = BTreeSet::new();
        let mut used = BTreeSet::new();
        let mut bounded = BTreeSet::new();
        for c in &constraints {
            if !ids.insert(c.id.as_str()) {
                return Err(FeasibilityError::DuplicateId {
                    kind: "constraint",
                    id: c.id.clone(),
                });
            }
            for v in c.terms.keys() {
                if !declared.contains(v.as_str()) {
                    return Err(FeasibilityError::UndeclaredVariable {
                        constraint: c.id.clone(),
                        variable: v.clone(),
                    });
                }
                used.insert(v.as_str());
            }
            if let (Some((v, coeff)), 1) = (c.terms.iter().next(), c.terms.len()) {
                let caps_at_one = match c.relation {
                    Relation::Le | Relation::Eq => coeff.0.is_positive() && c.rhs.0 <= coeff.0,
                    Relation::Ge => coeff.0.is_negative() && c.rhs.0 >= -coeff.0.clone(),
                };
                if caps_at_one {
                    bounded.insert(v.as_str());
                }
            }
        }
        for v in &variables {
            if !used.contains(v.id.as_str()) {
                return Err(FeasibilityError::UnusedVariable(v.id.clone()));
            }
            if v.probability && !bounded.contains(v.id.as_str()) {
                return Err(FeasibilityError::MissingBound(v.id.clone()));
            }
        }
        Ok(ConstraintSystem {
            variables,
            constraints,
            supports,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn supports(&self) -> &[SupportRecord] {
        &self.supports
    }

    pub fn constraint(&self, id: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.id == id)
    }

    /// Subsystem with only the named constraints (variables that no longer
    /// occur are dropped). Metadata is not carried over.
    pub fn restrict(&self, ids: &[String]) -> ConstraintSystem {
        let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let constraints: Vec<Constraint> = self
            .constraints
            .iter()
            .filter(|c| keep.contains(c.id.as_str()))
            .cloned()
            .collect();
        self.with_constraints(constraints)
    }

    /// The same system plus extra constraints; new variables are declared as
    /// needed.
    pub fn extended(&self, extra: Vec<Constraint>) -> ConstraintSystem {
        let mut constraints = self.constraints.clone();
        constraints.extend(extra);
        let mut out = self.with_constraints(constraints);
        out.supports = self.supports.clone();
        out
    }

    fn with_constraints(&self, constraints: Vec<Constraint>) -> ConstraintSystem {
        let used: BTreeSet<&str> = constraints
            .iter()
            .flat_map(|c| c.terms.keys().map(String::as_str))
            .collect();
        let mut variables: Vec<Variable> = self
            .variables
            .iter()
            .filter(|v| used.contains(v.id.as_str()))
            .cloned()
            .collect();
        let declared: BTreeSet<String> = variables.iter().map(|v| v.id.clone()).collect();
        for v in used {
            if !declared.contains(v) {
                variables.push(Variable {
                    id: v.to_string(),
                    probability: false,
                    observer: None,
                });
            }
        }
        ConstraintSystem {
            variables,
            constraints,
            supports: Vec::new(),
        }
    }

    /// Ids of constraints the assignment violates (missing variables read as
    /// zero; negative values violate the domain and are reported as
    /// `"domain[<var>]"`).
    pub fn violations(&self, assignment: &BTreeMap<String, Rational>) -> Vec<String> {
        let mut out: Vec<String> = self
            .variables
            .iter()
            .filter(|v| assignment.get(&v.id).is_some_and(|r| r.0.is_negative()))
            .map(|v| format!("domain[{}]", v.id))
            .collect();
        out.extend(
            self.constraints
                .iter()
                .filter(|c| !c.satisfied_by(assignment))
                .map(|c| c.id.clone()),
        );
        out
    }

    /// Pretty-printed JSON; the canonical form used for comparisons.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constraint systems serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Feasible,
    Infeasible,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityVerdict {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<BTreeMap<String, Rational>>,
    /// Ids of an irreducible infeasible subset, in system order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<String>>,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }
}
