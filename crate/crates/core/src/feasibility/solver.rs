//! Phase-one simplex over exact rationals with Bland's pivoting rule.
//!
//! Infeasible systems get a certificate in two stages: the rows carrying a
//! nonzero Farkas multiplier at the phase-one optimum already form an
//! infeasible subsystem, and a deletion filter then shrinks that subsystem to
//! an irreducible one.

use std::collections::BTreeMap;

use num::{BigRational, One, Signed, Zero};

use super::{
    ConstraintSystem, FeasibilityError, FeasibilityVerdict, Rational, Relation, Result, Status,
};

pub const MAX_VARIABLES: usize = 1000;
pub const MAX_CONSTRAINTS: usize = 2000;

/// Column roles in the phase-one tableau.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Column {
    Structural,
    Slack,
    Artificial,
}

struct PhaseOne {
    /// Feasible point over the structural variables, when one exists.
    point: Option<Vec<BigRational>>,
    /// Farkas multipliers per row (only meaningful when infeasible).
    multipliers: Vec<BigRational>,
}

/// Decides `rows` over `n` nonnegative variables. Each row is
/// `(coefficients by variable index, relation, rhs)`.
/// Sparse row: (column, coefficient) terms, relation, right-hand side.
type Row = (Vec<(usize, BigRational)>, Relation, BigRational);

fn phase_one(n: usize, rows: &[Row]) -> PhaseOne {
    let m = rows.len();
    let zero = BigRational::zero();
    let one = BigRational::one();

    // Column layout: structurals, then one slack/surplus per inequality,
    // then artificials.
    let mut kinds: Vec<Column> = vec![Column::Structural; n];
    let mut tableau: Vec<Vec<BigRational>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = vec![usize::MAX; m];
    let mut initial_basic: Vec<usize> = vec![usize::MAX; m];

    let mut normalized: Vec<Row> = Vec::with_capacity(m);
    for (coeffs, rel, rhs) in rows {
        if rhs.is_negative() {
            let flipped = match rel {
                Relation::Eq => Relation::Eq,
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
            };
            normalized.push((
                coeffs.iter().map(|(j, a)| (*j, -a)).collect(),
                flipped,
                -rhs,
            ));
        } else {
            normalized.push((coeffs.clone(), *rel, rhs.clone()));
        }
    }

    let slack_count = normalized.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificial_count = normalized.iter().filter(|r| r.1 != Relation::Le).count();
    let width = n + slack_count + artificial_count;
    kinds.extend(std::iter::repeat_n(Column::Slack, slack_count));
    kinds.extend(std::iter::repeat_n(Column::Artificial, artificial_count));

    let mut next_slack = n;
    let mut next_art = n + slack_count;
    for (i, (coeffs, rel, rhs)) in normalized.iter().enumerate() {
        let mut row = vec![zero.clone(); width + 1];
        for (j, a) in coeffs {
            row[*j] += a;
        }
        match rel {
            Relation::Le => {
                row[next_slack] = one.clone();
                basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -one.clone();
                next_slack += 1;
                row[next_art] = one.clone();
                basis[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = one.clone();
                basis[i] = next_art;
                next_art += 1;
            }
        }
        initial_basic[i] = basis[i];
        row[width] = rhs.clone();
        tableau.push(row);
    }

    let cost = |j: usize| -> BigRational {
        if kinds[j] == Column::Artificial {
            BigRational::one()
        } else {
            BigRational::zero()
        }
    };

    // Reduced costs d_j = c_j − Σ_i c_B(i) a_ij; the last entry holds
    // −(objective value).
    let mut reduced: Vec<BigRational> = (0..=width)
        .map(|j| if j < width { cost(j) } else { zero.clone() })
        .collect();
    for (i, row) in tableau.iter().enumerate() {
        if kinds[basis[i]] == Column::Artificial {
            for (d, a) in reduced.iter_mut().zip(row) {
                if !a.is_zero() {
                    *d -= a;
                }
            }
        }
    }

    // Bland: lowest-index column with negative reduced cost.
    while let Some(enter) = (0..width).find(|&j| reduced[j].is_negative()) {
        // Ratio test, ties broken by lowest basic index.
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, row) in tableau.iter().enumerate() {
            let a = &row[enter];
            if a.is_positive() {
                let ratio = &row[width] / a;
                let better = match &leave {
                    None => true,
                    Some((li, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            // Phase one is bounded below by zero, so an entering column
            // always has a positive entry somewhere.
            unreachable!("unbounded phase-one direction");
        };
        pivot(&mut tableau, &mut reduced, r, enter);
        basis[r] = enter;
    }

    let objective = -reduced[width].clone();
    if objective.is_zero() {
        let mut point = vec![zero.clone(); n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                point[b] = tableau[i][width].clone();
            }
        }
        PhaseOne {
            point: Some(point),
            multipliers: vec![zero; m],
        }
    } else {
        // y_i = c_j − d_j for the column that was basic in row i initially.
        // Rows flipped for a negative rhs keep their support, so the sign
        // change does not matter here.
        let multipliers = initial_basic
            .iter()
            .map(|&j| cost(j) - &reduced[j])
            .collect();
        PhaseOne {
            point: None,
            multipliers,
        }
    }
}

fn pivot(tableau: &mut [Vec<BigRational>], reduced: &mut [BigRational], r: usize, c: usize) {
    let p = tableau[r][c].clone();
    if !p.is_one() {
        for a in tableau[r].iter_mut() {
            if !a.is_zero() {
                *a /= &p;
            }
        }
    }
    let pivot_row = tableau[r].clone();
    let nonzero: Vec<usize> = (0..pivot_row.len())
        .filter(|&j| !pivot_row[j].is_zero())
        .collect();
    for (i, row) in tableau.iter_mut().enumerate() {
        if i == r || row[c].is_zero() {
            continue;
        }
        let f = row[c].clone();
        for &j in &nonzero {
            row[j] -= &f * &pivot_row[j];
        }
    }
    if !reduced[c].is_zero() {
        let f = reduced[c].clone();
        for &j in &nonzero {
            reduced[j] -= &f * &pivot_row[j];
        }
    }
}

type Rows = Vec<(Vec<(usize, BigRational)>, Relation, BigRational)>;

fn lower(system: &ConstraintSystem) -> (Vec<&str>, Rows) {
    let names: Vec<&str> = system.variables().iter().map(|v| v.id.as_str()).collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let rows = system
        .constraints()
        .iter()
        .map(|c| {
            (
                c.terms
                    .iter()
                    .map(|(v, a)| (index[v.as_str()], a.0.clone()))
                    .collect(),
                c.relation,
                c.rhs.0.clone(),
            )
        })
        .collect();
    (names, rows)
}

fn check_size(system: &ConstraintSystem) -> Result<()> {
    let (variables, constraints) = (system.variables().len(), system.constraints().len());
    if variables > MAX_VARIABLES || constraints > MAX_CONSTRAINTS {
        return Err(FeasibilityError::TooLarge {
            variables,
            constraints,
        });
    }
    Ok(())
}

/// Feasibility without witness or certificate.
pub fn is_feasible(system: &ConstraintSystem) -> Result<bool> {
    check_size(system)?;
    let (names, rows) = lower(system);
    Ok(phase_one(names.len(), &rows).point.is_some())
}

fn subset_feasible(n: usize, rows: &Rows, subset: &[usize]) -> bool {
    let picked: Rows = subset.iter().map(|&i| rows[i].clone()).collect();
    phase_one(n, &picked).point.is_some()
}

/// Decides the system exactly.
///
/// A feasible verdict carries a basic feasible solution, checked against
/// every constraint before it is returned. An infeasible verdict carries an
/// irreducible infeasible subset: dropping any one of its constraints makes
/// it feasible.
pub fn solve(system: &ConstraintSystem) -> Result<FeasibilityVerdict> {
    check_size(system)?;
    let (names, rows) = lower(system);
    let n = names.len();
    let result = phase_one(n, &rows);

    if let Some(point) = result.point {
        let witness: BTreeMap<String, Rational> = names
            .iter()
            .zip(point)
            .map(|(name, x)| (name.to_string(), Rational(x)))
            .collect();
        let violated = system.violations(&witness);
        if !violated.is_empty() {
            return Err(FeasibilityError::Inconsistency(format!(
                "simplex witness violates {violated:?}"
            )));
        }
        return Ok(FeasibilityVerdict {
            status: Status::Feasible,
            witness: Some(witness),
            certificate: None,
        });
    }

    let mut core: Vec<usize> = (0..rows.len())
        .filter(|&i| !result.multipliers[i].is_zero())
        .collect();
    if subset_feasible(n, &rows, &core) {
        // The multipliers should always isolate an infeasible subsystem;
        // fall back to filtering the whole system if they do not.
        core = (0..rows.len()).collect();
    }
    let mut i = 0;
    while i < core.len() {
        let mut trial = core.clone();
        trial.remove(i);
        if subset_feasible(n, &rows, &trial) {
            i += 1;
        } else {
            core = trial;
        }
    }
    let certificate = core
        .iter()
        .map(|&i| system.constraints()[i].id.clone())
        .collect();
    Ok(FeasibilityVerdict {
        status: Status::Infeasible,
        witness: None,
        certificate: Some(certificate),
    })
}
