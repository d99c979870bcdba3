//! Exhaustive enumeration over finite integer domains.

use crate::compiler::{CanonicalModel, FEASIBILITY_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum EnumResult {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    /// The domain product exceeds the limit; nothing was evaluated.
    TooLarge { points: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumError {
    #[error("variable `{0}` is continuous; enumeration needs integer or binary variables")]
    ContinuousVariablePresent(String),
    #[error("variable `{0}` has an unbounded domain")]
    UnboundedDomain(String),
}

/// Visits every point of the integer box in odometer order (last variable
/// fastest) and keeps the first point attaining the smallest objective.
/// Returns the result and the number of points visited.
pub fn enumerate_grid(model: &CanonicalModel, limit: usize) -> Result<(EnumResult, usize), EnumError> {
    let mut ranges = Vec::with_capacity(model.variables.len());
    for v in &model.variables {
        if !v.is_integral() {
            return Err(EnumError::ContinuousVariablePresent(v.name.clone()));
        }
        let (lo, hi) = (v.lower.ceil(), v.upper.floor());
        if !lo.is_finite() || !hi.is_finite() {
            return Err(EnumError::UnboundedDomain(v.name.clone()));
        }
        ranges.push((lo, hi));
    }
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return Ok((EnumResult::Infeasible, 0));
    }
    let points: f64 = ranges.iter().map(|(lo, hi)| hi - lo + 1.0).product();
    if points > limit as f64 {
        return Ok((EnumResult::TooLarge { points }, 0));
    }

    let mut x: Vec<f64> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut visited = 0;
    loop {
        visited += 1;
        let feasible = model.constraints.iter().all(|r| r.relation.holds(r.lhs_value(&x), r.rhs, FEASIBILITY_TOL));
        if feasible {
            let f = model.objective.expr.eval(&x);
            if f.is_finite() && best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((x.clone(), f));
            }
        }
        let mut k = x.len();
        loop {
            if k == 0 {
                return Ok((
                    match best {
                        Some((x, objective)) => EnumResult::Optimal { x, objective },
                        None => EnumResult::Infeasible,
                    },
                    visited,
                ));
            }
            k -= 1;
            if x[k] < ranges[k].1 {
                x[k] += 1.0;
                break;
            }
            x[k] = ranges[k].0;
        }
    }
}
