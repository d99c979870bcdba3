//! Dense two-phase primal simplex with Bland's rule.

use crate::compiler::{CanonicalModel, RowBody};
use crate::five_element::Relation;

const PIVOT_EPS: f64 = 1e-9;
const RATIO_EPS: f64 = 1e-12;
const DRIVE_OUT_EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    /// Optimal point in original variable space and canonical objective value.
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("numerical breakdown in simplex (non-finite tableau entry)")]
    NumericalBreakdown,
    #[error("simplex iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("model is not linear")]
    NotLinear,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    /// x = lo + x'
    Shift { col: usize, lo: f64 },
    /// x = hi - x'
    Reflect { col: usize, hi: f64 },
    /// x = x⁺ − x⁻
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    obj: Vec<f64>,
    ncols: usize,
    iterations: usize,
    limit: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) -> Result<(), LpError> {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
                let rhs = row.len() - 1;
                if row[rhs] < 0.0 && row[rhs] > -PIVOT_EPS {
                    row[rhs] = 0.0;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        if self.obj.iter().any(|v| !v.is_finite()) || self.rows.iter().any(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(LpError::NumericalBreakdown);
        }
        Ok(())
    }

    fn run(&mut self, allowed: usize) -> Result<Phase, LpError> {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_EPS) else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = row[self.ncols] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - RATIO_EPS || (ratio <= br + RATIO_EPS && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Phase::Unbounded);
            };
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            self.iterations += 1;
            self.pivot(r, c)?;
        }
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let mut obj = vec![0.0; self.ncols + 1];
        obj[..cost.len()].copy_from_slice(cost);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (o, &v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }
}

/// Solves the LP relaxation of a linear canonical model under the given
/// per-variable bounds. Returns the result and the number of pivots.
pub fn solve_relaxation(
    model: &CanonicalModel,
    lower: &[f64],
    upper: &[f64],
    iteration_limit: usize,
) -> Result<(LpResult, usize), LpError> {
    let objective = model.objective.linear.as_ref().ok_or(LpError::NotLinear)?;
    let n = model.variables.len();
    if (0..n).any(|j| lower[j] > upper[j]) {
        return Ok((LpResult::Infeasible, 0));
    }

    let mut maps = Vec::with_capacity(n);
    let mut ncols_struct = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lower[j], upper[j]);
        let map = if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((ncols_struct, hi - lo));
            }
            Map::Shift { col: ncols_struct, lo }
        } else if hi.is_finite() {
            Map::Reflect { col: ncols_struct, hi }
        } else {
            ncols_struct += 1;
            Map::Split { pos: ncols_struct - 1, neg: ncols_struct }
        };
        ncols_struct += 1;
        maps.push(map);
    }

    let transform = |coeffs: &[(usize, f64)], dense: &mut [f64]| -> f64 {
        let mut shift = 0.0;
        for &(j, a) in coeffs {
            match maps[j] {
                Map::Shift { col, lo } => {
                    dense[col] += a;
                    shift += a * lo;
                }
                Map::Reflect { col, hi } => {
                    dense[col] -= a;
                    shift += a * hi;
                }
                Map::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        shift
    };

    let mut cost = vec![0.0; ncols_struct];
    transform(&objective.coeffs, &mut cost);

    // (dense structural coefficients, relation, rhs)
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for row in &model.constraints {
        let RowBody::Linear(coeffs) = &row.body else {
            return Err(LpError::NotLinear);
        };
        let mut dense = vec![0.0; ncols_struct];
        let shift = transform(coeffs, &mut dense);
        rows.push((dense, row.relation, row.rhs - shift));
    }
    for (col, ub) in bound_rows {
        let mut dense = vec![0.0; ncols_struct];
        dense[col] = 1.0;
        rows.push((dense, Relation::Le, ub));
    }
    for (dense, rel, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            dense.iter_mut().for_each(|v| *v = -*v);
            *rhs = -*rhs;
            *rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let nart = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = ncols_struct + nslack;
    let ncols = art_start + nart;
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        obj: Vec::new(),
        ncols,
        iterations: 0,
        limit: iteration_limit,
    };
    let (mut s, mut a) = (ncols_struct, art_start);
    for (dense, rel, rhs) in rows {
        let mut row = vec![0.0; ncols + 1];
        row[..ncols_struct].copy_from_slice(&dense);
        row[ncols] = rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                tab.basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                tab.basis.push(a);
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                tab.basis.push(a);
                a += 1;
            }
        }
        tab.rows.push(row);
    }
    if tab.rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(LpError::NumericalBreakdown);
    }

    if nart > 0 {
        let mut phase1 = vec![0.0; ncols];
        phase1[art_start..].iter_mut().for_each(|v| *v = 1.0);
        tab.set_objective(&phase1);
        tab.run(ncols)?;
        let infeasibility = -tab.obj[ncols];
        let scale = tab.rows.iter().map(|r| r[ncols].abs()).fold(1.0, f64::max);
        if infeasibility > 1e-7 * scale {
            return Ok((LpResult::Infeasible, tab.iterations));
        }
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= art_start {
                let best = (0..art_start)
                    .map(|j| (j, tab.rows[r][j].abs()))
                    .fold(None::<(usize, f64)>, |acc, (j, v)| match acc {
                        Some((_, bv)) if bv >= v => acc,
                        _ => Some((j, v)),
                    });
                match best {
                    Some((j, v)) if v > DRIVE_OUT_EPS => tab.pivot(r, j)?,
                    _ => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut phase2 = vec![0.0; art_start];
    phase2[..ncols_struct].copy_from_slice(&cost);
    tab.set_objective(&phase2);
    match tab.run(art_start)? {
        Phase::Unbounded => return Ok((LpResult::Unbounded, tab.iterations)),
        Phase::Optimal => {}
    }

    let mut values = vec![0.0; ncols];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        values[b] = row[ncols];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            Map::Shift { col, lo } => lo + values[col],
            Map::Reflect { col, hi } => hi - values[col],
            Map::Split { pos, neg } => values[pos] - values[neg],
        })
        .collect();
    let objective_value = objective.eval(&x);
    if !objective_value.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NumericalBreakdown);
    }
    Ok((LpResult::Optimal { x, objective: objective_value }, tab.iterations))
}
